"""Left-right consistency check, invalid-pixel filling and weighted median filtering.

Filling and filtering operate on plane labels: a replacement label is chosen by
the disparity its plane extrapolates to at the target pixel, and the label
itself (not just a disparity value) is copied, so the output stays a field of
planes.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from numba import njit

from .core import LabelField, StereoPair


def _disparity(labels: np.ndarray) -> np.ndarray:
    return LabelField(labels).disparity()


def _check(d_ref: np.ndarray, d_other: np.ndarray, sign: float, threshold: float) -> np.ndarray:
    h, w = d_ref.shape
    vv, uu = np.mgrid[0:h, 0:w]
    with np.errstate(invalid="ignore"):
        x = np.floor(uu + sign * d_ref + 0.5)
    inside = np.isfinite(x) & (x >= 0) & (x <= w - 1)
    xi = np.where(inside, x, 0).astype(int)
    diff = np.abs(d_ref - d_other[vv, xi])
    return inside & (diff <= threshold)


def lr_check(f_left: LabelField, f_right: LabelField, threshold: float = 1.0) -> tuple[np.ndarray, np.ndarray]:
    """Validity masks of the left and right fields.

    A left pixel p is valid when its match round(p - d_L(p)) lies in the right
    image and the right disparity there differs by at most ``threshold``;
    right pixels are checked the same way in the opposite direction.
    """
    if f_left.shape != f_right.shape:
        raise ValueError("left and right fields differ in size")
    d_left = f_left.disparity()
    d_right = f_right.disparity()
    return _check(d_left, d_right, -1.0, threshold), _check(d_right, d_left, 1.0, threshold)


def fill_invalid(f: LabelField, mask: np.ndarray) -> LabelField:
    """Replace invalid labels by the neighbouring valid plane that lies further back.

    For each invalid pixel the nearest valid labels to the left and right on
    its row are extrapolated to the pixel; the one giving the lower disparity
    wins. Rows without any valid pixel copy the nearest filled row.
    """
    mask = np.asarray(mask, dtype=bool)
    h, w = f.shape
    if not mask.any():
        warnings.warn("no valid pixels to fill from; label field left unchanged", RuntimeWarning, stacklevel=2)
        return f.copy()
    out = f.labels.copy()
    cols = np.arange(w)
    filled_rows = []
    for v in range(h):
        valid = np.flatnonzero(mask[v])
        if len(valid) == 0:
            continue
        filled_rows.append(v)
        bad = np.flatnonzero(~mask[v])
        if len(bad) == 0:
            continue
        pos = np.searchsorted(valid, bad)
        left = valid[np.clip(pos - 1, 0, len(valid) - 1)]
        right = valid[np.clip(pos, 0, len(valid) - 1)]
        has_left = pos > 0
        has_right = pos < len(valid)
        row = f.labels[v]
        d_left = row[left, 0] * cols[bad] + row[left, 1] * v + row[left, 2]
        d_right = row[right, 0] * cols[bad] + row[right, 1] * v + row[right, 2]
        take_left = has_left & (~has_right | (d_left <= d_right))
        out[v, bad] = np.where(take_left[:, None], row[left], row[right])
    filled_rows = np.array(filled_rows)
    for v in range(h):
        if mask[v].any():
            continue
        src = filled_rows[np.argmin(np.abs(filled_rows - v))]
        out[v] = out[src]
    return LabelField(out, f.view)


@njit(cache=True, nogil=True)
def weighted_median_index(values, weights):
    """Index of the weighted median of ``values``: first sorted element reaching half the total weight."""
    order = np.argsort(values, kind="mergesort")
    total = weights.sum()
    acc = 0.0
    for k in range(order.shape[0]):
        acc += weights[order[k]]
        if acc >= 0.5 * total:
            return order[k]
    return order[-1]


@njit(cache=True, nogil=True)
def _weighted_median(labels, img, invalid, radius, gamma_w, out):
    h, w = labels.shape[0], labels.shape[1]
    n_max = (2 * radius + 1) ** 2
    vals = np.empty(n_max)
    wts = np.empty(n_max)
    src = np.empty((n_max, 2), np.int64)
    for v in range(h):
        for u in range(w):
            if not invalid[v, u]:
                continue
            n = 0
            for qv in range(max(v - radius, 0), min(v + radius + 1, h)):
                for qu in range(max(u - radius, 0), min(u + radius + 1, w)):
                    diff = (abs(img[v, u, 0] - img[qv, qu, 0]) + abs(img[v, u, 1] - img[qv, qu, 1])
                            + abs(img[v, u, 2] - img[qv, qu, 2]))
                    vals[n] = labels[qv, qu, 0] * u + labels[qv, qu, 1] * v + labels[qv, qu, 2]
                    wts[n] = math.exp(-diff / gamma_w)
                    src[n, 0] = qv
                    src[n, 1] = qu
                    n += 1
            k = weighted_median_index(vals[:n], wts[:n])
            out[v, u, 0] = labels[src[k, 0], src[k, 1], 0]
            out[v, u, 1] = labels[src[k, 0], src[k, 1], 1]
            out[v, u, 2] = labels[src[k, 0], src[k, 1], 2]


def weighted_median(f: LabelField, image: np.ndarray, mask: np.ndarray, radius: int = 17,
                    gamma_w: float = 10.0) -> LabelField:
    """Colour-weighted median over a (2*radius+1)^2 window, applied at invalid pixels only.

    ``mask`` marks valid pixels; their labels are returned unchanged.
    """
    if radius < 1:
        raise ValueError("radius must be >= 1")
    out = f.labels.copy()
    invalid = ~np.asarray(mask, dtype=bool)
    _weighted_median(f.labels, np.ascontiguousarray(image, dtype=np.float64), invalid, int(radius),
                     float(gamma_w), out)
    return LabelField(out, f.view)


def postprocess(pair: StereoPair, f_left: LabelField, f_right: LabelField, threshold: float = 1.0,
                radius: int = 17, gamma_w: float = 10.0):
    """Consistency check, filling and median filtering of both views.

    Returns the processed left and right fields and their validity masks.
    """
    valid_left, valid_right = lr_check(f_left, f_right, threshold)
    results = []
    for f, valid, img in ((f_left, valid_left, pair.left), (f_right, valid_right, pair.right)):
        filled = fill_invalid(f, valid)
        results.append(weighted_median(filled, img, valid, radius, gamma_w))
    return results[0], results[1], valid_left, valid_right
