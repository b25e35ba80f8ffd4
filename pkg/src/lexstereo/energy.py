"""Pairwise MRF energy over plane labels.

Data term: slanted-window matching cost aggregated with guided-filter weights.
Smoothness term: truncated curvature penalty between neighbouring planes with a
contrast-sensitive weight. Two evaluation routes exist for the data term: a
literal weight-by-weight sum (slow, used as a reference) and a region route
that filters the raw cost of one shared label over a whole rectangle with box
sums, so each pixel costs O(1) amortised.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import LabelField, MatchParams, PlaneLabel, Rect, SmoothParams, StereoPair, View

# Forward neighbour offsets (dx, dy); the first two form the 4-neighbourhood.
DIRECTIONS = ((1, 0), (0, 1), (1, 1), (-1, 1))


def _box_sums(img: np.ndarray, r: int) -> tuple[np.ndarray, np.ndarray]:
    """Sums over (2r+1)^2 windows clipped at the border, plus the pixel counts."""
    h, w = img.shape[:2]
    integral = np.zeros((h + 1, w + 1) + img.shape[2:])
    integral[1:, 1:] = img.cumsum(0).cumsum(1)
    y0 = np.clip(np.arange(h) - r, 0, h)
    y1 = np.clip(np.arange(h) + r + 1, 0, h)
    x0 = np.clip(np.arange(w) - r, 0, w)
    x1 = np.clip(np.arange(w) + r + 1, 0, w)
    sums = (integral[y1][:, x1] - integral[y0][:, x1] - integral[y1][:, x0] + integral[y0][:, x0])
    counts = np.outer(y1 - y0, x1 - x0).astype(np.float64)
    return sums, counts


def guide_statistics(guide: np.ndarray, r: int, e: float) -> tuple[np.ndarray, np.ndarray]:
    """Per-window colour mean and inverse regularised covariance of a [0, 1] guide."""
    sums, counts = _box_sums(guide, r)
    mu = sums / counts[..., None]
    outer = guide[..., :, None] * guide[..., None, :]
    second, _ = _box_sums(outer.reshape(guide.shape[:2] + (9,)), r)
    cov = second.reshape(guide.shape[:2] + (3, 3)) / counts[..., None, None]
    cov -= mu[..., :, None] * mu[..., None, :]
    cov += e * np.eye(3)
    return np.ascontiguousarray(mu), np.ascontiguousarray(np.linalg.inv(cov))


@dataclass
class EnergyModel:
    """Energy of a label field for one view of a stereo pair.

    ``cost_volume`` (ndisp, H, W), when given, replaces the colour/gradient
    matching cost: the raw cost at a support pixel is read from the volume with
    linear interpolation along disparity.
    """

    pair: StereoPair
    match: MatchParams = field(default_factory=MatchParams)
    smooth: SmoothParams = field(default_factory=SmoothParams)
    view: View = "left"
    cost_volume: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        if self.view not in ("left", "right"):
            raise ValueError(f"unknown view {self.view!r}")
        p = self.pair
        if self.view == "left":
            self.ref, self.other = p.left, p.right
            self.grad_ref, self.grad_other = p.grad_x_left, p.grad_x_right
            self.sign = -1.0
        else:
            self.ref, self.other = p.right, p.left
            self.grad_ref, self.grad_other = p.grad_x_right, p.grad_x_left
            self.sign = 1.0
        self.guide = np.ascontiguousarray(self.ref / 255.0)
        self.mu, self.ainv = guide_statistics(self.guide, self.match.regression_radius, self.match.e)
        self.pair_weights = _pair_weights(self.ref, self.smooth)
        if self.cost_volume is not None:
            vol = np.ascontiguousarray(self.cost_volume, dtype=np.float64)
            if vol.ndim != 3 or vol.shape[1:] != (p.height, p.width):
                raise ValueError(f"cost volume shape {vol.shape} does not match the images")
            self.cost_volume = vol
            self.ceiling = float(vol.max())
        else:
            self.ceiling = self.match.ceiling
        vol = self.cost_volume if self.cost_volume is not None else np.zeros((1, 1, 1))
        self.kernel_arrays = (self.ref, self.other, self.grad_ref, self.grad_other,
                              self.guide, self.mu, self.ainv, vol)
        m = self.match
        self.kernel_params = (self.sign, float(m.tau_col), float(m.tau_grad), float(m.alpha_blend),
                              float(self.ceiling), float(self.cost_volume is not None),
                              float(m.window_radius), float(m.regression_radius), float(p.disp_max))

    @property
    def height(self) -> int:
        return self.pair.height

    @property
    def width(self) -> int:
        return self.pair.width


def _pair_weights(img: np.ndarray, smooth: SmoothParams) -> np.ndarray:
    """max(w_pq, eps) for each forward neighbour direction; 0 where q is outside."""
    h, w = img.shape[:2]
    out = np.zeros((h, w, 4))
    for k, (dx, dy) in enumerate(DIRECTIONS):
        if k >= 2 and smooth.neighborhood == 4:
            break
        ys = slice(0, h - dy)
        xs = slice(max(0, -dx), w - max(0, dx))
        yq = slice(dy, h)
        xq = slice(max(0, dx), w + min(0, dx))
        diff = np.abs(img[ys, xs] - img[yq, xq]).sum(axis=2)
        out[ys, xs, k] = np.maximum(np.exp(-diff / smooth.gamma), smooth.eps)
    return np.ascontiguousarray(out)


# -- numba kernels ------------------------------------------------------------

@njit(cache=True, nogil=True)
def _raw_cost_nb(K, P, u, v, d):
    ref, oth, gref, goth, guide, mu, ainv, vol = K
    ceiling = P[4]
    if P[5] > 0:
        nd = vol.shape[0]
        if not (d >= 0.0 and d <= nd - 1):
            return ceiling
        i0 = int(math.floor(d))
        i1 = min(i0 + 1, nd - 1)
        t = d - i0
        return (1.0 - t) * vol[i0, v, u] + t * vol[i1, v, u]
    w = ref.shape[1]
    x = u + P[0] * d
    if not (x >= 0.0 and x <= w - 1):
        return ceiling
    x0 = int(math.floor(x))
    x1 = min(x0 + 1, w - 1)
    t = x - x0
    col = 0.0
    for ch in range(3):
        col += abs(ref[v, u, ch] - ((1.0 - t) * oth[v, x0, ch] + t * oth[v, x1, ch]))
    grad = abs(gref[v, u] - ((1.0 - t) * goth[v, x0] + t * goth[v, x1]))
    return (1.0 - P[3]) * min(col, P[1]) + P[3] * min(grad, P[2])


@njit(cache=True, nogil=True)
def _region_phi(K, P, la, lb, lc, x0, y0, x1, y1):
    """Raw cost over the dilated region and guided-filter aggregate over the region."""
    ref, oth, gref, goth, guide, mu, ainv, vol = K
    h, w = ref.shape[0], ref.shape[1]
    r = int(P[6])
    rr = int(P[7])
    mx0, my0 = max(x0 - r, 0), max(y0 - r, 0)
    mx1, my1 = min(x1 + r, w), min(y1 + r, h)
    mh, mw = my1 - my0, mx1 - mx0
    rho = np.empty((mh, mw))
    integ = np.zeros((mh + 1, mw + 1, 4))
    for y in range(mh):
        v = y + my0
        run0 = 0.0
        run1 = 0.0
        run2 = 0.0
        run3 = 0.0
        for x in range(mw):
            u = x + mx0
            c = _raw_cost_nb(K, P, u, v, la * u + lb * v + lc)
            rho[y, x] = c
            run0 += c
            run1 += guide[v, u, 0] * c
            run2 += guide[v, u, 1] * c
            run3 += guide[v, u, 2] * c
            integ[y + 1, x + 1, 0] = integ[y, x + 1, 0] + run0
            integ[y + 1, x + 1, 1] = integ[y, x + 1, 1] + run1
            integ[y + 1, x + 1, 2] = integ[y, x + 1, 2] + run2
            integ[y + 1, x + 1, 3] = integ[y, x + 1, 3] + run3

    nominal = float((2 * rr + 1) * (2 * rr + 1))
    kx0, ky0 = max(x0 - rr, 0), max(y0 - rr, 0)
    kx1, ky1 = min(x1 + rr, w), min(y1 + rr, h)
    kh, kw = ky1 - ky0, kx1 - kx0
    integ_ab = np.zeros((kh + 1, kw + 1, 4))
    s = np.empty(4)
    for y in range(kh):
        ky = y + ky0
        wy0 = max(ky - rr, 0) - my0
        wy1 = min(ky + rr + 1, h) - my0
        run = np.zeros(4)
        for x in range(kw):
            kx = x + kx0
            wx0 = max(kx - rr, 0) - mx0
            wx1 = min(kx + rr + 1, w) - mx0
            for ch in range(4):
                s[ch] = (integ[wy1, wx1, ch] - integ[wy0, wx1, ch]
                         - integ[wy1, wx0, ch] + integ[wy0, wx0, ch]) / nominal
            m0 = s[0]
            c0 = s[1] - mu[ky, kx, 0] * m0
            c1 = s[2] - mu[ky, kx, 1] * m0
            c2 = s[3] - mu[ky, kx, 2] * m0
            a0 = ainv[ky, kx, 0, 0] * c0 + ainv[ky, kx, 0, 1] * c1 + ainv[ky, kx, 0, 2] * c2
            a1 = ainv[ky, kx, 1, 0] * c0 + ainv[ky, kx, 1, 1] * c1 + ainv[ky, kx, 1, 2] * c2
            a2 = ainv[ky, kx, 2, 0] * c0 + ainv[ky, kx, 2, 1] * c1 + ainv[ky, kx, 2, 2] * c2
            b = m0 - a0 * mu[ky, kx, 0] - a1 * mu[ky, kx, 1] - a2 * mu[ky, kx, 2]
            run[0] += a0
            run[1] += a1
            run[2] += a2
            run[3] += b
            for ch in range(4):
                integ_ab[y + 1, x + 1, ch] = integ_ab[y, x + 1, ch] + run[ch]

    rh, rw = y1 - y0, x1 - x0
    phi = np.empty((rh, rw))
    for y in range(rh):
        v = y + y0
        wy0 = max(v - rr, 0) - ky0
        wy1 = min(v + rr + 1, h) - ky0
        for x in range(rw):
            u = x + x0
            wx0 = max(u - rr, 0) - kx0
            wx1 = min(u + rr + 1, w) - kx0
            for ch in range(4):
                s[ch] = (integ_ab[wy1, wx1, ch] - integ_ab[wy0, wx1, ch]
                         - integ_ab[wy1, wx0, ch] + integ_ab[wy0, wx0, ch])
            phi[y, x] = (s[0] * guide[v, u, 0] + s[1] * guide[v, u, 1]
                         + s[2] * guide[v, u, 2] + s[3]) / nominal
    return rho, phi


@njit(cache=True, nogil=True)
def _penalize_range(P, la, lb, lc, x0, y0, phi):
    """Labels whose disparity leaves [0, disp_max] at a pixel get the ceiling cost there."""
    dmax = P[8]
    for y in range(phi.shape[0]):
        for x in range(phi.shape[1]):
            d = la * (x + x0) + lb * (y + y0) + lc
            if not (d >= 0.0 and d <= dmax):
                phi[y, x] = P[4]


@njit(cache=True, nogil=True)
def _pixel_costs(K, P, labels, y_start, y_stop, out):
    w = labels.shape[1]
    for v in range(y_start, y_stop):
        for u in range(w):
            la = labels[v, u, 0]
            lb = labels[v, u, 1]
            lc = labels[v, u, 2]
            _, phi = _region_phi(K, P, la, lb, lc, u, v, u + 1, v + 1)
            _penalize_range(P, la, lb, lc, u, v, phi)
            out[v, u] = phi[0, 0]


# -- public API ---------------------------------------------------------------

def warp_point(label: PlaneLabel, s: tuple[float, float], view: View = "left") -> tuple[float, float]:
    """Matching point of support pixel ``s = (u, v)`` in the other image."""
    u, v = s
    d = label.a * u + label.b * v + label.c
    return (u - d, v) if view == "left" else (u + d, v)


def raw_cost(model: EnergyModel, label: PlaneLabel, u: int, v: int) -> float:
    """Truncated colour + gradient dissimilarity between s = (u, v) and its warp."""
    return float(_raw_cost_vec(model, label, np.array([u]), np.array([v]))[0])


def _raw_cost_vec(model: EnergyModel, label: PlaneLabel, uu: np.ndarray, vv: np.ndarray) -> np.ndarray:
    # plain numpy route, kept separate from the kernels it is used to check
    uu = np.asarray(uu)
    vv = np.asarray(vv)
    d = label.a * uu + label.b * vv + label.c
    if model.cost_volume is not None:
        vol = model.cost_volume
        nd = vol.shape[0]
        inside = (d >= 0) & (d <= nd - 1)
        dc = np.clip(d, 0, nd - 1)
        i0 = np.floor(dc).astype(int)
        i1 = np.minimum(i0 + 1, nd - 1)
        t = dc - i0
        val = (1 - t) * vol[i0, vv, uu] + t * vol[i1, vv, uu]
        return np.where(inside, val, model.ceiling)
    w = model.width
    x = uu + model.sign * d
    inside = (x >= 0) & (x <= w - 1)
    xc = np.clip(x, 0, w - 1)
    x0 = np.floor(xc).astype(int)
    x1 = np.minimum(x0 + 1, w - 1)
    t = xc - x0
    oth = (1 - t)[:, None] * model.other[vv, x0] + t[:, None] * model.other[vv, x1]
    goth = (1 - t) * model.grad_other[vv, x0] + t * model.grad_other[vv, x1]
    m = model.match
    col = np.minimum(np.abs(model.ref[vv, uu] - oth).sum(axis=1), m.tau_col)
    grad = np.minimum(np.abs(model.grad_ref[vv, uu] - goth), m.tau_grad)
    return np.where(inside, (1 - m.alpha_blend) * col + m.alpha_blend * grad, model.ceiling)


def guided_weights_naive(model: EnergyModel, u: int, v: int) -> tuple[np.ndarray, Rect]:
    """Adaptive support weights of pixel p = (u, v) over its matching window.

    Evaluates the guided-filter kernel term by term: for every regression
    window containing p, its mean/covariance are computed directly from the
    window pixels. Returns the weight map and the (border-clipped) window it
    covers.
    """
    m = model.match
    h, w = model.height, model.width
    r, rr = m.window_radius, m.regression_radius
    win = Rect(u, v, u + 1, v + 1).dilate(r, w, h)
    weights = np.zeros((win.height, win.width))
    guide = model.guide
    ip = guide[v, u]
    nominal = (2 * rr + 1) ** 2
    for ky in range(max(v - rr, 0), min(v + rr + 1, h)):
        for kx in range(max(u - rr, 0), min(u + rr + 1, w)):
            kw = Rect(kx, ky, kx + 1, ky + 1).dilate(rr, w, h)
            pix = guide[kw.y0:kw.y1, kw.x0:kw.x1].reshape(-1, 3)
            mu = pix.mean(axis=0)
            cov = np.cov(pix, rowvar=False, bias=True) if len(pix) > 1 else np.zeros((3, 3))
            lhs = np.linalg.solve(cov + m.e * np.eye(3), ip - mu)
            contrib = 1.0 + (guide[kw.y0:kw.y1, kw.x0:kw.x1] - mu) @ lhs
            weights[kw.y0 - win.y0:kw.y1 - win.y0, kw.x0 - win.x0:kw.x1 - win.x0] += contrib / nominal**2
    return weights, win


def data_term_naive(model: EnergyModel, label: PlaneLabel, u: int, v: int) -> float:
    weights, win = guided_weights_naive(model, u, v)
    vv, uu = np.mgrid[win.y0:win.y1, win.x0:win.x1]
    rho = _raw_cost_vec(model, label, uu.ravel(), vv.ravel()).reshape(weights.shape)
    return float((weights * rho).sum())


@dataclass
class CostSlice:
    """Raw costs of one label over the filtering region and aggregated costs over the region."""

    region: Rect
    filter_region: Rect
    raw: np.ndarray
    aggregated: np.ndarray


def region_data_costs(model: EnergyModel, label: PlaneLabel, region: Rect) -> CostSlice:
    """Data term of one shared label at every pixel of ``region``, filtered in O(|M|)."""
    if region.area <= 0:
        raise ValueError("empty region")
    if not Rect(0, 0, model.width, model.height).contains(region):
        raise ValueError(f"region {region} lies outside the image")
    rho, phi = _region_phi(model.kernel_arrays, model.kernel_params, label.a, label.b, label.c,
                           region.x0, region.y0, region.x1, region.y1)
    return CostSlice(region, region.dilate(model.match.window_radius, model.width, model.height), rho, phi)


def data_costs(model: EnergyModel, f: LabelField | np.ndarray, workers: int = 1) -> np.ndarray:
    """Per-pixel data cost of the current labels, with the out-of-range ceiling applied."""
    labels = f.labels if isinstance(f, LabelField) else np.ascontiguousarray(f, dtype=np.float64)
    h = labels.shape[0]
    out = np.empty(labels.shape[:2])
    if workers <= 1:
        _pixel_costs(model.kernel_arrays, model.kernel_params, labels, 0, h, out)
        return out
    from concurrent.futures import ThreadPoolExecutor

    bounds = np.linspace(0, h, workers + 1).astype(int)
    with ThreadPoolExecutor(workers) as pool:
        list(pool.map(lambda i: _pixel_costs(model.kernel_arrays, model.kernel_params, labels,
                                             bounds[i], bounds[i + 1], out), range(workers)))
    return out


def smooth_weight(model: EnergyModel, p: tuple[int, int], q: tuple[int, int]) -> float:
    img = model.ref
    diff = float(np.abs(img[p[1], p[0]] - img[q[1], q[0]]).sum())
    return math.exp(-diff / model.smooth.gamma)


def _are_neighbors(p, q, neighborhood: int) -> bool:
    dx, dy = abs(p[0] - q[0]), abs(p[1] - q[1])
    if neighborhood == 4:
        return dx + dy == 1
    return max(dx, dy) == 1


def plane_disagreement(fp: PlaneLabel, fq: PlaneLabel, p, q) -> float:
    """Untruncated curvature penalty: disagreement of the two planes measured at p and at q."""
    dp_p = fp.a * p[0] + fp.b * p[1] + fp.c
    dp_q = fq.a * p[0] + fq.b * p[1] + fq.c
    dq_q = fq.a * q[0] + fq.b * q[1] + fq.c
    dq_p = fp.a * q[0] + fp.b * q[1] + fp.c
    return abs(dp_p - dp_q) + abs(dq_q - dq_p)


def pairwise_term(model: EnergyModel, p, q, fp: PlaneLabel, fq: PlaneLabel) -> float:
    """Smoothness penalty of one neighbouring pair (without the lambda factor)."""
    if not _are_neighbors(p, q, model.smooth.neighborhood):
        raise ValueError(f"{p} and {q} are not neighbours")
    weight = max(smooth_weight(model, p, q), model.smooth.eps)
    return weight * min(plane_disagreement(fp, fq, p, q), model.smooth.tau_dis)


def pairwise_energy(model: EnergyModel, labels: np.ndarray) -> np.ndarray:
    """Per-pixel sum of smoothness penalties to forward neighbours (lambda not applied)."""
    h, w = labels.shape[:2]
    vv, uu = np.mgrid[0:h, 0:w]
    out = np.zeros((h, w))
    ndir = 2 if model.smooth.neighborhood == 4 else 4
    for k in range(ndir):
        dx, dy = DIRECTIONS[k]
        ys = slice(0, h - dy)
        xs = slice(max(0, -dx), w - max(0, dx))
        yq = slice(dy, h)
        xq = slice(max(0, dx), w + min(0, dx))
        fp = labels[ys, xs]
        fq = labels[yq, xq]
        pu, pv = uu[ys, xs], vv[ys, xs]
        qu, qv = uu[yq, xq], vv[yq, xq]
        dis = (np.abs((fp[..., 0] - fq[..., 0]) * pu + (fp[..., 1] - fq[..., 1]) * pv + fp[..., 2] - fq[..., 2])
               + np.abs((fp[..., 0] - fq[..., 0]) * qu + (fp[..., 1] - fq[..., 1]) * qv + fp[..., 2] - fq[..., 2]))
        out[ys, xs] += model.pair_weights[ys, xs, k] * np.minimum(dis, model.smooth.tau_dis)
    return out


def total_energy(model: EnergyModel, f: LabelField, unary: np.ndarray | None = None) -> float:
    """Sum of data costs plus lambda times the smoothness penalties (each pair once).

    ``unary`` may carry precomputed per-pixel data costs of ``f``.
    """
    if f.shape != (model.height, model.width):
        raise ValueError(f"label field {f.shape} does not match image {(model.height, model.width)}")
    if unary is None:
        unary = data_costs(model, f)
    return float(unary.sum() + model.smooth.lam * pairwise_energy(model, f.labels).sum())
