"""Rendered piecewise-planar stereo scenes with exact ground truth.

Each surface is a world plane turned into a disparity plane for the left
camera, restricted to a support shape given in left-image coordinates and
carrying an analytic colour texture. Both views are rendered by evaluating the
texture at the exact corresponding surface point, so the only mismatch between
the views comes from the optional noise.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import PlaneLabel, StereoPair, plane_from_world


@dataclass
class Surface:
    plane: PlaneLabel
    # axis-aligned ellipse or box in left-image coordinates; None = whole plane
    support: tuple[str, float, float, float, float] | None = None
    base_color: tuple[float, float, float] = (128.0, 128.0, 128.0)
    texture_amp: float = 60.0
    texture_seed: int = 0
    n_waves: int = 24
    min_period: float = 4.0
    max_period: float = 24.0
    _waves: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        rng = np.random.default_rng(self.texture_seed)
        period = np.exp(rng.uniform(np.log(self.min_period), np.log(self.max_period), self.n_waves))
        theta = rng.uniform(0, np.pi, self.n_waves)
        # columns: kx, ky, phase, amp_r, amp_g, amp_b
        waves = np.empty((self.n_waves, 6))
        waves[:, 0] = 2 * np.pi * np.cos(theta) / period
        waves[:, 1] = 2 * np.pi * np.sin(theta) / period
        waves[:, 2] = rng.uniform(0, 2 * np.pi, self.n_waves)
        waves[:, 3:] = rng.normal(size=(self.n_waves, 3))
        waves[:, 3:] *= self.texture_amp / np.sqrt(self.n_waves)
        self._waves = waves

    def disparity(self, u, v):
        p = self.plane
        return p.a * u + p.b * v + p.c

    def contains(self, u, v) -> np.ndarray:
        if self.support is None:
            return np.ones(np.broadcast(u, v).shape, dtype=bool)
        kind, cx, cy, rx, ry = self.support
        if kind == "ellipse":
            return ((u - cx) / rx) ** 2 + ((v - cy) / ry) ** 2 <= 1.0
        return (np.abs(u - cx) <= rx) & (np.abs(v - cy) <= ry)

    def color(self, u, v) -> np.ndarray:
        w = self._waves
        phase = u[..., None] * w[:, 0] + v[..., None] * w[:, 1] + w[:, 2]
        out = np.sin(phase) @ w[:, 3:] + np.asarray(self.base_color)
        return out


@dataclass
class SyntheticScene:
    pair: StereoPair
    gt_left: np.ndarray
    gt_right: np.ndarray
    nonocc_left: np.ndarray
    nonocc_right: np.ndarray
    surfaces: list


def _visible(surfaces, u_left_of, v, view_x):
    """Index and disparity of the nearest surface seen at image column ``view_x``."""
    best_d = np.full(view_x.shape, -np.inf)
    best_i = np.full(view_x.shape, -1)
    best_u = np.zeros(view_x.shape)
    for i, s in enumerate(surfaces):
        u = u_left_of(s, view_x, v)
        d = s.disparity(u, v)
        ok = s.contains(u, v) & (d > 0) & (d > best_d)
        best_d = np.where(ok, d, best_d)
        best_i = np.where(ok, i, best_i)
        best_u = np.where(ok, u, best_u)
    return best_i, best_d, best_u


def _left_coords(s, x, v):
    return x


def _right_coords(s, x, v):
    # left column u whose surface point projects to right column x: u - d(u, v) = x
    p = s.plane
    return (x + p.b * v + p.c) / (1.0 - p.a)


def render(surfaces: list[Surface], width: int, height: int, disp_max: float, noise: float = 0.0,
           seed: int = 0) -> SyntheticScene:
    vv, uu = np.mgrid[0:height, 0:width].astype(np.float64)
    images = []
    gts = []
    for coords in (_left_coords, _right_coords):
        idx, disp, src_u = _visible(surfaces, coords, vv, uu)
        if (idx < 0).any():
            raise ValueError("scene leaves pixels without any surface")
        img = np.zeros((height, width, 3))
        for i, s in enumerate(surfaces):
            sel = idx == i
            img[sel] = s.color(src_u[sel], vv[sel])
        images.append(img)
        gts.append(disp)
    rng = np.random.default_rng(seed)
    if noise > 0:
        images = [im + rng.normal(0.0, noise, im.shape) for im in images]
    images = [np.clip(im, 0.0, 255.0) for im in images]
    gt_left, gt_right = gts
    nonocc_left = _consistent(gt_left, gt_right, -1.0)
    nonocc_right = _consistent(gt_right, gt_left, 1.0)
    pair = StereoPair(images[0], images[1], disp_max)
    return SyntheticScene(pair, gt_left, gt_right, nonocc_left, nonocc_right, list(surfaces))


def _consistent(gt_ref, gt_other, sign, tol=0.5):
    """Pixels whose match lands inside the other image on the same surface."""
    h, w = gt_ref.shape
    vv, uu = np.mgrid[0:h, 0:w]
    x = uu + sign * gt_ref
    inside = (x >= 0) & (x <= w - 1)
    xi = np.clip(np.rint(x).astype(int), 0, w - 1)
    return inside & (np.abs(gt_other[vv, xi] - gt_ref) <= tol)


def world_plane(normal, depth: float, baseline: float, focal: float, cx: float, cy: float) -> PlaneLabel:
    """Disparity plane (pixel coordinates from the image corner) of the world plane n.X = depth."""
    nx, ny, nz = normal
    centered = plane_from_world(nx, ny, nz, depth, baseline, focal)
    return PlaneLabel(centered.a, centered.b, centered.c - centered.a * cx - centered.b * cy)


def three_plane_scene(width: int = 96, height: int = 72, disp_max: float = 24.0, noise: float = 1.0,
                      seed: int = 0) -> SyntheticScene:
    """Slanted background with two slanted foreground patches, all well textured."""
    sx, sy = width / 96.0, height / 72.0
    focal, baseline = 100.0 * sx, 0.1
    cx, cy = width / 2.0, height / 2.0
    background = world_plane((0.15, -0.1, 1.0), 1.6, baseline, focal, cx, cy)
    box = world_plane((-0.3, 0.0, 1.0), 0.8, baseline, focal, cx, cy)
    disc = world_plane((0.1, 0.35, 1.0), 0.55, baseline, focal, cx, cy)
    surfaces = [
        Surface(background, None, (90.0, 110.0, 160.0), 70.0, seed + 1),
        Surface(box, ("box", 32 * sx, 30 * sy, 17 * sx, 15 * sy), (170.0, 120.0, 80.0), 70.0, seed + 2),
        Surface(disc, ("ellipse", 66 * sx, 44 * sy, 14 * sx, 13 * sy), (110.0, 170.0, 90.0), 70.0, seed + 3),
    ]
    return render(surfaces, width, height, disp_max, noise, seed)


def weak_texture_scene(width: int = 96, height: int = 72, disp_max: float = 24.0, noise: float = 3.0,
                       weak_amp: float = 5.0, seed: int = 0) -> SyntheticScene:
    """One large, weakly textured slanted plane with a small textured foreground patch."""
    sx, sy = width / 96.0, height / 72.0
    focal, baseline = 100.0 * sx, 0.1
    cx, cy = width / 2.0, height / 2.0
    background = world_plane((0.25, -0.2, 1.0), 1.2, baseline, focal, cx, cy)
    patch = world_plane((0.0, 0.2, 1.0), 0.6, baseline, focal, cx, cy)
    surfaces = [
        Surface(background, None, (120.0, 130.0, 140.0), weak_amp, seed + 11, min_period=6.0, max_period=30.0),
        Surface(patch, ("box", 20 * sx, 20 * sy, 10 * sx, 10 * sy), (180.0, 90.0, 90.0), 70.0, seed + 12),
    ]
    return render(surfaces, width, height, disp_max, noise, seed)
