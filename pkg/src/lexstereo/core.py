"""Value types for plane-label stereo: image pairs, disparity planes, label fields, parameters."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal, NamedTuple

import numpy as np
from numba import njit

View = Literal["left", "right"]

# |n_z| lower bound for plane normals; smaller values give unbounded slopes.
NZ_MIN = 1e-4

LUMA = np.array([0.299, 0.587, 0.114])


class DegeneratePlaneError(ValueError):
    pass


def grayscale(img: np.ndarray) -> np.ndarray:
    return np.asarray(img, dtype=np.float64) @ LUMA


def gradient_x(gray: np.ndarray) -> np.ndarray:
    """Horizontal derivative with the [-0.5, 0, 0.5] kernel, replicated borders."""
    padded = np.pad(gray, ((0, 0), (1, 1)), mode="edge")
    return 0.5 * (padded[:, 2:] - padded[:, :-2])


@dataclass
class StereoPair:
    left: np.ndarray
    right: np.ndarray
    disp_max: float
    grad_x_left: np.ndarray = field(default=None, repr=False)
    grad_x_right: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        self.left = np.ascontiguousarray(self.left, dtype=np.float64)
        self.right = np.ascontiguousarray(self.right, dtype=np.float64)
        if self.left.ndim == 2:
            self.left = np.repeat(self.left[:, :, None], 3, axis=2)
        if self.right.ndim == 2:
            self.right = np.repeat(self.right[:, :, None], 3, axis=2)
        if self.left.shape != self.right.shape:
            raise ValueError(f"image shapes differ: {self.left.shape} vs {self.right.shape}")
        if self.left.shape[2] != 3:
            raise ValueError("expected 3-channel color images")
        if not self.disp_max > 0:
            raise ValueError("disp_max must be positive")
        self.disp_max = float(self.disp_max)
        if self.grad_x_left is None:
            self.grad_x_left = gradient_x(grayscale(self.left))
        if self.grad_x_right is None:
            self.grad_x_right = gradient_x(grayscale(self.right))

    @property
    def height(self) -> int:
        return self.left.shape[0]

    @property
    def width(self) -> int:
        return self.left.shape[1]

    def image(self, view: View) -> np.ndarray:
        return self.left if view == "left" else self.right


@dataclass(frozen=True)
class PlaneLabel:
    """Disparity plane d(u, v) = a*u + b*v + c."""

    a: float
    b: float
    c: float

    def __post_init__(self):
        # kernels are compiled per argument type, so keep coefficients as plain floats
        for name in ("a", "b", "c"):
            object.__setattr__(self, name, float(getattr(self, name)))

    def __iter__(self):
        return iter((self.a, self.b, self.c))

    def as_array(self) -> np.ndarray:
        return np.array([self.a, self.b, self.c])

    @classmethod
    def from_array(cls, arr) -> "PlaneLabel":
        return cls(float(arr[0]), float(arr[1]), float(arr[2]))


@dataclass(frozen=True)
class NormalDisparity:
    n: tuple[float, float, float]
    d: float

    def __post_init__(self):
        norm = math.sqrt(sum(x * x for x in self.n))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"normal is not unit length (|n| = {norm})")


@dataclass
class LabelField:
    """Per-pixel plane labels, stored as an (H, W, 3) array of (a, b, c)."""

    labels: np.ndarray
    view: View = "left"

    def __post_init__(self):
        self.labels = np.ascontiguousarray(self.labels, dtype=np.float64)
        if self.labels.ndim != 3 or self.labels.shape[2] != 3:
            raise ValueError("labels must have shape (H, W, 3)")

    @property
    def shape(self) -> tuple[int, int]:
        return self.labels.shape[:2]

    def __getitem__(self, vu) -> PlaneLabel:
        v, u = vu
        return PlaneLabel.from_array(self.labels[v, u])

    def disparity(self) -> np.ndarray:
        h, w = self.shape
        vv, uu = np.mgrid[0:h, 0:w]
        lab = self.labels
        return lab[..., 0] * uu + lab[..., 1] * vv + lab[..., 2]

    def copy(self) -> "LabelField":
        return LabelField(self.labels.copy(), self.view)

    @classmethod
    def constant(cls, height: int, width: int, label: PlaneLabel, view: View = "left") -> "LabelField":
        lab = np.empty((height, width, 3))
        lab[:] = label.as_array()
        return cls(lab, view)


@dataclass
class MatchParams:
    e: float = 0.01**2
    tau_col: float = 10.0
    tau_grad: float = 2.0
    alpha_blend: float = 0.9
    window_radius: int = 20
    regression_radius: int | None = None

    def __post_init__(self):
        if self.regression_radius is None:
            self.regression_radius = self.window_radius // 2
        if self.tau_col < 0 or self.tau_grad < 0:
            raise ValueError("truncation thresholds must be non-negative")
        if not 0.0 <= self.alpha_blend <= 1.0:
            raise ValueError("alpha_blend must lie in [0, 1]")
        if self.window_radius < 0 or self.regression_radius < 0:
            raise ValueError("radii must be non-negative")
        if 2 * self.regression_radius > self.window_radius:
            raise ValueError("regression windows must fit inside the matching window")

    @property
    def ceiling(self) -> float:
        """Largest value the truncated raw cost can take."""
        return (1 - self.alpha_blend) * self.tau_col + self.alpha_blend * self.tau_grad


@dataclass
class SmoothParams:
    lam: float = 1.0
    tau_dis: float = 1.0
    eps: float = 0.01
    gamma: float = 10.0
    neighborhood: int = 8

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lambda must be non-negative")
        if not self.tau_dis > 0:
            raise ValueError("tau_dis must be positive")
        if not 0 < self.eps <= 1:
            raise ValueError("eps must lie in (0, 1]")
        if not self.gamma > 0:
            raise ValueError("gamma must be positive")
        if self.neighborhood not in (4, 8):
            raise ValueError("neighborhood must be 4 or 8")


def disparity_at(label: PlaneLabel, u: float, v: float) -> float:
    return label.a * u + label.b * v + label.c


def plane_from_world(ap: float, bp: float, cp: float, hp: float, baseline: float, focal: float) -> PlaneLabel:
    """Disparity plane induced by the world plane ap*x + bp*y + cp*z = hp."""
    if hp == 0:
        raise DegeneratePlaneError("world plane passes through the camera center (hp = 0)")
    return PlaneLabel(baseline * ap / hp, baseline * bp / hp, baseline * focal * cp / hp)


@njit(cache=True, nogil=True)
def _to_plane(nx, ny, nz, d, u, v):
    a = -nx / nz
    b = -ny / nz
    c = (nx * u + ny * v + nz * d) / nz
    return a, b, c


@njit(cache=True, nogil=True)
def _from_plane(a, b, c, u, v):
    norm = math.sqrt(a * a + b * b + 1.0)
    return -a / norm, -b / norm, 1.0 / norm, a * u + b * v + c


def to_plane(nd: NormalDisparity, u: float, v: float) -> PlaneLabel:
    nx, ny, nz = nd.n
    if abs(nz) < NZ_MIN:
        raise DegeneratePlaneError(f"|n_z| = {abs(nz):g} is below {NZ_MIN:g}")
    return PlaneLabel(*_to_plane(nx, ny, nz, nd.d, u, v))


def from_plane(label: PlaneLabel, u: float, v: float) -> NormalDisparity:
    nx, ny, nz, d = _from_plane(label.a, label.b, label.c, u, v)
    return NormalDisparity((nx, ny, nz), d)


def random_unit_normal(rng: np.random.Generator) -> tuple[float, float, float]:
    """Uniform direction on the sphere with |n_z| >= NZ_MIN, returned with n_z > 0."""
    while True:
        n = rng.normal(size=3)
        norm = float(np.linalg.norm(n))
        if norm == 0.0:
            continue
        n = n / norm
        if abs(n[2]) >= NZ_MIN:
            if n[2] < 0:
                n = -n
            return float(n[0]), float(n[1]), float(n[2])


def random_plane(rng: np.random.Generator, u: float, v: float, disp_max: float) -> PlaneLabel:
    if not disp_max > 0:
        raise ValueError("disp_max must be positive")
    d = float(rng.uniform(0.0, disp_max))
    n = random_unit_normal(rng)
    return to_plane(NormalDisparity(n, d), u, v)


def random_label_field(rng: np.random.Generator, height: int, width: int, disp_max: float,
                       view: View = "left") -> LabelField:
    """Vectorised random_plane for every pixel of an image."""
    d = rng.uniform(0.0, disp_max, size=(height, width))
    n = rng.normal(size=(height, width, 3))
    n /= np.linalg.norm(n, axis=2, keepdims=True)
    bad = np.abs(n[..., 2]) < NZ_MIN
    while bad.any():
        redraw = rng.normal(size=(int(bad.sum()), 3))
        n[bad] = redraw / np.linalg.norm(redraw, axis=1, keepdims=True)
        bad = np.abs(n[..., 2]) < NZ_MIN
    n[n[..., 2] < 0] *= -1
    vv, uu = np.mgrid[0:height, 0:width]
    labels = np.empty((height, width, 3))
    labels[..., 0] = -n[..., 0] / n[..., 2]
    labels[..., 1] = -n[..., 1] / n[..., 2]
    labels[..., 2] = (n[..., 0] * uu + n[..., 1] * vv + n[..., 2] * d) / n[..., 2]
    return LabelField(labels, view)


class Rect(NamedTuple):
    """Half-open pixel rectangle [x0, x1) x [y0, y1)."""

    x0: int
    y0: int
    x1: int
    y1: int

    @property
    def width(self) -> int:
        return self.x1 - self.x0

    @property
    def height(self) -> int:
        return self.y1 - self.y0

    @property
    def area(self) -> int:
        return max(self.width, 0) * max(self.height, 0)

    def dilate(self, r: int, width: int, height: int) -> "Rect":
        return Rect(max(self.x0 - r, 0), max(self.y0 - r, 0), min(self.x1 + r, width), min(self.y1 + r, height))

    def contains(self, other: "Rect") -> bool:
        return self.x0 <= other.x0 and self.y0 <= other.y0 and other.x1 <= self.x1 and other.y1 <= self.y1
