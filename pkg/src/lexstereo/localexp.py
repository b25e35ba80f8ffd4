"""Local expansion moves.

The image is covered by grids of square cells at several sizes. Each cell
(i, j) owns a local alpha-expansion whose candidate label is drawn from the
cell and which may be adopted anywhere in the surrounding 3x3 block of cells.
Cells are split into 16 groups by ``4 * (j % 4) + (i % 4)``; the expansion
regions of one group are separated by at least one cell, so their binary
problems share no edge and run concurrently without changing the result.
"""

from __future__ import annotations

import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .core import NZ_MIN, LabelField, PlaneLabel, Rect, _from_plane, _to_plane, random_label_field
from .energy import DIRECTIONS, EnergyModel, _penalize_range, _region_phi, data_costs, pairwise_energy
from .graphcut import BinarySubproblem, _solve_tables
from .metrics import bad_rate

N_GROUPS = 16
# direction triples available to one perturbation before it gives up on a new normal
_PERTURB_TRIES = 8
_VIEW_ID = {"left": 0, "right": 1}


@dataclass(frozen=True)
class GridLevel:
    cell_size: int
    width: int
    height: int

    @property
    def nx(self) -> int:
        return -(-self.width // self.cell_size)

    @property
    def ny(self) -> int:
        return -(-self.height // self.cell_size)

    def cell(self, i: int, j: int) -> Rect:
        s = self.cell_size
        return Rect(i * s, j * s, min((i + 1) * s, self.width), min((j + 1) * s, self.height))

    @property
    def cells(self) -> list[list[Rect]]:
        """cells[j][i] = C_ij (row j, column i)."""
        return [[self.cell(i, j) for i in range(self.nx)] for j in range(self.ny)]


@dataclass(frozen=True)
class ExpansionUnit:
    level: int
    i: int
    j: int
    center: Rect
    region: Rect
    group: int


def _parse_cell_size(size, width: int) -> int:
    if isinstance(size, str) and size.endswith("%"):
        return max(1, int(round(width * float(size[:-1]) / 100.0)))
    return int(size)


@dataclass
class OptimizerConfig:
    """Schedule of the expansion optimizer.

    Cell sizes are pixels or strings like ``"3%"`` (percent of image width).
    Per-level iteration counts follow the order of ``cell_sizes``.
    """

    cell_sizes: tuple = (5, 15, 25)
    k_prop: tuple = (1, 2, 2)
    k_rans: tuple = (0,)
    k_rand: tuple = (7, 0, 0)
    outer_iters: int = 10
    rd0: float | None = None  # defaults to disp_max / 2
    rn0: float = 1.0
    seed: int = 0
    workers: int = 1
    early_stop: float | None = None
    ransac_threshold: float = 1.0
    ransac_hypotheses: int = 32

    def __post_init__(self):
        n = len(self.cell_sizes)
        if n == 0:
            raise ValueError("at least one grid level is required")
        for name in ("k_prop", "k_rans", "k_rand"):
            counts = tuple(int(c) for c in getattr(self, name))
            if len(counts) == 1:
                counts = counts * n
            if len(counts) != n:
                raise ValueError(f"{name} needs one entry per grid level")
            if min(counts) < 0:
                raise ValueError(f"{name} must be non-negative")
            setattr(self, name, counts)
        if self.outer_iters < 0 or self.workers < 1:
            raise ValueError("outer_iters must be >= 0 and workers >= 1")

    def with_ransac(self, k: int = 1) -> "OptimizerConfig":
        from dataclasses import replace

        return replace(self, k_rans=(k,) * len(self.cell_sizes))


@dataclass
class TraceRecord:
    outer_iter: int
    level: int
    group: int
    seconds: float
    energy: float
    bad_rate: float | None = None
    group_seconds: float = 0.0


@dataclass
class OptimizerState:
    f: LabelField
    costs: np.ndarray
    rd: float
    rn: float
    disp_max: float
    trace: list = field(default_factory=list)


def build_grids(width: int, height: int, cfg: OptimizerConfig) -> list[GridLevel]:
    levels = []
    for size in cfg.cell_sizes:
        s = _parse_cell_size(size, width)
        if s < 1:
            raise ValueError("cell sizes must be >= 1")
        levels.append(GridLevel(s, width, height))
    return levels


def group_index(i: int, j: int) -> int:
    return 4 * (j % 4) + (i % 4)


def expansion_region(grid: GridLevel, i: int, j: int) -> Rect:
    lo = grid.cell(max(i - 1, 0), max(j - 1, 0))
    hi = grid.cell(min(i + 1, grid.nx - 1), min(j + 1, grid.ny - 1))
    return Rect(lo.x0, lo.y0, hi.x1, hi.y1)


def expansion_units(grid: GridLevel, level: int = 0) -> list[list[ExpansionUnit]]:
    """Units of one grid level, bucketed by group index."""
    groups = [[] for _ in range(N_GROUPS)]
    for j in range(grid.ny):
        for i in range(grid.nx):
            k = group_index(i, j)
            groups[k].append(ExpansionUnit(level, i, j, grid.cell(i, j), expansion_region(grid, i, j), k))
    return groups


# -- proposers ----------------------------------------------------------------

def _pixel_in(rect: Rect, index: int) -> tuple[int, int]:
    return rect.x0 + index % rect.width, rect.y0 + index // rect.width


def propose_propagation(state: OptimizerState, center: Rect, rng: np.random.Generator) -> PlaneLabel:
    """Current label of a uniformly drawn pixel of the center cell."""
    if center.area <= 0:
        raise ValueError("empty center region")
    u, v = _pixel_in(center, int(rng.integers(center.area)))
    return state.f[v, u]


def propose_ransac(state: OptimizerState, center: Rect, rng: np.random.Generator,
                   threshold: float = 1.0, hypotheses: int = 32) -> PlaneLabel:
    """Plane fitted to the current disparities of the center cell (LO-RANSAC).

    Three-point hypotheses are scored by inlier count; the best one is refitted
    by least squares on its inliers. Falls back to propagation when no
    non-degenerate sample can be drawn.
    """
    if center.area < 3:
        return propose_propagation(state, center, rng)
    vv, uu = np.mgrid[center.y0:center.y1, center.x0:center.x1]
    lab = state.f.labels[center.y0:center.y1, center.x0:center.x1]
    disp = (lab[..., 0] * uu + lab[..., 1] * vv + lab[..., 2]).ravel()
    A = np.stack([uu.ravel(), vv.ravel(), np.ones(center.area)], axis=1).astype(np.float64)
    finite = np.isfinite(disp)
    # degenerate draws (repeated or collinear points) are discarded and made up from spares
    idx = rng.integers(center.area, size=(4 * hypotheses, 3))
    samples = A[idx]
    ok = ((idx[:, 0] != idx[:, 1]) & (idx[:, 0] != idx[:, 2]) & (idx[:, 1] != idx[:, 2])
          & finite[idx].all(axis=1))
    ok[ok] = np.abs(np.linalg.det(samples[ok])) > 1e-9
    keep = np.flatnonzero(ok)[:hypotheses]
    if len(keep) == 0:
        return propose_propagation(state, center, rng)
    planes = np.linalg.solve(samples[keep], disp[idx[keep]][..., None])[..., 0]
    with np.errstate(invalid="ignore"):
        inliers = finite & (np.abs(planes @ A.T - disp) <= threshold)
    best = inliers[int(np.argmax(inliers.sum(axis=1)))]
    if best.sum() < 3:
        return PlaneLabel.from_array(planes[int(np.argmax(inliers.sum(axis=1)))])
    plane, *_ = np.linalg.lstsq(A[best], disp[best], rcond=None)
    return PlaneLabel.from_array(plane)


@njit(cache=True, nogil=True)
def _perturb_nb(a, b, c, u, v, rd, rn, dmax, draws):
    nx, ny, nz, d = _from_plane(a, b, c, u, v)
    d = d + rd * (2.0 * draws[0] - 1.0)
    d = min(max(d, 0.0), dmax)
    px, py, pz = nx, ny, nz
    if rn > 0:
        for t in range((draws.shape[0] - 1) // 3):
            gx = draws[1 + 3 * t]
            gy = draws[2 + 3 * t]
            gz = draws[3 + 3 * t]
            gn = math.sqrt(gx * gx + gy * gy + gz * gz)
            if gn == 0.0:
                continue
            qx = nx + rn * gx / gn
            qy = ny + rn * gy / gn
            qz = nz + rn * gz / gn
            qn = math.sqrt(qx * qx + qy * qy + qz * qz)
            if qn == 0.0 or abs(qz / qn) < NZ_MIN:
                continue
            if qz < 0:
                qn = -qn
            px, py, pz = qx / qn, qy / qn, qz / qn
            break
    return _to_plane(px, py, pz, d, u, v)


def _perturb_draws(rng: np.random.Generator, n: int) -> np.ndarray:
    draws = np.empty((n, 1 + 3 * _PERTURB_TRIES))
    draws[:, 0] = rng.random(n)
    draws[:, 1:] = rng.normal(size=(n, 3 * _PERTURB_TRIES))
    return draws


def perturb(label: PlaneLabel, u: int, v: int, rd: float, rn: float, rng: np.random.Generator,
            disp_max: float) -> PlaneLabel:
    """Random change of at most ``rd`` in disparity at (u, v) and a normal tilt of length ``rn``."""
    if rd < 0 or rn < 0:
        raise ValueError("perturbation radii must be non-negative")
    draws = _perturb_draws(rng, 1)[0]
    return PlaneLabel(*_perturb_nb(label.a, label.b, label.c, u, v, rd, rn, disp_max, draws))


# -- expansion kernels ----------------------------------------------------------

@njit(cache=True, nogil=True, inline="always")
def _psi(la, lb, lc, ma, mb, mc, pu, pv, qu, qv, tau):
    dp = abs((la - ma) * pu + (lb - mb) * pv + lc - mc)
    dq = abs((la - ma) * qu + (lb - mb) * qv + lc - mc)
    return min(dp + dq, tau)


@njit(cache=True, nogil=True)
def _pair_weight(pw, pu, pv, dx, dy):
    if dy < 0 or (dy == 0 and dx < 0):
        pu += dx
        pv += dy
        dx = -dx
        dy = -dy
    if dy == 0:
        k = 0
    elif dx == 0:
        k = 1
    elif dx == 1:
        k = 2
    else:
        k = 3
    return pw[pv, pu, k]


@njit(cache=True, nogil=True)
def _expansion_tables(pw, lam, tau, ndir, labels, costs, x0, y0, x1, y1, la, lb, lc, phi_a):
    h, w = labels.shape[0], labels.shape[1]
    rw = x1 - x0
    n = rw * (y1 - y0)
    offs_x = np.array([1, 0, 1, -1, -1, 0, -1, 1])
    offs_y = np.array([0, 1, 1, 1, 0, -1, -1, -1])
    if ndir == 2:
        offs_x = np.array([1, 0, -1, 0])
        offs_y = np.array([0, 1, 0, -1])
    nfwd = ndir
    unary = np.empty((n, 2))
    pairs = np.empty((n * nfwd, 2), np.int64)
    tables = np.empty((n * nfwd, 4))
    m = 0
    for pv in range(y0, y1):
        for pu in range(x0, x1):
            i = (pv - y0) * rw + (pu - x0)
            fa = labels[pv, pu, 0]
            fb = labels[pv, pu, 1]
            fc = labels[pv, pu, 2]
            u0 = costs[pv, pu]
            u1 = phi_a[pv - y0, pu - x0]
            for t in range(offs_x.shape[0]):
                qu = pu + offs_x[t]
                qv = pv + offs_y[t]
                if qu < 0 or qu >= w or qv < 0 or qv >= h:
                    continue
                wt = lam * _pair_weight(pw, pu, pv, offs_x[t], offs_y[t])
                ga = labels[qv, qu, 0]
                gb = labels[qv, qu, 1]
                gc = labels[qv, qu, 2]
                inside = qu >= x0 and qu < x1 and qv >= y0 and qv < y1
                if inside:
                    if t >= nfwd:
                        continue
                    pairs[m, 0] = i
                    pairs[m, 1] = (qv - y0) * rw + (qu - x0)
                    tables[m, 0] = wt * _psi(fa, fb, fc, ga, gb, gc, pu, pv, qu, qv, tau)
                    tables[m, 1] = wt * _psi(fa, fb, fc, la, lb, lc, pu, pv, qu, qv, tau)
                    tables[m, 2] = wt * _psi(la, lb, lc, ga, gb, gc, pu, pv, qu, qv, tau)
                    tables[m, 3] = 0.0
                    m += 1
                else:
                    u0 += wt * _psi(fa, fb, fc, ga, gb, gc, pu, pv, qu, qv, tau)
                    u1 += wt * _psi(la, lb, lc, ga, gb, gc, pu, pv, qu, qv, tau)
            unary[i, 0] = u0
            unary[i, 1] = u1
    return unary, pairs[:m], tables[:m]


@njit(cache=True, nogil=True)
def _tables_energy(unary, pairs, tables, x):
    e = 0.0
    for i in range(unary.shape[0]):
        e += unary[i, x[i]]
    for k in range(pairs.shape[0]):
        e += tables[k, 2 * x[pairs[k, 0]] + x[pairs[k, 1]]]
    return e


@njit(cache=True, nogil=True)
def _expand(K, P, lam, tau, ndir, pw, labels, costs, x0, y0, x1, y1, la, lb, lc):
    """One local alpha-expansion over [x0, x1) x [y0, y1). Returns the number of labels changed."""
    _, phi = _region_phi(K, P, la, lb, lc, x0, y0, x1, y1)
    _penalize_range(P, la, lb, lc, x0, y0, phi)
    unary, pairs, tables = _expansion_tables(pw, lam, tau, ndir, labels, costs, x0, y0, x1, y1, la, lb, lc, phi)
    x = _solve_tables(unary, pairs, tables)
    keep = np.zeros(unary.shape[0], np.int8)
    if not _tables_energy(unary, pairs, tables, x) < _tables_energy(unary, pairs, tables, keep):
        return 0
    rw = x1 - x0
    switched = 0
    for i in range(x.shape[0]):
        if x[i] == 1:
            u = x0 + i % rw
            v = y0 + i // rw
            if labels[v, u, 0] == la and labels[v, u, 1] == lb and labels[v, u, 2] == lc:
                continue
            labels[v, u, 0] = la
            labels[v, u, 1] = lb
            labels[v, u, 2] = lc
            costs[v, u] = phi[i // rw, i % rw]
            switched += 1
    return switched


@njit(cache=True, nogil=True)
def _expansion_steps(K, P, lam, tau, ndir, pw, labels, costs, region, center, picks, draws,
                     do_perturb, rd, rn):
    """Propagation (or, with ``do_perturb``, perturbation) expansions for one unit."""
    x0, y0, x1, y1 = region
    cx0, cy0, cx1, cy1 = center
    cw = cx1 - cx0
    accepted = 0
    for t in range(picks.shape[0]):
        u = cx0 + picks[t] % cw
        v = cy0 + picks[t] // cw
        la = labels[v, u, 0]
        lb = labels[v, u, 1]
        lc = labels[v, u, 2]
        if do_perturb:
            la, lb, lc = _perturb_nb(la, lb, lc, u, v, rd, rn, P[8], draws[t])
            rd *= 0.5
            rn *= 0.5
        if _expand(K, P, lam, tau, ndir, pw, labels, costs, x0, y0, x1, y1, la, lb, lc) > 0:
            accepted += 1
    return accepted


def _ndir(model: EnergyModel) -> int:
    return 2 if model.smooth.neighborhood == 4 else 4


def build_subproblem(model: EnergyModel, f: LabelField, region: Rect, alpha: PlaneLabel, data_costs_alpha,
                     current_costs: np.ndarray | None = None) -> BinarySubproblem:
    """Keep/switch problem of one local expansion.

    Pairs with one end outside ``region`` are folded into the unary costs of
    the inside pixel; pairs entirely outside are constant and dropped.
    """
    if region.area <= 0:
        raise ValueError("empty expansion region")
    phi = np.array(data_costs_alpha.aggregated, dtype=np.float64)
    _penalize_range(model.kernel_params, alpha.a, alpha.b, alpha.c, region.x0, region.y0, phi)
    if current_costs is None:
        current_costs = data_costs(model, f)
    unary, pairs, tables = _expansion_tables(
        model.pair_weights, float(model.smooth.lam), float(model.smooth.tau_dis), _ndir(model), f.labels,
        np.ascontiguousarray(current_costs, dtype=np.float64), region.x0, region.y0, region.x1, region.y1,
        alpha.a, alpha.b, alpha.c, phi)
    vv, uu = np.mgrid[region.y0:region.y1, region.x0:region.x1]
    pixels = np.stack([uu.ravel(), vv.ravel()], axis=1)
    return BinarySubproblem(pixels, unary, pairs, tables)


def local_alpha_expansion(model: EnergyModel, state: OptimizerState, unit: ExpansionUnit,
                          alpha: PlaneLabel) -> bool:
    """Let every pixel of the unit's expansion region switch to ``alpha`` where that lowers the energy."""
    r = unit.region
    n = _expand(model.kernel_arrays, model.kernel_params, float(model.smooth.lam), float(model.smooth.tau_dis),
                _ndir(model), model.pair_weights, state.f.labels, state.costs, r.x0, r.y0, r.x1, r.y1,
                float(alpha.a), float(alpha.b), float(alpha.c))
    return n > 0


def unit_rng(seed: int, view: str, outer_iter: int, unit: ExpansionUnit) -> np.random.Generator:
    return np.random.default_rng([seed, _VIEW_ID[view], outer_iter, unit.level, unit.i, unit.j])


def iterative_expansion(model: EnergyModel, state: OptimizerState, unit: ExpansionUnit, cfg: OptimizerConfig,
                        rng: np.random.Generator) -> int:
    """Propagation, RANSAC and perturbation expansions for one cell, in that order."""
    lvl = unit.level
    k_prop, k_rans, k_rand = cfg.k_prop[lvl], cfg.k_rans[lvl], cfg.k_rand[lvl]
    args = (model.kernel_arrays, model.kernel_params, float(model.smooth.lam), float(model.smooth.tau_dis),
            _ndir(model), model.pair_weights, state.f.labels, state.costs, tuple(unit.region), tuple(unit.center))
    area = unit.center.area
    accepted = 0
    if k_prop:
        picks = rng.integers(area, size=k_prop)
        accepted += _expansion_steps(*args, picks, np.zeros((k_prop, 1)), False, 0.0, 0.0)
    for _ in range(k_rans):
        alpha = propose_ransac(state, unit.center, rng, cfg.ransac_threshold, cfg.ransac_hypotheses)
        accepted += local_alpha_expansion(model, state, unit, alpha)
    if k_rand:
        picks = rng.integers(area, size=k_rand)
        accepted += _expansion_steps(*args, picks, _perturb_draws(rng, k_rand), True, state.rd, state.rn)
    return accepted


def current_energy(model: EnergyModel, state: OptimizerState) -> float:
    return float(state.costs.sum() + model.smooth.lam * pairwise_energy(model, state.f.labels).sum())


def init_state(model: EnergyModel, cfg: OptimizerConfig, init: LabelField | None = None) -> OptimizerState:
    disp_max = model.pair.disp_max
    if init is None:
        rng = np.random.default_rng([cfg.seed, _VIEW_ID[model.view], 0x1417])
        init = random_label_field(rng, model.height, model.width, disp_max, model.view)
    else:
        init = init.copy()
    costs = data_costs(model, init, workers=cfg.workers)
    rd = disp_max / 2.0 if cfg.rd0 is None else cfg.rd0
    return OptimizerState(init, costs, rd, cfg.rn0, disp_max)


def optimize(model: EnergyModel, cfg: OptimizerConfig, ground_truth: np.ndarray | None = None,
             eval_mask: np.ndarray | None = None, init: LabelField | None = None,
             threshold: float = 2.0) -> tuple[LabelField, list[TraceRecord]]:
    """Random initialisation followed by grouped local expansions over all grid levels.

    One trace record is written after every group; ``bad_rate`` is filled in
    when a ground-truth disparity map is supplied.
    """
    start = time.perf_counter()
    state = init_state(model, cfg, init)
    grids = build_grids(model.width, model.height, cfg)
    units = [expansion_units(g, lvl) for lvl, g in enumerate(grids)]
    pool = ThreadPoolExecutor(cfg.workers) if cfg.workers > 1 else None
    prev_energy = current_energy(model, state)
    try:
        for it in range(cfg.outer_iters):
            for lvl in range(len(grids)):
                for k in range(N_GROUPS):
                    group = units[lvl][k]

                    def run(unit, it=it):
                        iterative_expansion(model, state, unit, cfg, unit_rng(cfg.seed, model.view, it, unit))

                    t0 = time.perf_counter()
                    if pool is None:
                        for unit in group:
                            run(unit)
                    else:
                        list(pool.map(run, group))
                    t1 = time.perf_counter()
                    err = None
                    if ground_truth is not None:
                        err = bad_rate(state.f.disparity(), ground_truth, eval_mask, threshold)
                    state.trace.append(TraceRecord(it, lvl, k, time.perf_counter() - start,
                                                   current_energy(model, state), err, t1 - t0))
            state.rd *= 0.5
            state.rn *= 0.5
            energy = state.trace[-1].energy if state.trace else prev_energy
            if cfg.early_stop is not None and prev_energy - energy < cfg.early_stop * abs(prev_energy):
                break
            prev_energy = energy
    finally:
        if pool is not None:
            pool.shutdown()
    return state.f, state.trace
