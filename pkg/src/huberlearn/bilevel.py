"""Upper-level drivers: cost landscapes over weight grids, argmin extraction,
golden-section refinement and (gamma, eps) sweeps.
"""

from __future__ import annotations

import itertools
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .costs import CostKind
from .grid import as_image, check_same_grid, fingerprint, psnr
from .solver import RegularizerKind, SolverConfig, SolverDivergedError, SolverResult, solve

log = logging.getLogger(__name__)

_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def u_grid_values() -> np.ndarray:
    """The 51-value weight range ``{0.001, 0.01, 0.02, ..., 0.5}``."""
    return np.concatenate(([0.001], np.round(np.arange(1, 51) * 0.01, 10)))


class AlphaGrid:
    """One or two strictly increasing axes of positive weights.

    Axis order follows the weight vector: ``axes[0]`` holds the first weight
    (``alpha_1``), ``axes[1]`` the second (``alpha_2``).
    """

    def __init__(self, *axes):
        if len(axes) == 1 and isinstance(axes[0], (list, tuple)) and axes[0] and np.ndim(axes[0][0]) == 1:
            axes = tuple(axes[0])
        if len(axes) not in (1, 2):
            raise ValueError("AlphaGrid needs 1 or 2 axes")
        out = []
        for a in axes:
            a = np.asarray(a, dtype=np.float64).ravel()
            if a.size == 0:
                raise ValueError("empty grid axis")
            if not np.all(np.isfinite(a)) or np.any(a <= 0):
                raise ValueError("grid values must be finite and > 0")
            if np.any(np.diff(a) <= 0):
                raise ValueError("grid axes must be strictly increasing")
            out.append(a)
        self.axes = tuple(out)

    @classmethod
    def builtin(cls, name: str, arity: int = 1) -> "AlphaGrid":
        if name != "paperU":
            raise ValueError(f"unknown builtin grid {name!r}")
        u = u_grid_values()
        return cls(*([u] * arity))

    @property
    def shape(self) -> tuple:
        return tuple(a.size for a in self.axes)

    @property
    def ndim(self) -> int:
        return len(self.axes)

    def __len__(self) -> int:
        return int(np.prod(self.shape))

    def indices(self):
        return itertools.product(*(range(n) for n in self.shape))

    def point(self, idx) -> tuple:
        return tuple(float(a[i]) for a, i in zip(self.axes, idx))

    def scaled(self, factor: float) -> "AlphaGrid":
        return AlphaGrid(*(a * factor for a in self.axes))

    def __eq__(self, other) -> bool:
        return isinstance(other, AlphaGrid) and len(self.axes) == len(other.axes) and all(
            np.array_equal(a, b) for a, b in zip(self.axes, other.axes)
        )

    def __repr__(self) -> str:
        return f"AlphaGrid(shape={self.shape})"


@dataclass
class Landscape:
    grid: AlphaGrid
    cost_values: np.ndarray
    psnr: np.ndarray
    iterations: np.ndarray
    rel_gap: np.ndarray
    converged: np.ndarray
    meta: dict = field(default_factory=dict)

    def rows(self):
        """Row-major records ``(point, cost, psnr, iterations, rel_gap, converged)``."""
        for idx in self.grid.indices():
            yield (self.grid.point(idx), float(self.cost_values[idx]), float(self.psnr[idx]),
                   int(self.iterations[idx]), float(self.rel_gap[idx]), bool(self.converged[idx]))


class NoConvergedPointError(RuntimeError):
    pass


def _kind_arity(kind: RegularizerKind) -> int:
    return 1 if kind is RegularizerKind.TV else 2


def _chains(grid: AlphaGrid, warm_start: bool):
    """Work items: whole rows when warm starting, single points otherwise."""
    idx = list(grid.indices())
    if not warm_start:
        return [[i] for i in idx]
    if grid.ndim == 1:
        return [idx]
    n1 = grid.shape[1]
    return [idx[r * n1 : (r + 1) * n1] for r in range(grid.shape[0])]


def _run_chain(kind, f, f0, grid, chain, gamma, eps, cost, cfg):
    out = []
    prev: Optional[SolverResult] = None
    for idx in chain:
        alpha = grid.point(idx)
        try:
            res = solve(kind, f, alpha if len(alpha) > 1 else alpha[0], gamma, eps, cfg, warm_start=prev)
        except SolverDivergedError as exc:
            log.warning("solve diverged at %s (iteration %d)", alpha, exc.iteration)
            out.append((idx, math.nan, math.nan, exc.iteration, math.inf, False))
            prev = None
            continue
        out.append((idx, cost(res.u, f0), psnr(res.u, f0), res.iterations, res.rel_gap, res.converged))
        prev = res
    return out


def landscape(kind: RegularizerKind, f, f0, grid: AlphaGrid, gamma: float, eps: float,
              cost: CostKind, cfg: Optional[SolverConfig] = None, warm_start: bool = True,
              workers: int = 1) -> Landscape:
    """Lower-level solve and upper-level cost at every grid point.

    Warm starts follow rows of the grid (the last axis).  With ``workers > 1``
    independent work items run in separate processes; results are keyed by
    grid index, so the output does not depend on scheduling.
    """
    f = as_image(f, "f")
    f0 = as_image(f0, "f0")
    check_same_grid(f, f0)
    if grid.ndim != _kind_arity(kind):
        raise ValueError(f"{kind.name} needs a {_kind_arity(kind)}-axis grid, got {grid.ndim}")
    cfg = cfg or SolverConfig()
    chains = _chains(grid, warm_start)
    if workers > 1 and len(chains) > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            futs = [ex.submit(_run_chain, kind, f, f0, grid, c, gamma, eps, cost, cfg) for c in chains]
            parts = [fu.result() for fu in futs]
    else:
        parts = [_run_chain(kind, f, f0, grid, c, gamma, eps, cost, cfg) for c in chains]
    shape = grid.shape
    cv = np.full(shape, np.nan)
    ps = np.full(shape, np.nan)
    its = np.zeros(shape, dtype=np.int64)
    gaps = np.full(shape, np.inf)
    conv = np.zeros(shape, dtype=bool)
    for part in parts:
        for idx, c, p, it, g, ok in part:
            cv[idx], ps[idx], its[idx], gaps[idx], conv[idx] = c, p, it, g, ok
    if not conv.any():
        raise NoConvergedPointError("no grid point converged")
    meta = {
        "kind": kind.name,
        "cost": cost.label(),
        "gamma": gamma,
        "eps": eps,
        "warm_start": warm_start,
        "f": fingerprint(f),
        "f0": fingerprint(f0),
    }
    return Landscape(grid, cv, ps, its, gaps, conv, meta)


def argmin_landscape(ls: Landscape):
    """Minimal-cost converged grid point.

    Returns ``(alpha, interior, index)``.  Ties go to the lexicographically
    smallest index; ``interior`` is False when any index sits on an end of
    its axis.
    """
    best_idx, best_val = None, math.inf
    for idx in ls.grid.indices():
        if ls.converged[idx] and ls.cost_values[idx] < best_val:
            best_idx, best_val = idx, float(ls.cost_values[idx])
    if best_idx is None:
        raise NoConvergedPointError("no converged grid point")
    interior = all(0 < i < n - 1 for i, n in zip(best_idx, ls.grid.shape))
    return ls.grid.point(best_idx), interior, best_idx


def _count_extra_minima(values: np.ndarray) -> int:
    v = values[np.isfinite(values)]
    if v.size < 3:
        return 0
    # collapse plateaus, then count strict local minima beyond the first
    keep = np.concatenate(([True], np.diff(v) != 0))
    v = v[keep]
    if v.size < 3:
        return 0
    d = np.sign(np.diff(v))
    minima = int(np.sum((d[:-1] < 0) & (d[1:] > 0)))
    if d[0] > 0:
        minima += 1
    if d[-1] < 0:
        minima += 1
    return max(minima - 1, 0)


def unimodality_violations(ls: Landscape) -> int:
    """Number of local minima beyond the first along each grid line.

    Zero for a landscape that is quasiconvex along every axis.
    """
    cv = np.where(ls.converged, ls.cost_values, np.nan)
    if cv.ndim == 1:
        return _count_extra_minima(cv)
    return sum(_count_extra_minima(cv[i, :]) for i in range(cv.shape[0])) + sum(
        _count_extra_minima(cv[:, j]) for j in range(cv.shape[1])
    )


@dataclass
class RefineResult:
    alpha: tuple
    cost: float
    start_cost: float
    evaluations: int
    failed: bool = False


def refine(kind: RegularizerKind, f, f0, start, gamma: float, eps: float, cost: CostKind,
           cfg: Optional[SolverConfig] = None, radius: float = 0.01, tol: float = 1e-4,
           max_passes: int = 20) -> RefineResult:
    """Coordinate-wise golden-section search around ``start``.

    Each coordinate is searched on ``[max(c - radius, tol), c + radius]``.
    The best evaluated point is returned, so the cost never exceeds the cost
    at ``start``.
    """
    start = tuple(float(a) for a in np.atleast_1d(start))
    if any(a <= 0 for a in start):
        raise ValueError("start must be strictly positive")
    if not radius > tol > 0:
        raise ValueError("need radius > tol > 0")
    f = as_image(f, "f")
    f0 = as_image(f0, "f0")
    cfg = cfg or SolverConfig()
    cache: dict = {}
    failed = False

    def evaluate(alpha):
        nonlocal failed
        key = tuple(alpha)
        if key not in cache:
            try:
                res = solve(kind, f, key if len(key) > 1 else key[0], gamma, eps, cfg)
                cache[key] = cost(res.u, f0) if res.converged else math.inf
                if not res.converged:
                    failed = True
            except SolverDivergedError:
                failed = True
                cache[key] = math.inf
        return cache[key]

    x = list(start)
    start_cost = evaluate(start)
    best, best_cost = tuple(x), start_cost
    for _ in range(max_passes):
        moved = 0.0
        for j in range(len(x)):
            lo, hi = max(start[j] - radius, tol), start[j] + radius

            def phi(t):
                y = list(best)
                y[j] = t
                return evaluate(tuple(y))

            a, b = lo, hi
            c1, c2 = b - _GOLDEN * (b - a), a + _GOLDEN * (b - a)
            v1, v2 = phi(c1), phi(c2)
            while b - a > tol:
                if v1 <= v2:
                    b, c2, v2 = c2, c1, v1
                    c1 = b - _GOLDEN * (b - a)
                    v1 = phi(c1)
                else:
                    a, c1, v1 = c1, c2, v2
                    c2 = a + _GOLDEN * (b - a)
                    v2 = phi(c2)
            for t in (a, b, c1, c2):
                val = phi(t)
                if val < best_cost:
                    moved = max(moved, abs(t - best[j]))
                    y = list(best)
                    y[j] = t
                    best, best_cost = tuple(y), val
        if moved < tol:
            break
    return RefineResult(best, best_cost, start_cost, len(cache), failed)


@dataclass
class SweepResult:
    schedule: list
    argmins: list
    argmin_indices: list
    interior: list
    drifts: list
    drifts_abs: list
    landscapes: list = field(default_factory=list, repr=False)

    def to_dict(self) -> dict:
        return {
            "schedule": [[_jsonable(g), _jsonable(e)] for g, e in self.schedule],
            "argmins": [list(a) for a in self.argmins],
            "argmin_indices": [list(i) for i in self.argmin_indices],
            "interior": list(self.interior),
            "drifts": list(self.drifts),
            "drifts_abs": list(self.drifts_abs),
        }


def _jsonable(x: float):
    return "inf" if math.isinf(x) else x


def sweep(kind: RegularizerKind, f, f0, grid: AlphaGrid, cost: CostKind,
          schedule: Sequence, cfg: Optional[SolverConfig] = None, warm_start: bool = True,
          workers: int = 1) -> SweepResult:
    """Landscape argmins along a ``(gamma, eps)`` schedule.

    Drifts are max-norm distances between consecutive argmins, in grid-index
    units (``drifts``) and in weight units (``drifts_abs``).
    """
    schedule = [(float(g), float(e)) for g, e in schedule]
    if not schedule:
        raise ValueError("schedule must be nonempty")
    for (g0, e0), (g1, e1) in zip(schedule, schedule[1:]):
        if g1 < g0 or e1 > e0:
            raise ValueError("schedule needs nondecreasing gamma and nonincreasing eps")
    argmins, idxs, interior, lss = [], [], [], []
    for g, e in schedule:
        ls = landscape(kind, f, f0, grid, g, e, cost, cfg, warm_start, workers)
        a, inside, idx = argmin_landscape(ls)
        argmins.append(a)
        idxs.append(idx)
        interior.append(inside)
        lss.append(ls)
    drifts = [int(max(abs(p - q) for p, q in zip(i0, i1))) for i0, i1 in zip(idxs, idxs[1:])]
    drifts_abs = [float(max(abs(p - q) for p, q in zip(a0, a1))) for a0, a1 in zip(argmins, argmins[1:])]
    return SweepResult(schedule, argmins, idxs, interior, drifts, drifts_abs, lss)
