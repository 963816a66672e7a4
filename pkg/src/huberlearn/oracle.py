"""Reference computations that share no code with the iterative solver.

* :func:`tv1d_exact` -- exact 1-D TV-L2 denoising by a direct scan.
* :func:`dense_grid_oracle` -- exhaustive search of the smoothed objective on
  tiny grids, with its own dense finite-difference matrices.
* :func:`scalar_prox_oracle` -- the dual Huber resolvent by golden-section
  search along the ray of the input.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass

import numpy as np

from .grid import fingerprint

MAX_ORACLE_DIM = 8
_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


@dataclass
class OracleReport:
    name: str
    fingerprint: str
    values: list
    method: str

    def __post_init__(self):
        if not all(math.isfinite(v) for v in np.ravel(self.values)):
            raise ValueError("oracle reference values must be finite")

    def to_json(self) -> str:
        return json.dumps(asdict(self), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "OracleReport":
        return cls(**json.loads(text))


def tv1d_exact(f, alpha: float) -> np.ndarray:
    """Exact minimizer of ``1/2 sum (u - f)^2 + alpha sum |u[i+1] - u[i]|``.

    Direct, non-iterative taut-string style scan.
    """
    y = np.asarray(f, dtype=np.float64).ravel()
    n = y.size
    if n == 0:
        raise ValueError("empty signal")
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    lam = float(alpha)
    x = np.empty(n)
    if n == 1:
        x[0] = y[0]
        return x
    k = k0 = kminus = kplus = 0
    umin, umax = lam, -lam
    vmin, vmax = y[0] - lam, y[0] + lam
    twolam = 2.0 * lam
    while True:
        while k == n - 1:
            if umin < 0.0:
                # segment value too high: negative jump
                while True:
                    x[k0] = vmin
                    k0 += 1
                    if k0 > kminus:
                        break
                k = kminus = k0
                vmin = y[k]
                umin = lam
                umax = vmin + umin - vmax
            elif umax > 0.0:
                while True:
                    x[k0] = vmax
                    k0 += 1
                    if k0 > kplus:
                        break
                k = kplus = k0
                vmax = y[k]
                umax = -lam
                umin = vmax + umax - vmin
            else:
                vmin += umin / (k - k0 + 1)
                x[k0 : k + 1] = vmin
                return x
        umin += y[k + 1] - vmin
        if umin < -lam:
            while True:
                x[k0] = vmin
                k0 += 1
                if k0 > kminus:
                    break
            k = kminus = kplus = k0
            vmin = y[k]
            vmax = vmin + twolam
            umin, umax = lam, -lam
            continue
        umax += y[k + 1] - vmax
        if umax > lam:
            while True:
                x[k0] = vmax
                k0 += 1
                if k0 > kplus:
                    break
            k = kminus = kplus = k0
            vmax = y[k]
            vmin = vmax - twolam
            umin, umax = lam, -lam
            continue
        k += 1
        if umin >= lam:
            kminus = k
            vmin += (umin - lam) / (kminus - k0 + 1)
            umin = lam
        if umax <= -lam:
            kplus = k
            vmax += (umax + lam) / (kplus - k0 + 1)
            umax = -lam


def _diff_matrices(h: int, w: int):
    """Dense forward-difference matrices on an ``h x w`` grid (row-major)."""
    n = h * w
    dx = np.zeros((n, n))
    dy = np.zeros((n, n))
    for i in range(h):
        for j in range(w):
            k = i * w + j
            if j + 1 < w:
                dx[k, k] = -1.0
                dx[k, k + 1] = 1.0
            if i + 1 < h:
                dy[k, k] = -1.0
                dy[k, k + w] = 1.0
    return dx, dy


def _huber(r, gamma):
    if math.isinf(gamma):
        return r
    return np.where(r >= 1.0 / gamma, r - 0.5 / gamma, 0.5 * gamma * r * r)


class _DenseObjective:
    """Batched objective evaluation over rows of candidate primal vectors."""

    def __init__(self, kind: str, f, alpha, gamma, eps):
        f = np.atleast_2d(np.asarray(f, dtype=np.float64))
        self.h, self.w = f.shape
        self.n = f.size
        self.f = f.ravel()
        self.kind = kind
        self.alpha = tuple(float(a) for a in np.atleast_1d(alpha))
        self.gamma = float(gamma)
        self.eps = float(eps)
        self.dx, self.dy = _diff_matrices(self.h, self.w)
        n = self.n
        if kind == "tv":
            self.dim = n
        elif kind == "tgv2":
            # with a single row the y-component of w only enters through a
            # difference along x and is optimally constant; it is fixed at 0
            self.free_wy = self.h > 1
            self.dim = n + n * (2 if self.free_wy else 1)
        elif kind == "ictv":
            self.dim = 2 * n
        else:
            raise ValueError(f"unknown kind {kind!r}")
        mx = np.ones(n)
        my = np.ones(n)
        for i in range(self.h):
            mx[i * self.w + self.w - 1] = 0.0
        for j in range(self.w):
            my[(self.h - 1) * self.w + j] = 0.0
        self.mx, self.my = mx, my
        hx = np.ones(n)
        hy = np.ones(n)
        if self.w >= 2:
            for i in range(self.h):
                hx[i * self.w + self.w - 2] = 0.0
        if self.h >= 2:
            for j in range(self.w):
                hy[(self.h - 2) * self.w + j] = 0.0
        self.hx, self.hy = hx, hy

    def split(self, X):
        n = self.n
        if self.kind == "tv":
            return X, None, None
        if self.kind == "tgv2":
            wx = X[:, n : 2 * n]
            wy = X[:, 2 * n : 3 * n] if self.free_wy else np.zeros_like(wx)
            return X[:, :n], wx, wy
        return X[:, :n], X[:, n:], None

    def __call__(self, X):
        X = np.atleast_2d(X)
        v, a, b = self.split(X)
        dx, dy = self.dx, self.dy
        gvx, gvy = v @ dx.T, v @ dy.T
        smooth = 0.5 * np.sum(gvx**2 + gvy**2, axis=1)
        if self.kind == "tv":
            image = v
            reg = self.alpha[0] * np.sum(_huber(np.hypot(gvx, gvy), self.gamma), axis=1)
        elif self.kind == "tgv2":
            wx, wy = a, b
            image = v
            r1 = np.hypot(gvx - self.mx * wx, gvy - self.my * wy)
            exx = wx @ dx.T
            eyy = wy @ dy.T
            exy = 0.5 * (wx @ dy.T + wy @ dx.T)
            r2 = np.sqrt(exx**2 + eyy**2 + 2.0 * exy**2)
            reg = self.alpha[0] * np.sum(_huber(r1, self.gamma), axis=1)
            reg = reg + self.alpha[1] * np.sum(_huber(r2, self.gamma), axis=1)
            smooth = smooth + 0.5 * np.sum(
                (wx @ dx.T) ** 2 + (wx @ dy.T) ** 2 + (wy @ dx.T) ** 2 + (wy @ dy.T) ** 2, axis=1
            )
        else:
            s = a
            image = v + s
            gsx, gsy = s @ dx.T, s @ dy.T
            hxx = self.hx * (gsx @ dx.T)
            hxy = gsx @ dy.T
            hyx = gsy @ dx.T
            hyy = self.hy * (gsy @ dy.T)
            r2 = np.sqrt(hxx**2 + hxy**2 + hyx**2 + hyy**2)
            reg = self.alpha[0] * np.sum(_huber(np.hypot(gvx, gvy), self.gamma), axis=1)
            reg = reg + self.alpha[1] * np.sum(_huber(r2, self.gamma), axis=1)
            smooth = smooth + 0.5 * np.sum(gsx**2 + gsy**2, axis=1)
        fid = 0.5 * np.sum((image - self.f) ** 2, axis=1)
        return fid + reg + self.eps * smooth


def dense_objective(kind: str, f, alpha, gamma: float, eps: float):
    """Callable evaluating the smoothed objective on stacked primal vectors.

    Rows are ``v`` (TV), ``(v, w_x[, w_y])`` (TGV2) or ``(v, w)`` (ICTV),
    each block flattened row-major.
    """
    return _DenseObjective(kind, f, alpha, gamma, eps)


@dataclass
class GridOracleResult:
    minimum: float
    minimizer: np.ndarray
    spacing: float
    evaluated: int


def dense_grid_oracle(kind: str, f, alpha, gamma: float = math.inf, eps: float = 0.0,
                      resolution: int = 21, chunk: int = 1 << 16) -> GridOracleResult:
    """Exhaustive minimization over the box ``[min f - 1, max f + 1]^dim``."""
    if resolution < 11:
        raise ValueError("resolution must be at least 11")
    obj = _DenseObjective(kind, f, alpha, gamma, eps)
    if obj.dim > MAX_ORACLE_DIM:
        raise ValueError(f"primal dimension {obj.dim} exceeds oracle limit {MAX_ORACLE_DIM}")
    lo, hi = float(np.min(obj.f)) - 1.0, float(np.max(obj.f)) + 1.0
    axis = np.linspace(lo, hi, resolution)
    total = resolution**obj.dim
    best_val, best_idx = math.inf, 0
    start = 0
    while start < total:
        stop = min(total, start + chunk)
        idx = np.arange(start, stop)
        digits = np.empty((idx.size, obj.dim), dtype=np.int64)
        rem = idx
        for d in range(obj.dim - 1, -1, -1):
            digits[:, d] = rem % resolution
            rem = rem // resolution
        vals = obj(axis[digits])
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_val, best_idx = float(vals[k]), int(idx[k])
        start = stop
    digits = []
    rem = best_idx
    for _ in range(obj.dim):
        digits.append(rem % resolution)
        rem //= resolution
    point = axis[np.array(digits[::-1])]
    return GridOracleResult(best_val, point, float(axis[1] - axis[0]), total)


def scalar_prox_oracle(q, sigma: float, alpha: float, gamma: float, samples: int = 200) -> np.ndarray:
    """Dual Huber resolvent by golden-section along the ray of ``q``.

    Minimizes ``|p - q|^2/(2 sigma) + |p|^2/(2 gamma alpha)`` over the ball
    ``|p| <= alpha``; the minimizer is ``t q/|q|`` for a scalar ``t`` found
    with ``samples`` golden-section steps.  A length-3 ``q`` is a symmetric
    tensor with the weighted norm.
    """
    if samples < 64:
        raise ValueError("samples must be >= 64")
    q = np.asarray(q, dtype=np.float64)
    wts = np.array([1.0, 1.0, 2.0]) if q.size == 3 else np.ones(q.size)
    nq = math.sqrt(float(np.sum(wts * q * q)))
    if nq == 0.0:
        return np.zeros_like(q)
    c = 0.0 if math.isinf(gamma) else 1.0 / (gamma * alpha)

    def phi(t):
        return 0.5 * (t - nq) ** 2 / sigma + 0.5 * c * t * t

    def less_equal(t1, t2):
        # phi(t1) - phi(t2) in factored form, free of cancellation near the minimum
        m = 0.5 * (t1 + t2)
        return (t1 - t2) * ((m - nq) / sigma + c * m) <= 0.0

    a, b = 0.0, float(alpha)
    x1 = b - _GOLDEN * (b - a)
    x2 = a + _GOLDEN * (b - a)
    for _ in range(samples):
        if less_equal(x1, x2):
            b, x2 = x2, x1
            x1 = b - _GOLDEN * (b - a)
        else:
            a, x1 = x1, x2
            x2 = a + _GOLDEN * (b - a)
    t = 0.5 * (a + b)
    for cand in (0.0, float(alpha)):
        if phi(cand) < phi(t):
            t = cand
    return q * (t / nq)


def tv1d_report(f, alpha: float) -> OracleReport:
    u = tv1d_exact(f, alpha)
    return OracleReport("tv1d_exact", fingerprint(np.asarray(f, float), [alpha]), u.tolist(),
                        "direct 1-D TV-L2 scan")


def marginal_grid_oracle(kind: str, v, alpha2: float, values) -> float:
    """Exhaustive marginal regularizer of a single-row signal.

    ``tgv2``: ``min_w sum |dv_i - w_i| + alpha2 sum |w_{i+1} - w_i|`` with the
    last ``w`` entry excluded from the first sum.  ``ictv``: ``min_w sum
    |d(v - w)_i| + alpha2 sum |w_{i+2} - 2 w_{i+1} + w_i|``.  Every entry of
    ``w`` ranges over ``values``.
    """
    v = np.asarray(v, dtype=np.float64).ravel()
    n = v.size
    if n > 6:
        raise ValueError("signal too long for exhaustive search")
    vals = np.asarray(values, dtype=np.float64)
    mesh = np.stack(np.meshgrid(*([vals] * n), indexing="ij"), axis=-1).reshape(-1, n)
    if kind == "tgv2":
        dv = np.diff(v)
        first = np.abs(dv[None, :] - mesh[:, :-1]).sum(axis=1)
        second = np.abs(np.diff(mesh, axis=1)).sum(axis=1)
    elif kind == "ictv":
        first = np.abs(np.diff(v[None, :] - mesh, axis=1)).sum(axis=1)
        second = np.abs(np.diff(mesh, n=2, axis=1)).sum(axis=1)
    else:
        raise ValueError(f"unknown kind {kind!r}")
    return float(np.min(first + alpha2 * second))
