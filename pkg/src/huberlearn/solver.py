"""Primal-dual solver for Huber-regularized, H1-smoothed denoising problems.

Solves, for the TV, TGV2 and ICTV families,

    min_x  eps * H(x) + 1/2 ||f - K x||^2 + sum_j alpha_j |A_j x|_gamma

with ``H(x) = 1/2 sum_blocks ||grad x_block||^2``.  Each Huberized term is
dualized through :func:`huber.dual_prox`; the smoothing term becomes an extra
quadratic dual block acting through ``sqrt(eps) * grad``.  Convergence is
certified by a primal-dual gap computed from a feasible completion of the
current dual iterate.

Families (primal blocks, forward map ``K``, operators ``A_j``):

* TV:   ``u``;       ``K u = u``;         ``A_1 u = Du``
* TGV2: ``(v, w)``;  ``K = v``;           ``A_1 = Dv - Pw``, ``A_2 = Ew``
* ICTV: ``(v, w)``;  ``K = v + w``;       ``A_1 = Dv``,      ``A_2 = D grad w``

``P`` drops the vector-field entries whose forward difference is undefined.
"""

from __future__ import annotations

import enum
import logging
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.fft import dctn, idctn

from . import diffops as ops
from .grid import INF, ParamVec, as_image
from .huber import _check_gamma, conj_value, dual_prox, huber_tv, pointwise_norm

log = logging.getLogger(__name__)


class RegularizerKind(enum.Enum):
    TV = "tv"
    TGV2 = "tgv2"
    ICTV = "ictv"

    @property
    def n_params(self) -> int:
        return 1 if self is RegularizerKind.TV else 2


class SolverDivergedError(RuntimeError):
    def __init__(self, iteration: int):
        super().__init__(f"non-finite iterate at iteration {iteration}")
        self.iteration = iteration


class InfeasibleDualError(ValueError):
    pass


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 10000
    gap_tol: float = 1e-6
    check_every: int = 10
    seed: int = 0
    alpha_clamp: float = 1e6

    def __post_init__(self):
        if self.max_iters < 1 or self.check_every < 1:
            raise ValueError("max_iters and check_every must be positive")
        if not self.gap_tol > 0 or not self.alpha_clamp > 0:
            raise ValueError("gap_tol and alpha_clamp must be positive")


@dataclass
class SolverResult:
    u: np.ndarray
    primal_state: tuple
    dual_state: tuple
    iterations: int
    rel_gap: float
    gap: float
    objective: float
    converged: bool
    alpha_clamped: bool = False
    history: list = field(default_factory=list, repr=False)


def _check_eps(eps: float) -> float:
    eps = float(eps)
    if not (math.isfinite(eps) and eps >= 0):
        raise ValueError(f"smoothing parameter must be finite and >= 0, got {eps}")
    return eps


def _alphas(kind: RegularizerKind, alpha, clamp: float):
    pv = alpha if isinstance(alpha, ParamVec) else ParamVec(alpha)
    if len(pv) != kind.n_params:
        raise ValueError(f"{kind.name} needs {kind.n_params} weight(s), got {len(pv)}")
    return pv.clamped(clamp), pv.has_infinite


def _vdot(a, b) -> float:
    return float(np.dot(a.ravel(), b.ravel()))


def _grad_blocks(w):
    # gradient of every channel of a channel-first field, stacked
    return np.concatenate([ops._grad(c) for c in w])


def _div_blocks(r):
    return np.stack([ops._div(r[2 * i : 2 * i + 2]) for i in range(r.shape[0] // 2)])


def _solve_mxy_line(b, axis):
    """Solve ``-(D_axis)^T m = b`` along ``axis`` by cumulative sums."""
    # -(D^T m)[0] = m[0], -(D^T m)[i] = m[i] - m[i-1]; m[last] is unused
    m = np.cumsum(b, axis=axis)
    if axis == 0:
        m[-1, :] = 0.0
    else:
        m[:, -1] = 0.0
    return m


def _neumann_poisson(rhs):
    """Solve ``D^T D phi = rhs`` (zero-mean solution) with a DCT-II."""
    h, w = rhs.shape
    lam = (4.0 * np.sin(np.pi * np.arange(h) / (2 * h)) ** 2)[:, None] + (
        4.0 * np.sin(np.pi * np.arange(w) / (2 * w)) ** 2
    )[None, :]
    c = dctn(rhs, type=2, norm="ortho")
    lam[0, 0] = 1.0
    c /= lam
    c[0, 0] = 0.0
    return idctn(c, type=2, norm="ortho")


class _Problem:
    """One instance of the smoothed saddle-point problem.

    ``fidelity`` is False for the marginal-regularizer problems, where the
    image block is frozen at ``f`` and only the auxiliary block is optimized.
    """

    def __init__(self, kind, f, alphas, gamma, eps, fidelity=True):
        self.kind = kind
        self.f = f
        self.alphas = tuple(float(a) for a in alphas)
        self.gamma = _check_gamma(gamma)
        self.eps = eps
        self.se = math.sqrt(eps)
        self.fidelity = fidelity
        self.shape = f.shape
        self.emask = ops.edge_mask(self.shape)
        self.hmask = ops.hessian_mask(self.shape)
        self.df = ops._grad(f) if not fidelity else None

    # -- linear part -----------------------------------------------------
    def forward(self, x):
        k = self.kind
        if k is RegularizerKind.TV:
            (u,) = x
            g = ops._grad(u)
            out = [g]
            if self.eps > 0:
                out.append(self.se * g)
            return out
        v, w = x
        if not self.fidelity:
            v = self.f
        if k is RegularizerKind.TGV2:
            gv = ops._grad(v)
            out = [gv - self.emask * w, ops._sym_grad(w)]
            if self.eps > 0:
                out += [self.se * gv, self.se * _grad_blocks(w)]
            return out
        gv = ops._grad(v if self.fidelity else v - w)
        out = [gv, ops._hess(w, self.hmask)]
        if self.eps > 0:
            out += [self.se * gv, self.se * ops._grad(w)]
        return out

    def adjoint(self, y):
        k = self.kind
        se = self.se
        if k is RegularizerKind.TV:
            s = -ops._div(y[0])
            if self.eps > 0:
                s -= se * ops._div(y[1])
            return [s]
        if k is RegularizerKind.TGV2:
            q1, q2 = y[0], y[1]
            sv = -ops._div(q1)
            sw = -self.emask * q1 - ops._sym_div(q2)
            if self.eps > 0:
                sv -= se * ops._div(y[2])
                sw -= se * _div_blocks(y[3])
            return [sv, sw]
        q1, q2 = y[0], y[1]
        sv = -ops._div(q1)
        sw = ops._hess_adj(q2, self.hmask)
        if not self.fidelity:
            sw = sw - sv
        if self.eps > 0:
            sv -= se * ops._div(y[2])
            sw -= se * ops._div(y[3])
        return [sv, sw]

    def dual_shapes(self):
        h, w = self.shape
        if self.kind is RegularizerKind.TV:
            shapes = [(2, h, w)]
            if self.eps > 0:
                shapes.append((2, h, w))
            return shapes
        if self.kind is RegularizerKind.TGV2:
            shapes = [(2, h, w), (3, h, w)]
            if self.eps > 0:
                shapes += [(2, h, w), (4, h, w)]
            return shapes
        shapes = [(2, h, w), (4, h, w)]
        if self.eps > 0:
            shapes += [(2, h, w), (2, h, w)]
        return shapes

    def initial_primal(self):
        if self.kind is RegularizerKind.TV:
            return [self.f.copy()]
        if self.kind is RegularizerKind.TGV2:
            return [self.f.copy(), np.zeros((2,) + self.shape)]
        return [self.f.copy(), np.zeros(self.shape)]

    def initial_dual(self):
        return [np.zeros(s) for s in self.dual_shapes()]

    # -- proximal maps ---------------------------------------------------
    def prox_primal(self, x, tau):
        """Resolvent of the fidelity; ``tau`` holds one step per primal block."""
        f = self.f
        if not self.fidelity:
            return [f, x[1]]
        if self.kind is RegularizerKind.TV:
            return [(x[0] + tau[0] * f) / (1.0 + tau[0])]
        if self.kind is RegularizerKind.TGV2:
            return [(x[0] + tau[0] * f) / (1.0 + tau[0]), x[1]]
        v, w = x
        r = (v + w - f) / (1.0 + tau[0] + tau[1])
        return [v - tau[0] * r, w - tau[1] * r]

    def prox_dual(self, y, sigma):
        """Resolvent of the dual terms; ``sigma`` holds one step per dual block."""
        n = len(self.alphas)
        out = [dual_prox(y[j], sigma[j], self.alphas[j], self.gamma) for j in range(n)]
        for r, s in zip(y[n:], sigma[n:]):
            out.append(r / (1.0 + s))
        return out

    def diagonal_steps(self):
        """Block steps from absolute row/column sums of the stencils.

        Valid diagonal preconditioners for the primal-dual iteration, used
        for the ICTV marginal where the second-order block dominates.
        """
        se = self.se
        sig = [0.5, 0.25] + ([0.5 / se] * 2 if self.eps > 0 else [])
        tau_v = 1.0 / (4.0 + 4.0 * se)
        tau_w = 1.0 / (16.0 + 4.0 * se + (0.0 if self.fidelity else 4.0))
        return [tau_v, tau_w], sig

    # -- objective values ------------------------------------------------
    def image(self, x):
        if self.kind is RegularizerKind.TV:
            return x[0]
        if self.kind is RegularizerKind.TGV2:
            return x[0]
        return x[0] + x[1]

    def primal_value(self, x, ax=None):
        if ax is None:
            ax = self.forward(x)
        val = 0.0
        if self.fidelity:
            d = (self.f - self.image(x)).ravel()
            val += 0.5 * float(np.dot(d, d))
        for j, a in enumerate(self.alphas):
            val += a * huber_tv(ax[j], self.gamma)
        for extra in ax[len(self.alphas) :]:
            val += 0.5 * float(np.sum(extra * extra))
        return val

    def complete_dual(self, y):
        """Return a dual point satisfying the linear constraints of the dual.

        TV has none.  For TGV2 the image-free block of ``A^T y`` must vanish;
        for ICTV both image blocks of ``A^T y`` must coincide.  The constrained
        dual variables are reassigned so the constraint holds exactly, then the
        whole point is scaled back into the feasible balls.
        """
        k = self.kind
        if k is RegularizerKind.TV:
            return [a.copy() for a in y]
        y = [a.copy() for a in y]
        se = self.se
        h, w = self.shape
        if k is RegularizerKind.TGV2:
            m = y[1]
            rw = _div_blocks(y[3]) if self.eps > 0 else np.zeros((2, h, w))
            # entries of w hidden from Dv - Pw must be balanced through E^T
            if w == 1 and h > 1:
                m[2] = _solve_mxy_line(-se * rw[0], axis=0)
            if h == 1 and w > 1:
                m[2] = _solve_mxy_line(-se * rw[1], axis=1)
            if w >= 2:
                m[0][:, -2] = ops._dy_adj_neg(m[2])[:, -1] + se * rw[0][:, -1]
                m[0][:, -1] = 0.0
            if h >= 2:
                m[1][-2, :] = ops._dx_adj_neg(m[2])[-1, :] + se * rw[1][-1, :]
                m[1][-1, :] = 0.0
            c = -ops._sym_div(m) - se * rw
            y[0] = self.emask * c
        else:
            q2 = self.hmask * y[1]
            p = np.stack((-ops._div(q2[0:2]), -ops._div(q2[2:4])))
            y[1] = q2
            if self.eps > 0:
                p = p + se * (y[3] - y[2])
            # smallest change of q1 with div q1 = div p: subtract a gradient
            y[0] = y[0] - ops._grad(_neumann_poisson(-ops._div(y[0] - p)))
        t = 1.0
        for j, a in enumerate(self.alphas):
            rmax = float(np.max(pointwise_norm(y[j])))
            if rmax > a:
                t = min(t, a / rmax)
        if t < 1.0:
            y = [t * a for a in y]
        return y

    def dual_value(self, y):
        """Dual objective at a point already satisfying the dual constraints."""
        val = 0.0
        for j, a in enumerate(self.alphas):
            val -= conj_value(y[j], a, self.gamma)
        for r in y[len(self.alphas) :]:
            val -= 0.5 * float(np.sum(r * r))
        if not self.fidelity:
            # frozen image block: inf over w leaves the pairing with Df
            val += _vdot(self.df, y[0])
            if self.eps > 0 and len(y) > 2:
                val += self.se * _vdot(self.df, y[2])
            return val
        s = self.adjoint(y)[0]
        # -G*(-A^T y) with G*(z) = <z, f> + |z|^2/2 on the image block
        val -= -_vdot(s, self.f) + 0.5 * _vdot(s, s)
        return val

    def gap(self, x, y, ax=None):
        p = self.primal_value(x, ax)
        d = self.dual_value(self.complete_dual(y))
        return p, p - d

    # -- step-size data --------------------------------------------------
    def strong_convexity(self):
        """(primal, dual) strong convexity moduli usable for acceleration."""
        mu_g = 1.0 if (self.fidelity and self.kind is RegularizerKind.TV) else 0.0
        if math.isinf(self.gamma):
            delta = 0.0
        else:
            delta = min(1.0 / (self.gamma * a) for a in self.alphas)
            if self.eps > 0:
                delta = min(delta, 1.0)
        return mu_g, delta


def _operator_norm(problem: _Problem, seed: int, iters: int = 60) -> float:
    """Power iteration on the assembled solver operator."""
    if problem.kind is RegularizerKind.TV:
        base = math.sqrt(8.0) * math.sqrt(1.0 + problem.eps)
        return base
    rng = np.random.default_rng(seed)
    x = [rng.standard_normal(a.shape) for a in problem.initial_primal()]
    if not problem.fidelity:
        x[0] = np.zeros_like(x[0])
    saved = problem.fidelity, problem.f
    # the frozen image block is an offset, not part of the linear map
    if not problem.fidelity:
        problem.f = np.zeros_like(problem.f)
    nrm = math.sqrt(sum(_vdot(a, a) for a in x))
    x = [a / nrm for a in x]
    best = 0.0
    try:
        for _ in range(iters):
            ax = problem.forward(x)
            val = 0.0
            for a in ax:
                if a.shape[0] == 3:
                    val += float(np.sum(ops.SYM_WEIGHTS[:, None, None] * a * a))
                else:
                    val += float(np.sum(a * a))
            best = max(best, math.sqrt(val))
            z = problem.adjoint(ax)
            if not problem.fidelity:
                z[0] = np.zeros_like(z[0])
            nz = math.sqrt(sum(_vdot(a, a) for a in z))
            if nz == 0.0:
                break
            x = [a / nz for a in z]
    finally:
        problem.fidelity, problem.f = saved
    # power iteration approaches the norm from below
    return max(best * 1.02, 1e-12)


# primal/dual step ratio tau/sigma = ratio^2 for the non-accelerated mode
_PLAIN_STEP_RATIO = {RegularizerKind.TGV2: 1.0, RegularizerKind.ICTV: 3.0}
_ACCEL_TAU_FLOOR = 0.03


def _pdhg(problem: _Problem, cfg: SolverConfig, x0=None, y0=None):
    x = [a.copy() for a in (x0 if x0 is not None else problem.initial_primal())]
    y = [a.copy() for a in (y0 if y0 is not None else problem.initial_dual())]
    L = _operator_norm(problem, cfg.seed)
    mu_g, delta = problem.strong_convexity()

    n_x, n_y = len(x), len(y)
    if mu_g > 0 and delta > 0:
        mode = "linear"
        mu = 2.0 * math.sqrt(mu_g * delta) / L
        tau = mu / (2.0 * mu_g)
        sigma = mu / (2.0 * delta)
    elif mu_g > 0:
        # accelerate, then freeze the steps once tau reaches a floor: pure
        # acceleration has a slow tail on small, nearly piecewise-flat problems
        mode = "accel"
        tau = 1.0 / L
        sigma = 1.0 / L
    elif problem.kind is RegularizerKind.ICTV and not problem.fidelity:
        mode = "diagonal"
    else:
        mode = "plain"
        ratio = _PLAIN_STEP_RATIO.get(problem.kind, 1.0)
        tau = ratio / L
        sigma = 1.0 / (ratio * L)
    if mode == "diagonal":
        taus, sigmas = problem.diagonal_steps()
    else:
        taus, sigmas = [tau] * n_x, [sigma] * n_y
    theta = 1.0
    tau_floor = _ACCEL_TAU_FLOOR / L

    xbar = [a.copy() for a in x]
    history = []
    p_val, gap = problem.gap(x, y)
    rel = gap / (1.0 + abs(p_val))
    it = 0
    converged = rel <= cfg.gap_tol
    while not converged and it < cfg.max_iters:
        it += 1
        ax = problem.forward(xbar)
        y = problem.prox_dual([b + s * a for a, b, s in zip(ax, y, sigmas)], sigmas)
        aty = problem.adjoint(y)
        x_new = problem.prox_primal([a - t * g for a, g, t in zip(x, aty, taus)], taus)
        if mode == "accel":
            if taus[0] > tau_floor:
                theta = 1.0 / math.sqrt(1.0 + 2.0 * mu_g * taus[0])
                taus = [t * theta for t in taus]
                sigmas = [s / theta for s in sigmas]
            else:
                theta = 1.0
        xbar = [n + theta * (n - o) for n, o in zip(x_new, x)]
        x = x_new
        if it % cfg.check_every == 0 or it == cfg.max_iters:
            p_val, gap = problem.gap(x, y)
            if not (math.isfinite(p_val) and math.isfinite(gap)):
                raise SolverDivergedError(it)
            rel = max(gap, 0.0) / (1.0 + abs(p_val))
            history.append((it, rel))
            converged = rel <= cfg.gap_tol
    return x, y, it, p_val, gap, rel, converged, history


def objective(kind: RegularizerKind, state, f, alpha, gamma: float, eps: float,
              alpha_clamp: float = 1e6) -> float:
    """Smoothed objective ``J^{gamma,eps}`` at a primal state.

    ``state`` is the image for TV and a pair ``(v, w)`` for TGV2/ICTV.
    """
    f = as_image(f, "f")
    eps = _check_eps(eps)
    alphas, _ = _alphas(kind, alpha, alpha_clamp)
    x = _state_list(kind, state, f.shape)
    problem = _Problem(kind, f, alphas, gamma, eps)
    return problem.primal_value(x)


def _state_list(kind, state, shape):
    if kind is RegularizerKind.TV:
        u = state[0] if isinstance(state, (tuple, list)) else state
        u = as_image(u, "u")
        if u.shape != shape:
            raise ValueError(f"state shape {u.shape} does not match data {shape}")
        return [u]
    v, w = state
    v = as_image(v, "v")
    w = np.asarray(w, dtype=np.float64)
    expected = (2,) + shape if kind is RegularizerKind.TGV2 else shape
    if v.shape != shape or w.shape != expected:
        raise ValueError(f"state shapes {v.shape}, {w.shape} do not match data {shape}")
    return [v, w]


def duality_gap(kind: RegularizerKind, primal, dual: Sequence[np.ndarray], f, alpha,
                gamma: float, eps: float, alpha_clamp: float = 1e6) -> float:
    """Primal-dual gap of the saddle formulation at ``(primal, dual)``.

    ``dual`` lists the Huber dual blocks (``q_1[, q_2]``) followed by the
    smoothing blocks when ``eps > 0``; missing smoothing blocks are zero.
    """
    f = as_image(f, "f")
    eps = _check_eps(eps)
    alphas, _ = _alphas(kind, alpha, alpha_clamp)
    problem = _Problem(kind, f, alphas, gamma, eps)
    x = _state_list(kind, primal, f.shape)
    shapes = problem.dual_shapes()
    y = [np.asarray(a, dtype=np.float64) for a in dual]
    while len(y) < len(shapes):
        y.append(np.zeros(shapes[len(y)]))
    for j, a in enumerate(alphas):
        if y[j].shape != shapes[j]:
            raise ValueError(f"dual block {j} has shape {y[j].shape}, expected {shapes[j]}")
        if float(np.max(pointwise_norm(y[j]))) > a + 1e-12:
            raise InfeasibleDualError(f"dual block {j} exceeds its bound {a}")
    return problem.gap(x, y)[1]


def solve(kind: RegularizerKind, f, alpha, gamma: float = INF, eps: float = 0.0,
          cfg: Optional[SolverConfig] = None, warm_start: Optional[SolverResult] = None
          ) -> SolverResult:
    """Minimize ``J^{gamma,eps}`` for the given family.

    Infinite weights are clamped to ``cfg.alpha_clamp`` and flagged in the
    result.  ``warm_start`` reuses the primal and dual state of an earlier
    result on the same grid.
    """
    cfg = cfg or SolverConfig()
    f = as_image(f, "f")
    eps = _check_eps(eps)
    alphas, clamped = _alphas(kind, alpha, cfg.alpha_clamp)
    if clamped:
        warnings.warn(f"infinite weight clamped to {cfg.alpha_clamp:g}", RuntimeWarning, stacklevel=2)
    problem = _Problem(kind, f, alphas, gamma, eps)
    x0 = y0 = None
    if warm_start is not None:
        x0 = [np.array(a, dtype=np.float64) for a in warm_start.primal_state]
        shapes = problem.dual_shapes()
        y0 = [np.array(a, dtype=np.float64) for a in warm_start.dual_state[: len(shapes)]]
        while len(y0) < len(shapes):
            y0.append(np.zeros(shapes[len(y0)]))
        if [a.shape for a in y0] != [tuple(s) for s in shapes]:
            y0 = None
    x, y, it, p_val, gap, rel, converged, history = _pdhg(problem, cfg, x0, y0)
    log.debug("%s solve: %d iterations, rel gap %.3e", kind.name, it, rel)
    return SolverResult(
        u=problem.image(x).copy(),
        primal_state=tuple(x),
        dual_state=tuple(y),
        iterations=it,
        rel_gap=rel,
        gap=gap,
        objective=p_val,
        converged=converged,
        alpha_clamped=clamped,
        history=history,
    )


@dataclass
class MarginalResult:
    """Value of a marginal regularizer with its inner-solve certificate."""

    value: float
    gap: float
    rel_gap: float
    iterations: int
    converged: bool
    w: np.ndarray


def solve_marginal(kind: RegularizerKind, v, alpha2: float, cfg: Optional[SolverConfig] = None
                   ) -> MarginalResult:
    """Minimize ``|D(.) - .| + alpha2 |.|`` over the auxiliary variable with ``v`` fixed.

    TGV2: ``min_w |Dv - Pw| + alpha2 |Ew|``.  ICTV: ``min_w |D(v - w)| +
    alpha2 |D grad w|``.  No fidelity or smoothing term is present.
    """
    if kind is RegularizerKind.TV:
        raise ValueError("TV has no auxiliary variable")
    cfg = cfg or SolverConfig()
    v = as_image(v, "v")
    alpha2 = float(alpha2)
    if not (alpha2 > 0 and math.isfinite(alpha2)):
        raise ValueError("alpha2 must be positive and finite")
    problem = _Problem(kind, v, (1.0, alpha2), INF, 0.0, fidelity=False)
    x, y, it, p_val, gap, rel, converged, _ = _pdhg(problem, cfg)
    return MarginalResult(p_val, gap, rel, it, converged, x[1].copy())
