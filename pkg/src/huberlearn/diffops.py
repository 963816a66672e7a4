"""Finite-difference operators on the pixel grid with exact adjoints.

All differences are forward differences with unit spacing; at the far edge
(last column for x, last row for y) the difference is zero.  ``div`` and
``sym_div`` are the *negative* adjoints of ``grad`` and ``sym_grad``, so that

    <grad v, p> + <v, div p> = 0,    <sym_grad w, M>_S + <w, sym_div M> = 0,

where ``<., .>_S`` weights the ``xy`` plane of a symmetric tensor by 2.
"""

from __future__ import annotations

import enum
import math

import numpy as np

from .grid import as_field, as_image


class OperatorKind(enum.Enum):
    GRAD = "grad"
    SYMGRAD = "symgrad"
    TGV2_BLOCK = "tgv2_block"
    ICTV_BLOCK = "ictv_block"


# Tensor channel weights for the Frobenius pairing of symmetric 2x2 tensors.
SYM_WEIGHTS = np.array([1.0, 1.0, 2.0])


def _dx(u):
    out = np.zeros_like(u)
    out[..., :, :-1] = u[..., :, 1:] - u[..., :, :-1]
    return out


def _dy(u):
    out = np.zeros_like(u)
    out[..., :-1, :] = u[..., 1:, :] - u[..., :-1, :]
    return out


def _dx_adj_neg(p):
    # -(d/dx)^T: backward difference, dual to the zeroed last column
    d = p.copy()
    d[..., :, -1] = 0.0
    d[..., :, 1:] -= d[..., :, :-1].copy()
    return d


def _dy_adj_neg(p):
    d = p.copy()
    d[..., -1, :] = 0.0
    d[..., 1:, :] -= d[..., :-1, :].copy()
    return d


def _grad(v):
    return np.stack((_dx(v), _dy(v)))


def _div(p):
    return _dx_adj_neg(p[0]) + _dy_adj_neg(p[1])


def _sym_grad(w):
    return np.stack((_dx(w[0]), _dy(w[1]), 0.5 * (_dy(w[0]) + _dx(w[1]))))


def _sym_div(m):
    # xy enters the weighted pairing twice: 2 * (1/2) = 1
    return np.stack(
        (
            _dx_adj_neg(m[0]) + _dy_adj_neg(m[2]),
            _dy_adj_neg(m[1]) + _dx_adj_neg(m[2]),
        )
    )


def grad(v) -> np.ndarray:
    """Forward-difference gradient, shape ``(2, H, W)``."""
    return _grad(as_image(v, "v"))


def div(p) -> np.ndarray:
    """Discrete divergence, the negative adjoint of :func:`grad`."""
    return _div(as_field(p, 2, "p"))


def sym_grad(w) -> np.ndarray:
    """Symmetrized gradient of a vector field, planes ``(xx, yy, xy)``."""
    return _sym_grad(as_field(w, 2, "w"))


def sym_div(m) -> np.ndarray:
    """Negative adjoint of :func:`sym_grad` under the weighted tensor pairing."""
    return _sym_div(as_field(m, 3, "M"))


def sym_inner(a, b) -> float:
    """Weighted pairing of two symmetric tensor fields."""
    return float(np.sum(SYM_WEIGHTS[:, None, None] * a * b))


def sym_norm(m) -> np.ndarray:
    """Pointwise Frobenius norm ``sqrt(xx^2 + yy^2 + 2 xy^2)``."""
    return np.sqrt(m[0] ** 2 + m[1] ** 2 + 2.0 * m[2] ** 2)


# Boundary masks used by the two-block regularizers.  Vector-field entries
# whose forward difference is undefined (x at the last column, y at the last
# row) are not compared against Dv, and pure second differences that would
# straddle the far edge are dropped.  With these masks affine images carry no
# second-order penalty.


def edge_mask(shape) -> np.ndarray:
    h, w = shape
    m = np.ones((2, h, w))
    m[0, :, -1] = 0.0
    m[1, -1, :] = 0.0
    return m


def hessian_mask(shape) -> np.ndarray:
    h, w = shape
    m = np.ones((4, h, w))
    if w >= 2:
        m[0, :, -2] = 0.0
    if h >= 2:
        m[3, -2, :] = 0.0
    return m


def _hess(w, mask):
    g = _grad(w)
    return mask * np.stack((_dx(g[0]), _dy(g[0]), _dx(g[1]), _dy(g[1])))


def _hess_adj(q, mask):
    q = mask * q
    p = np.stack((-_div(q[0:2]), -_div(q[2:4])))
    return -_div(p)


def hessian(w) -> np.ndarray:
    """Masked gradient-of-gradient ``(xx, xy, yx, yy)`` used by ICTV."""
    w = as_image(w, "w")
    return _hess(w, hessian_mask(w.shape))


def hessian_adjoint(q) -> np.ndarray:
    q = as_field(q, 4, "q")
    return _hess_adj(q, hessian_mask(q.shape[1:]))


def _block_ops(kind: OperatorKind, shape):
    """Forward/adjoint pair and primal shapes for norm estimation."""
    h, w = shape
    if kind is OperatorKind.GRAD:
        return _grad, lambda y: -_div(y), [(h, w)]
    if kind is OperatorKind.SYMGRAD:
        return _sym_grad, lambda y: -_sym_div(y), [(2, h, w)]
    if kind is OperatorKind.TGV2_BLOCK:
        em = edge_mask(shape)

        def fwd(x):
            v, vf = x
            return (_grad(v) - em * vf, _sym_grad(vf))

        def adj(y):
            q1, q2 = y
            return (-_div(q1), -em * q1 - _sym_div(q2))

        return fwd, adj, [(h, w), (2, h, w)]
    if kind is OperatorKind.ICTV_BLOCK:
        hm = hessian_mask(shape)

        def fwd(x):
            v, s = x
            return (_grad(v), _hess(s, hm))

        def adj(y):
            return (-_div(y[0]), _hess_adj(y[1], hm))

        return fwd, adj, [(h, w), (h, w)]
    raise ValueError(f"unknown operator kind {kind!r}")


def _weights_for(kind: OperatorKind):
    # range-space inner product weights (tensor blocks carry the xy factor)
    if kind is OperatorKind.SYMGRAD:
        return [SYM_WEIGHTS[:, None, None]]
    if kind is OperatorKind.TGV2_BLOCK:
        return [1.0, SYM_WEIGHTS[:, None, None]]
    if kind is OperatorKind.ICTV_BLOCK:
        return [1.0, 1.0]
    return [1.0]


def op_norm_estimate(
    kind: OperatorKind, width: int, height: int, iters: int = 100, seed: int = 0
) -> float:
    """Power-iteration estimate of the spectral norm of a block operator.

    The estimate is a Rayleigh-quotient lower bound and never decreases with
    ``iters``.  For the tensor-valued blocks the weighted pairing is used, so
    the result is the norm with respect to the same geometry the solver uses.
    """
    if iters < 1:
        raise ValueError("iters must be >= 1")
    fwd, adj, shapes = _block_ops(kind, (height, width))
    weights = _weights_for(kind)
    rng = np.random.default_rng(seed)
    single = kind in (OperatorKind.GRAD, OperatorKind.SYMGRAD)

    def apply(x):
        y = fwd(x[0]) if single else fwd(x)
        return [y] if single else list(y)

    def apply_t(y):
        x = adj(y[0]) if single else adj(y)
        return [x] if single else list(x)

    x = [rng.standard_normal(s) for s in shapes]
    nrm = math.sqrt(sum(float(np.vdot(a, a)) for a in x))
    x = [a / nrm for a in x]
    best = 0.0
    for _ in range(iters):
        y = apply(x)
        val = sum(float(np.sum(wt * b * b)) for wt, b in zip(weights, y))
        best = max(best, math.sqrt(max(val, 0.0)))
        # adjoints are taken in the weighted geometry, so this is A^T A x
        z = apply_t(y)
        nz = math.sqrt(sum(float(np.vdot(a, a)) for a in z))
        if nz == 0.0:
            return 0.0
        x = [a / nz for a in z]
    return best
