"""Regularizer values on fixed images and the interior-optimality conditions.

The conditions compare a regularizer on the noisy data ``f`` with its value on
the ground truth ``f0``: if noise increases the regularizer, the optimal
weights for the squared-L2 cost are strictly positive.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np

from .diffops import grad
from .grid import as_image, check_same_grid
from .huber import huber_tv
from .solver import MarginalResult, RegularizerKind, SolverConfig, solve_marginal


def tv_value(v) -> float:
    """Discrete total variation (isotropic, forward differences)."""
    return huber_tv(grad(v), math.inf)


def _marginal(kind, v, alpha2, cfg) -> MarginalResult:
    cfg = cfg or SolverConfig()
    res = solve_marginal(kind, v, alpha2, cfg)
    tv = tv_value(v)
    if res.value > tv:
        # w = 0 is feasible with value TV(v), a tighter upper bound
        gap = max(res.gap - (res.value - tv), 0.0)
        rel = gap / (1.0 + tv)
        res = MarginalResult(tv, gap, rel, res.iterations, res.converged or rel <= cfg.gap_tol,
                             np.zeros_like(res.w))
    return res


def tgv2_value(v, alpha2: float, cfg: Optional[SolverConfig] = None) -> MarginalResult:
    """``min_w |Dv - w| + alpha2 |Ew|`` (first-order weight fixed to 1).

    Returns the value together with the inner-solve certificate; ``converged``
    is False when the gap tolerance was not reached.
    """
    return _marginal(RegularizerKind.TGV2, v, alpha2, cfg)


def ictv_value(v, alpha2: float, cfg: Optional[SolverConfig] = None) -> MarginalResult:
    """``min over v = v1 + w`` of ``|D v1| + alpha2 |D grad w|``."""
    return _marginal(RegularizerKind.ICTV, v, alpha2, cfg)


@dataclass
class ConditionReport:
    """Outcome of an interior-optimality check.

    ``satisfied`` is ``margin > 0``.  ``indeterminate`` is set when an inner
    solve missed its tolerance or the margin lies within twice the absolute
    gap bound of the inner solves, in which case ``satisfied`` should not be
    trusted.
    """

    family: str
    lhs: float
    rhs: float
    margin: float
    satisfied: bool
    aux_params: list = field(default_factory=list)
    solver_gaps: list = field(default_factory=list)
    gap_bound: float = 0.0
    indeterminate: bool = False

    def to_dict(self) -> dict:
        return asdict(self)

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, allow_nan=True)

    @classmethod
    def from_dict(cls, d: dict) -> "ConditionReport":
        return cls(**d)

    @classmethod
    def from_json(cls, text: str) -> "ConditionReport":
        return cls.from_dict(json.loads(text))


def _pair(f, f0):
    f = as_image(f, "f")
    f0 = as_image(f0, "f0")
    check_same_grid(f, f0)
    return f, f0


def check_interior_tv(f, f0) -> ConditionReport:
    """Check ``TV(f) > TV(f0)``; exact, never indeterminate."""
    f, f0 = _pair(f, f0)
    lhs, rhs = tv_value(f), tv_value(f0)
    margin = lhs - rhs
    return ConditionReport("TV", lhs, rhs, margin, bool(margin > 0))


def _check_marginal(kind, f, f0, alpha2, cfg) -> ConditionReport:
    f, f0 = _pair(f, f0)
    cfg = cfg or SolverConfig()
    a = _marginal(kind, f, alpha2, cfg)
    b = _marginal(kind, f0, alpha2, cfg)
    margin = a.value - b.value
    # primal values overestimate the marginal by at most the absolute gap
    bound = max(a.gap, 0.0) + max(b.gap, 0.0)
    indeterminate = (not (a.converged and b.converged)) or abs(margin) <= 2.0 * bound
    return ConditionReport(
        kind.name,
        a.value,
        b.value,
        margin,
        bool(margin > 0),
        aux_params=[float(alpha2)],
        solver_gaps=[a.rel_gap, b.rel_gap],
        gap_bound=bound,
        indeterminate=bool(indeterminate),
    )


def check_interior_tgv2(f, f0, alpha2: float, cfg: Optional[SolverConfig] = None) -> ConditionReport:
    """Check ``TGV2_(alpha2, 1)(f) > TGV2_(alpha2, 1)(f0)``."""
    return _check_marginal(RegularizerKind.TGV2, f, f0, alpha2, cfg)


def check_interior_ictv(f, f0, alpha2: float, cfg: Optional[SolverConfig] = None) -> ConditionReport:
    """ICTV analogue of :func:`check_interior_tgv2`."""
    return _check_marginal(RegularizerKind.ICTV, f, f0, alpha2, cfg)


def check_interior(kind: RegularizerKind, f, f0, alpha2: float = 1.0,
                   cfg: Optional[SolverConfig] = None) -> ConditionReport:
    if kind is RegularizerKind.TV:
        return check_interior_tv(f, f0)
    if kind is RegularizerKind.TGV2:
        return check_interior_tgv2(f, f0, alpha2, cfg)
    return check_interior_ictv(f, f0, alpha2, cfg)
