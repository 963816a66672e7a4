"""Upper-level cost functionals comparing a reconstruction with ground truth."""

from __future__ import annotations

import math
from dataclasses import dataclass

from .diffops import grad
from .grid import INF, as_image, check_same_grid, l2_distance_sq
from .huber import _check_gamma, huber_tv


@dataclass(frozen=True)
class CostKind:
    """``L2SQ`` or ``L1GRAD_HUBER`` with its Huber parameter ``eta``."""

    tag: str
    eta: float = INF

    def __post_init__(self):
        if self.tag not in ("L2SQ", "L1GRAD_HUBER"):
            raise ValueError(f"unknown cost {self.tag!r}")
        if self.tag == "L1GRAD_HUBER":
            _check_gamma(self.eta)

    @classmethod
    def l2sq(cls) -> "CostKind":
        return cls("L2SQ")

    @classmethod
    def l1grad(cls, eta: float = INF) -> "CostKind":
        return cls("L1GRAD_HUBER", float(eta))

    def label(self) -> str:
        if self.tag == "L2SQ":
            return "l2sq"
        return f"l1grad(eta={'inf' if math.isinf(self.eta) else repr(self.eta)})"

    def __call__(self, u, f0) -> float:
        if self.tag == "L2SQ":
            return cost_l2sq(u, f0)
        return cost_l1grad_huber(u, f0, self.eta)


def cost_l2sq(u, f0) -> float:
    """``1/2 ||f0 - u||^2``."""
    return 0.5 * l2_distance_sq(u, f0)


def cost_l1grad_huber(u, f0, eta: float = INF) -> float:
    """Huberized total variation of the residual ``f0 - u``."""
    u = as_image(u, "u")
    f0 = as_image(f0, "f0")
    check_same_grid(u, f0)
    return huber_tv(grad(f0 - u), eta)
