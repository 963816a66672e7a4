"""Huber-regularized total-variation-type denoising with bilevel parameter landscapes."""

from .grid import INF, GridMismatchError, ParamVec, l2_distance_sq, psnr
from .solver import RegularizerKind, SolverConfig, SolverResult, solve

__all__ = [
    "INF",
    "GridMismatchError",
    "ParamVec",
    "RegularizerKind",
    "SolverConfig",
    "SolverResult",
    "l2_distance_sq",
    "psnr",
    "solve",
]
__version__ = "0.1.0"
