"""Pixel-grid value conventions, regularization weight vectors and basic metrics.

Images are 2-D ``float64`` arrays of shape ``(height, width)`` in row-major
order.  Vector fields are stacked as ``(2, height, width)`` with the x-component
(along columns) first; symmetric tensor fields as ``(3, height, width)`` holding
the ``xx``, ``yy`` and ``xy`` planes.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

INF = math.inf


class GridMismatchError(ValueError):
    """Raised when two grids that must share dimensions do not."""


def as_image(a, name: str = "image") -> np.ndarray:
    """Validate and convert ``a`` to a float64 image array.

    1-D input is promoted to a single-row image.
    """
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.ndim != 2 or arr.size == 0:
        raise ValueError(f"{name} must be a non-empty 2-D array, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite samples")
    return arr


def as_field(a, channels: int, name: str = "field") -> np.ndarray:
    arr = np.asarray(a, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[0] != channels:
        raise ValueError(f"{name} must have shape ({channels}, H, W), got {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite entries")
    return arr


def check_same_grid(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise GridMismatchError(f"incompatible grids: {a.shape} vs {b.shape}")


@dataclass(frozen=True)
class ParamVec:
    """Regularization weights ``(alpha_1, ..., alpha_N)`` with ``N`` in {1, 2}.

    Components are strictly positive floats or :data:`INF`.
    """

    components: tuple[float, ...]

    def __init__(self, components: float | Iterable[float]):
        if np.isscalar(components):
            comps = (float(components),)
        else:
            comps = tuple(float(c) for c in components)
        if len(comps) not in (1, 2):
            raise ValueError(f"ParamVec needs 1 or 2 components, got {len(comps)}")
        for c in comps:
            if math.isnan(c) or c <= 0:
                raise ValueError(f"regularization weights must be > 0, got {c}")
        object.__setattr__(self, "components", comps)

    def __len__(self) -> int:
        return len(self.components)

    def __getitem__(self, i: int) -> float:
        return self.components[i]

    def __iter__(self):
        return iter(self.components)

    @property
    def has_infinite(self) -> bool:
        return any(math.isinf(c) for c in self.components)

    def clamped(self, bound: float) -> tuple[float, ...]:
        return tuple(min(c, bound) for c in self.components)


def l2_distance_sq(a, b) -> float:
    """Sum of squared pixel differences (no factor 1/2)."""
    a = as_image(a, "a")
    b = as_image(b, "b")
    check_same_grid(a, b)
    d = (a - b).ravel()
    return float(np.dot(d, d))


def psnr(recon, reference, peak: float = 1.0) -> float:
    """Peak signal-to-noise ratio in dB; identical images give ``inf``."""
    recon = as_image(recon, "recon")
    reference = as_image(reference, "reference")
    check_same_grid(recon, reference)
    if peak <= 0:
        raise ValueError("peak must be positive")
    mse = l2_distance_sq(recon, reference) / recon.size
    if mse == 0.0:
        return INF
    return 10.0 * math.log10(peak * peak / mse)


def fingerprint(*arrays: Sequence[float]) -> str:
    """Short content hash identifying input arrays in reports."""
    h = hashlib.sha256()
    for a in arrays:
        arr = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
        h.update(str(arr.shape).encode())
        h.update(arr.tobytes())
    return h.hexdigest()[:16]
