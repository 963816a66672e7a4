"""Huber regularization of pointwise Euclidean norms and its dual resolvent.

For ``gamma`` in ``(0, inf]``::

    |g|_gamma = ||g|| - 1/(2 gamma)      if ||g|| >= 1/gamma
              = (gamma/2) ||g||^2         otherwise

and ``alpha |g|_gamma = sup { <q, g> - ||q||^2 / (2 gamma alpha) : ||q|| <= alpha }``.
``gamma = inf`` is handled exactly and gives back the plain norm.

Fields are channel-first arrays.  Three-channel fields are symmetric tensors
``(xx, yy, xy)`` and use the weighted norm ``sqrt(xx^2 + yy^2 + 2 xy^2)``;
any other channel count uses the plain Euclidean norm over channels.
"""

from __future__ import annotations

import math

import numpy as np

from .diffops import SYM_WEIGHTS


def _check_gamma(gamma: float) -> float:
    gamma = float(gamma)
    if math.isnan(gamma) or gamma <= 0:
        raise ValueError(f"Huber parameter must be in (0, inf], got {gamma}")
    return gamma


def pointwise_norm(field) -> np.ndarray:
    """Per-pixel norm of a channel-first field."""
    field = np.asarray(field, dtype=np.float64)
    if field.shape[0] == 3:
        return np.sqrt(np.sum(SYM_WEIGHTS.reshape((3,) + (1,) * (field.ndim - 1)) * field**2, axis=0))
    return np.sqrt(np.sum(field**2, axis=0))


def huber_of_norm(r, gamma: float) -> np.ndarray:
    """Apply the two-branch Huber formula to precomputed norms ``r >= 0``."""
    gamma = _check_gamma(gamma)
    r = np.asarray(r, dtype=np.float64)
    if math.isinf(gamma):
        return r.copy()
    return np.where(r >= 1.0 / gamma, r - 0.5 / gamma, 0.5 * gamma * r * r)


def huber_value(g, gamma: float) -> float:
    """Huber-regularized norm of a single vector of length 2 or 3.

    A length-3 vector is read as a symmetric tensor ``(xx, yy, xy)``.
    """
    g = np.asarray(g, dtype=np.float64)
    if g.ndim != 1 or g.shape[0] not in (2, 3):
        raise ValueError(f"expected a vector of length 2 or 3, got shape {g.shape}")
    return float(huber_of_norm(pointwise_norm(g), gamma))


def huber_tv(field, gamma: float) -> float:
    """Sum over pixels of the Huber-regularized pointwise norm of ``field``."""
    r = pointwise_norm(field)
    return float(np.sum(huber_of_norm(r, gamma)))


def dual_prox(q, sigma: float, alpha: float, gamma: float) -> np.ndarray:
    """Resolvent of the conjugate of ``alpha |.|_gamma`` with step ``sigma``.

    Shrinks by ``1 + sigma/(gamma alpha)`` and then projects radially onto
    the ball of radius ``alpha`` (weighted norm for symmetric tensors).
    """
    if sigma <= 0 or alpha <= 0:
        raise ValueError("sigma and alpha must be positive")
    gamma = _check_gamma(gamma)
    q = np.asarray(q, dtype=np.float64)
    if not math.isinf(gamma):
        q = q / (1.0 + sigma / (gamma * alpha))
    r = pointwise_norm(q)
    scale = alpha / np.maximum(r, alpha)
    return q * scale


def conj_value(q, alpha: float, gamma: float) -> float:
    """Conjugate of ``alpha |.|_gamma`` summed over pixels, for feasible ``q``."""
    if math.isinf(gamma):
        return 0.0
    return float(np.sum(pointwise_norm(q) ** 2)) / (2.0 * gamma * alpha)
