"""Data-fit MSE plus a lambda-weighted positivity hinge.

Everything here works on normalized predictions. The physical constraint
``IL >= 0`` becomes ``p >= t0`` where ``t0`` is the label scaler's image
of 0 dB; with an identity scaler ``t0 = 0`` and the hinge is ``max(0, -p)``.
Both terms are averaged over the batch, so ``lambda_penalty`` does not
depend on batch size.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class LossSpec:
    lambda_penalty: float = 0.0
    il_zero_normalized: float = 0.0

    def __post_init__(self):
        if not self.lambda_penalty >= 0:
            raise ValueError(f"lambda_penalty must be >= 0, got {self.lambda_penalty!r}")


@dataclass(frozen=True)
class LossValue:
    total: float
    mse: float
    penalty: float


def _flat_pair(predictions, targets):
    p = np.asarray(predictions, dtype=float)
    t = np.asarray(targets, dtype=float)
    if p.shape != t.shape:
        raise ValueError(f"prediction shape {p.shape} != target shape {t.shape}")
    if p.size == 0:
        raise ValueError("empty prediction vector")
    return p, t


def mse(predictions, targets, with_grad=False):
    """Mean squared error; gradient is ``2/N * (p - t)``."""
    p, t = _flat_pair(predictions, targets)
    r = p - t
    value = float(np.mean(r * r))
    if with_grad:
        return value, (2.0 / r.size) * r
    return value


def positivity_penalty(predictions, t0=0.0, with_grad=False):
    """Mean hinge ``max(0, t0 - p)``.

    The subgradient is ``-1/N`` strictly below ``t0`` and 0 at or above it.
    """
    p = np.asarray(predictions, dtype=float)
    if p.size == 0:
        raise ValueError("empty prediction vector")
    gap = t0 - p
    value = float(np.mean(np.maximum(gap, 0.0)))
    if with_grad:
        return value, np.where(gap > 0, -1.0 / p.size, 0.0)
    return value


def combined_loss(predictions, targets, spec: LossSpec, with_grad=False):
    """``mse + lambda * penalty``, optionally with d(total)/d(predictions)."""
    lam = spec.lambda_penalty
    if with_grad:
        m, gm = mse(predictions, targets, with_grad=True)
        pen, gp = positivity_penalty(predictions, spec.il_zero_normalized, with_grad=True)
        value = LossValue(m + lam * pen, m, pen)
        return value, gm + lam * gp
    m = mse(predictions, targets)
    pen = positivity_penalty(predictions, spec.il_zero_normalized)
    return LossValue(m + lam * pen, m, pen)
