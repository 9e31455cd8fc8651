"""Discretised negative log-likelihood over expanded rows, plus the L2 loss.

Every expanded row contributes ``exp(h) * dt - h * delta`` and the sum is
divided by the number of subjects, not the number of rows.
"""
from __future__ import annotations

from typing import NamedTuple

import numpy as np

H_CLAMP = 30.0


class RowLossInput(NamedTuple):
    h: float
    dt: float
    delta_ij: int


class LossValue(NamedTuple):
    total: float
    n_subjects: int
    constant: float = 0.0

    @property
    def full(self) -> float:
        """Loss including the additive constant dropped from optimisation."""
        return self.total + self.constant


def _columns(rows):
    rows = list(rows)
    if not rows:
        return np.empty(0), np.empty(0), np.empty(0)
    return (np.asarray(c, dtype=np.float64) for c in zip(*rows))


def row_losses(h, dt, delta) -> np.ndarray:
    """Per-row summand; the clamp only applies inside the exponential."""
    return np.exp(np.clip(h, -H_CLAMP, H_CLAMP)) * dt - h * delta


def row_grads(h, dt, delta) -> np.ndarray:
    """d(row loss)/dh, treating the exponential as saturated beyond the clamp."""
    inside = np.abs(h) <= H_CLAMP
    return np.where(inside, np.exp(np.clip(h, -H_CLAMP, H_CLAMP)) * dt, 0.0) - delta


def array_loss(h, dt, delta, n_subjects: int) -> float:
    """Column-array form of :func:`censored_loss` used by the trainer."""
    if n_subjects < 1:
        raise ValueError("n_subjects must be >= 1")
    if np.any(dt <= 0):
        raise ValueError("interval lengths must be positive")
    return float(row_losses(h, dt, delta).sum() / n_subjects)


def censored_loss(rows, n_subjects: int) -> LossValue:
    """Mean over subjects of the summed row contributions."""
    h, dt, delta = _columns(rows)
    return LossValue(array_loss(h, dt, delta, n_subjects), n_subjects)


def uncensored_constant(n_subjects: int) -> float:
    """The ``-log(1 - 1/n)`` term contributed by the point mass at ``t_1``."""
    with np.errstate(divide="ignore"):
        return float(-np.log1p(-1.0 / n_subjects))


def uncensored_loss(rows, n_subjects: int) -> LossValue:
    """Same summand as :func:`censored_loss`; the dropped constant is reported
    separately in ``LossValue.constant``."""
    value = censored_loss(rows, n_subjects)
    return value._replace(constant=uncensored_constant(n_subjects))


def loss_grad_h(row: RowLossInput, n_subjects: int) -> float:
    h, dt, delta = row
    if dt <= 0:
        raise ValueError("interval length must be positive")
    return float(row_grads(h, dt, delta) / n_subjects)


def l2_loss(predictions, targets) -> float:
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} vs {y.shape}")
    if p.size == 0:
        raise ValueError("empty input")
    return float(np.mean((p - y) ** 2))
