"""Survival / distribution curves reconstructed from a fitted log-hazard network."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .expansion import TimeGrid
from .losses import H_CLAMP
from .nn_core import Network, forward_chunked

SURVIVAL = "survival"
CDF = "cdf"
CENSOR_SURVIVAL = "censor_survival"
KINDS = (SURVIVAL, CDF, CENSOR_SURVIVAL)


@dataclass
class StepCurve:
    """Right-continuous step function known at ``times``.

    Before ``times[0]`` a survival-type curve equals 1 and a CDF equals 0.
    """

    times: np.ndarray
    values: np.ndarray
    kind: str = SURVIVAL
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=np.float64)
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.kind not in KINDS:
            raise ValueError(f"unknown curve kind {self.kind!r}")
        if self.times.shape != self.values.shape or self.times.ndim != 1:
            raise ValueError("times and values must be 1-d arrays of equal length")
        if np.any(np.diff(self.times) <= 0):
            raise ValueError("curve times must be strictly increasing")

    @property
    def initial(self) -> float:
        return 0.0 if self.kind == CDF else 1.0

    def __call__(self, t):
        t = np.asarray(t, dtype=np.float64)
        idx = np.searchsorted(self.times, t, side="right") - 1
        out = np.where(idx >= 0, self.values[np.clip(idx, 0, None)], self.initial)
        return out if out.ndim else float(out)

    def resample(self, times) -> "StepCurve":
        times = np.asarray(times, dtype=np.float64)
        return StepCurve(times, self(times), self.kind, dict(self.meta))

    def to_cdf(self) -> "StepCurve":
        if self.kind == CDF:
            return self
        return StepCurve(self.times, 1.0 - self.values, CDF, dict(self.meta))

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write(f"# kind={self.kind}\n")
            for key in sorted(self.meta):
                fh.write(f"# {key}={self.meta[key]}\n")
            pd.DataFrame({"t": self.times, "value": self.values}).to_csv(fh, index=False)

    @classmethod
    def from_csv(cls, path) -> "StepCurve":
        meta = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                if not line.startswith("#"):
                    break
                key, _, val = line[1:].strip().partition("=")
                meta[key] = val
        df = pd.read_csv(path, comment="#", float_precision="round_trip")
        kind = meta.pop("kind", SURVIVAL)
        return cls(df["t"].to_numpy(), df["value"].to_numpy(), kind, meta)


@dataclass
class PredictiveInterval:
    lower: float
    upper: float
    level: float
    extrapolated: bool = False

    def __post_init__(self):
        if self.lower > self.upper:
            raise ValueError("lower bound exceeds upper bound")

    def covers(self, y: float) -> bool:
        return self.lower <= y <= self.upper


def _interval_hazards(net: Network, starts, stops, x) -> np.ndarray:
    inputs = np.column_stack([starts, stops, x])
    h = forward_chunked(net, inputs)
    return np.exp(np.clip(h, -H_CLAMP, H_CLAMP)) * (stops - starts)


def survival_curve(net: Network, path, grid: TimeGrid) -> StepCurve:
    """Ŝ at each grid time from the cumulative interval hazards."""
    times = grid.times
    starts = np.concatenate([[0.0], times[:-1]])
    increments = _interval_hazards(net, starts, times, path.at(times))
    values = np.exp(-np.cumsum(increments))
    return StepCurve(times, values, SURVIVAL, {"n": grid.n_subjects})


def cdf_curve(net: Network, x, grid: TimeGrid) -> StepCurve:
    """F̂ with the 1/n point mass at ``t_1`` and hazard increments afterwards."""
    times = grid.times
    if len(times) < 2:
        raise ValueError("a distribution curve needs at least two grid times")
    x = np.asarray(x, dtype=np.float64).reshape(-1)
    n = grid.n_subjects
    increments = _interval_hazards(net, times[:-1], times[1:], np.broadcast_to(x, (len(times) - 1, x.size)))
    cum = np.concatenate([[0.0], np.cumsum(increments)])
    # 1/n + (1 - 1/n)(1 - e^{-cum}) keeps F(t_1) == 1/n exactly and F >= 1/n
    values = 1.0 / n + (1.0 - 1.0 / n) * -np.expm1(-cum)
    return StepCurve(times, values, CDF, {"n": n})


def shifted_residual_cdf(center: float, residuals) -> StepCurve:
    """Empirical distribution of ``center + residuals``."""
    pts = np.sort(center + np.asarray(residuals, dtype=np.float64))
    times, counts = np.unique(pts, return_counts=True)
    return StepCurve(times, np.cumsum(counts) / pts.size, CDF, {"n": pts.size})


def _require_cdf(curve: StepCurve) -> None:
    if curve.kind != CDF:
        raise ValueError(f"expected a cdf curve, got {curve.kind!r}")


def mean_from_cdf(curve: StepCurve) -> float:
    """Mean of the step distribution; mass left beyond the grid sits at the last time."""
    _require_cdf(curve)
    jumps = np.diff(curve.values, prepend=0.0)
    residual = 1.0 - curve.values[-1]
    return float(np.sum(curve.times * jumps) + curve.times[-1] * residual)


def quantile_from_cdf(curve: StepCurve, p: float) -> tuple[float, bool]:
    """Generalised inverse ``min{t : F(t) >= p}``.

    Returns ``(value, extrapolated)``; ``extrapolated`` is set when F never
    reaches ``p`` on the grid and the last grid time is returned instead.
    """
    _require_cdf(curve)
    if not 0.0 < p < 1.0:
        raise ValueError("p must lie in (0, 1)")
    idx = int(np.searchsorted(curve.values, p, side="left"))
    if idx >= len(curve.times):
        return float(curve.times[-1]), True
    return float(curve.times[idx]), False


def predictive_interval(curve: StepCurve, level: float) -> PredictiveInterval:
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    alpha = (1.0 - level) / 2.0
    lo, lo_flag = quantile_from_cdf(curve, alpha)
    hi, hi_flag = quantile_from_cdf(curve, 1.0 - alpha)
    return PredictiveInterval(lo, hi, level, lo_flag or hi_flag)


def average_curves(a: StepCurve, b: StepCurve) -> StepCurve:
    if a.kind != b.kind:
        raise ValueError("cannot average curves of different kinds")
    if a.times.shape != b.times.shape or not np.array_equal(a.times, b.times):
        raise ValueError("curves are defined on different grids")
    return StepCurve(a.times, (a.values + b.values) / 2.0, a.kind, dict(a.meta))


def average_swapped(a: StepCurve, b: StepCurve) -> StepCurve:
    """Average two step functions defined on different grids.

    Both are evaluated on the union of their grids first, which leaves each
    function unchanged as a right-continuous step function.
    """
    times = np.union1d(a.times, b.times)
    out = average_curves(a.resample(times), b.resample(times))
    out.meta = {"n": a.meta.get("n", 0) + b.meta.get("n", 0)}
    return out
