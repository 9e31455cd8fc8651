"""Evaluation criteria for survival and regression predictions.

Censoring is handled with inverse probability of censoring weights taken from
a Kaplan-Meier fit to the censoring times.
"""
from __future__ import annotations

import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np

from .curves import CENSOR_SURVIVAL, StepCurve

log = logging.getLogger(__name__)

BLL_CLIP = 1e-7


@dataclass
class EvalReport:
    c_index: float | None = None
    ibs: float | None = None
    ibll: float | None = None
    mse: float | None = None
    median_se: float | None = None
    r2: float | None = None
    coverage: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        d = asdict(self)
        d["coverage"] = {str(k): v for k, v in sorted(self.coverage.items())}
        return {k: v for k, v in d.items() if v is not None}

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def _arrays(records):
    y = np.array([r.y for r in records], dtype=np.float64)
    delta = np.array([r.delta for r in records], dtype=np.int64)
    return y, delta


def km_censoring(records) -> StepCurve:
    """Kaplan-Meier estimate of the censoring survival function ``G``.

    Censored observations are the "events"; the risk set at ``t`` is every
    subject with ``y >= t``.
    """
    y, delta = _arrays(records)
    if y.size == 0:
        raise ValueError("no records")
    return km_curve(y, 1 - delta, kind=CENSOR_SURVIVAL)


def km_curve(y, events, kind: str = CENSOR_SURVIVAL) -> StepCurve:
    y = np.asarray(y, dtype=np.float64)
    events = np.asarray(events)
    times, inverse = np.unique(y, return_inverse=True)
    n_events = np.bincount(inverse, weights=events, minlength=times.size)
    n_at_t = np.bincount(inverse, minlength=times.size)
    at_risk = y.size - np.concatenate([[0], np.cumsum(n_at_t)[:-1]])
    values = np.cumprod(1.0 - n_events / at_risk)
    return StepCurve(times, values, kind)


def _left_limit(curve: StepCurve, t):
    idx = np.searchsorted(curve.times, t, side="left") - 1
    return np.where(idx >= 0, curve.values[np.clip(idx, 0, None)], curve.initial)


def survival_matrix(curves, times) -> np.ndarray:
    """``out[i, k] = curves[i](times[k])``."""
    times = np.atleast_1d(np.asarray(times, dtype=np.float64))
    return np.array([c(times) for c in curves]).reshape(len(curves), times.size)


def c_index_td(test_records, curves) -> float:
    """Share of comparable pairs whose predicted survival is ordered correctly.

    A pair ``(i, j)`` is comparable when ``y_i < y_j`` and subject ``i`` had an
    event; it is concordant when ``Ŝ_i(y_i) < Ŝ_j(y_i)``.  Tied predictions
    count one half.
    """
    y, delta = _arrays(test_records)
    if len(curves) != y.size:
        raise ValueError("one curve per test subject is required")
    # M[j, i] = Ŝ_j(y_i)
    M = survival_matrix(curves, y)
    own = np.diag(M)
    comparable = (y[:, None] < y[None, :]) & (delta[:, None] == 1)
    other = M.T  # other[i, j] = Ŝ_j(y_i)
    concordant = (own[:, None] < other) & comparable
    ties = (own[:, None] == other) & comparable
    n_pairs = comparable.sum()
    if n_pairs == 0:
        raise ValueError("no comparable pairs")
    return float((concordant.sum() + 0.5 * ties.sum()) / n_pairs)


def _ipcw_terms(y, delta, t, g_hat: StepCurve, left_limit: bool):
    """Weights for the two branches of the censoring-adjusted scores at ``t``."""
    dead = (y <= t) & (delta == 1)
    alive = y > t
    g_y = _left_limit(g_hat, y) if left_limit else g_hat(y)
    g_t = g_hat(t)
    w = np.zeros(y.size)
    bad_dead = dead & (g_y <= 0)
    bad_alive = alive & (g_t <= 0)
    ok_dead = dead & ~bad_dead
    ok_alive = alive & ~bad_alive
    w[ok_dead] = 1.0 / g_y[ok_dead]
    if g_t > 0:
        w[ok_alive] = 1.0 / g_t
    dropped = int(bad_dead.sum() + bad_alive.sum())
    if dropped:
        log.info("t=%g: %d subjects dropped for zero censoring weight", t, dropped)
    if not (ok_dead.any() or ok_alive.any()) and (dead.any() or alive.any()):
        raise ValueError(f"all censoring weights are zero at t={t}")
    return ok_dead, ok_alive, w


def brier_score(test_records, curves, t: float, g_hat: StepCurve, left_limit: bool = False,
                surv_at_t=None) -> float:
    y, delta = _arrays(test_records)
    s = survival_matrix(curves, t)[:, 0] if surv_at_t is None else np.asarray(surv_at_t)
    dead, alive, w = _ipcw_terms(y, delta, t, g_hat, left_limit)
    terms = np.where(dead, s**2 * w, 0.0) + np.where(alive, (1.0 - s) ** 2 * w, 0.0)
    return float(terms.sum() / y.size)


def bll_score(test_records, curves, t: float, g_hat: StepCurve, left_limit: bool = False,
              surv_at_t=None) -> float:
    y, delta = _arrays(test_records)
    s = survival_matrix(curves, t)[:, 0] if surv_at_t is None else np.asarray(surv_at_t)
    s = np.clip(s, BLL_CLIP, 1.0 - BLL_CLIP)
    dead, alive, w = _ipcw_terms(y, delta, t, g_hat, left_limit)
    terms = np.where(dead, np.log(1.0 - s) * w, 0.0) + np.where(alive, np.log(s) * w, 0.0)
    return float(terms.sum() / y.size)


def integrate_score(score_fn, time_range, n_points: int = 100) -> float:
    """Trapezoidal time-average of ``score_fn`` over ``time_range``."""
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    lo, hi = float(time_range[0]), float(time_range[1])
    if not hi > lo:
        raise ValueError("degenerate integration range")
    ts = np.linspace(lo, hi, n_points)
    vals = np.array([score_fn(t) for t in ts])
    return float(np.trapezoid(vals, ts) / (hi - lo))


def integrated_scores(test_records, curves, g_hat: StepCurve | None = None, n_points: int = 100,
                      left_limit: bool = False):
    """``(IBS, IBLL)`` over ``[min y, max y]`` of the test set."""
    y, _ = _arrays(test_records)
    g_hat = km_censoring(test_records) if g_hat is None else g_hat
    ts = np.linspace(y.min(), y.max(), n_points)
    S = survival_matrix(curves, ts)
    col = {t: S[:, k] for k, t in enumerate(ts)}
    ibs = integrate_score(lambda t: brier_score(test_records, None, t, g_hat, left_limit, col[t]),
                          (y.min(), y.max()), n_points)
    ibll = integrate_score(lambda t: bll_score(test_records, None, t, g_hat, left_limit, col[t]),
                           (y.min(), y.max()), n_points)
    return ibs, ibll


def score_trace(test_records, curves, n_points: int = 100, g_hat: StepCurve | None = None,
                left_limit: bool = False):
    """``(ts, BS(ts), BLL(ts))`` on the integration grid, for plotting."""
    y, _ = _arrays(test_records)
    g_hat = km_censoring(test_records) if g_hat is None else g_hat
    ts = np.linspace(y.min(), y.max(), n_points)
    S = survival_matrix(curves, ts)
    bs = np.array([brier_score(test_records, None, t, g_hat, left_limit, S[:, k]) for k, t in enumerate(ts)])
    bll = np.array([bll_score(test_records, None, t, g_hat, left_limit, S[:, k]) for k, t in enumerate(ts)])
    return ts, bs, bll


def survival_report(test_records, curves, n_points: int = 100, left_limit: bool = False) -> EvalReport:
    ibs, ibll = integrated_scores(test_records, curves, None, n_points, left_limit)
    return EvalReport(
        c_index=c_index_td(test_records, curves),
        ibs=ibs,
        ibll=ibll,
        meta={"n_test": len(test_records), "g_at_y": "left_limit" if left_limit else "right_continuous"},
    )


def regression_metrics(predictions, intervals, targets) -> EvalReport:
    """Squared-error summaries, R² and interval coverage.

    ``intervals`` maps a level to a sequence of ``(lower, upper)`` pairs (or
    :class:`~hazardnet.curves.PredictiveInterval` objects), one per target.
    """
    p = np.asarray(predictions, dtype=np.float64)
    y = np.asarray(targets, dtype=np.float64)
    if p.shape != y.shape:
        raise ValueError("predictions and targets differ in length")
    if y.size == 0:
        raise ValueError("empty test set")
    se = (p - y) ** 2
    sst = np.sum((y - y.mean()) ** 2)
    if sst == 0:
        raise ValueError("targets have zero variance")
    coverage = {}
    for level, ivs in (intervals or {}).items():
        bounds = np.array([(iv.lower, iv.upper) if hasattr(iv, "lower") else tuple(iv) for iv in ivs])
        if len(bounds) != y.size:
            raise ValueError(f"level {level}: one interval per target is required")
        coverage[float(level)] = float(np.mean((bounds[:, 0] <= y) & (y <= bounds[:, 1])))
    return EvalReport(
        mse=float(se.mean()),
        median_se=float(np.median(se)),
        r2=float(1.0 - se.sum() / sst),
        coverage=coverage,
        meta={"n_test": int(y.size), "sse": float(se.sum()), "sst": float(sst)},
    )
