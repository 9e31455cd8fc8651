"""Simulated data with known truth.

Survival setups use a scaled Beta(8, 1) baseline hazard, two time-varying
covariates (a random Fourier path and a single jump) and three baseline
covariates.  Regression setups draw a response whose error is a three-part
mixture, optionally correlated with a covariate through a latent variable.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.special import ndtr

from .curves import CDF, SURVIVAL, StepCurve
from .expansion import CoverageError, SurvivalRecord, UncensoredRecord

MIXTURE_PROBS = (0.1, 0.7, 0.2)
_CHUNK = 256


@dataclass
class SurvivalSimConfig:
    setup: int = 1
    n: int = 1000
    tau: float = 100.0
    ds: float = 0.01
    censor_mean: float = 100.0
    seed: int = 0

    def __post_init__(self):
        if self.setup not in (1, 2):
            raise ValueError("setup must be 1 or 2")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not 0 < self.ds < self.tau:
            raise ValueError("need 0 < ds < tau")

    @property
    def n_steps(self) -> int:
        return int(round(self.tau / self.ds))

    def fine_grid(self) -> np.ndarray:
        return np.arange(self.n_steps + 1) * self.ds


@dataclass
class RegressionSimConfig:
    setup: int = 1
    n: int = 1000
    c: float = 0.5
    seed: int = 0

    def __post_init__(self):
        if self.setup not in (1, 2):
            raise ValueError("setup must be 1 or 2")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if not self.c > 0:
            raise ValueError("c must be positive")


@dataclass
class OracleTruth:
    true_curve: StepCurve
    source: str  # "analytic_grid" or "monte_carlo"
    mc_samples: int = 0


def baseline_hazard(t, tau: float = 100.0):
    """Hazard of ``tau * Beta(8, 1)``: ``8u^7 / (1 - u^8)`` with ``u = t / tau``."""
    t = np.asarray(t, dtype=np.float64)
    if np.any(t >= tau) or np.any(t < 0):
        raise ValueError("baseline hazard is defined on [0, tau)")
    u = t / tau
    out = 8.0 * u**7 / (1.0 - u**8)
    return out if out.ndim else float(out)


def _truncated_poisson(rng, lam, upper, size):
    out = rng.poisson(lam, size)
    bad = out > upper
    while bad.any():
        out[bad] = rng.poisson(lam, bad.sum())
        bad = out > upper
    return out.astype(np.float64)


def _truncated_normal(rng, bound, size):
    out = rng.standard_normal(size)
    bad = np.abs(out) > bound
    while bad.any():
        out[bad] = rng.standard_normal(bad.sum())
        bad = np.abs(out) > bound
    return out


def fourier_path(alpha, t, tau: float = 100.0):
    """``a1 + a2 sin(2πt/τ) + a3 cos(2πt/τ) + a4 sin(4πt/τ) + a5 cos(4πt/τ)``.

    ``alpha`` of shape ``(5,)`` gives an array shaped like ``t``; ``(m, 5)``
    gives ``(m, len(t))``.
    """
    alpha = np.asarray(alpha, dtype=np.float64)
    w = 2.0 * np.pi * np.asarray(t, dtype=np.float64) / tau
    basis = np.stack([np.ones_like(w), np.sin(w), np.cos(w), np.sin(2 * w), np.cos(2 * w)], axis=-1)
    out = basis @ alpha.T
    return out.T if alpha.ndim == 2 else out


class SimulatedPath:
    """Covariate path of one simulated survival subject.

    ``x1`` is the Fourier path held constant on each ``(s_{k-1}, s_k]`` cell of
    the fine grid at its value at ``s_k``; ``x2`` jumps from 0 to 1 right after
    ``q``; ``x3..x5`` are constant.  Evaluated on demand instead of stored.
    """

    varying_dim = 2

    def __init__(self, alpha, q, constant, tau=100.0, ds=0.01):
        self.alpha = np.asarray(alpha, dtype=np.float64)
        self.q = float(q)
        self.constant = np.asarray(constant, dtype=np.float64)
        self.tau = float(tau)
        self.ds = float(ds)

    @property
    def end(self) -> float:
        return self.tau

    @property
    def dim(self) -> int:
        return 2 + self.constant.size

    def _cell_end(self, t):
        k = np.ceil(t / self.ds - 1e-9)
        return np.maximum(k, 1.0) * self.ds

    def at(self, t) -> np.ndarray:
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if np.any(t <= 0) or np.any(t > self.tau):
            raise CoverageError(f"path covers (0, {self.tau}], queried [{t.min()}, {t.max()}]")
        x1 = fourier_path(self.alpha, self._cell_end(t), self.tau)
        x2 = (t > self.q).astype(np.float64)
        const = np.broadcast_to(self.constant, (len(t), self.constant.size))
        return np.column_stack([x1, x2, const])

    def segments(self, until: float | None = None):
        """Left-continuous segments ``(start, stop, [x1, x2])`` up to ``until``."""
        until = self.tau if until is None else until
        k_max = int(np.ceil(until / self.ds - 1e-9))
        stops = np.arange(1, k_max + 1) * self.ds
        stops = stops[stops < until]
        if 0 < self.q < until:
            stops = np.union1d(stops, [self.q])
        stops = np.append(stops, until)
        starts = np.concatenate([[0.0], stops[:-1]])
        vals = self.at(stops)[:, :2]
        return list(zip(starts, stops, vals))


def _linear_predictor(setup, x1, x2, x3, x4, x5):
    if setup == 1:
        return 2 * x1 + 2 * x2 + 2 * x3 + 2 * x4 + 2 * x5
    return 2 * x1**2 + 2 * x2 + 2 * x3 * x4 + 2 * x5


def gen_covariate_paths(n: int, config: SurvivalSimConfig, rng=None) -> list:
    """Draw ``n`` covariate paths (Fourier x1, jump x2, baseline x3..x5)."""
    rng = np.random.default_rng(config.seed) if rng is None else rng
    alpha = rng.uniform(0.0, 1.0, size=(n, 5))
    q = rng.uniform(0.0, config.tau, size=n)
    x3 = rng.binomial(1, 0.6, size=n).astype(np.float64)
    x4 = _truncated_poisson(rng, 2.0, 5, n)
    x5 = rng.beta(2.0, 5.0, size=n)
    return [
        SimulatedPath(alpha[i], q[i], [x3[i], x4[i], x5[i]], config.tau, config.ds)
        for i in range(n)
    ]


def _cumulative_hazards(paths, config: SurvivalSimConfig, hazard=None) -> np.ndarray:
    """``Λ`` on the fine grid ``s_0..s_{K-1}`` for each path, shape ``(len(paths), K)``."""
    s = config.fine_grid()[:-1]  # λ0 diverges at tau
    lam0 = baseline_hazard(s, config.tau)
    out = np.empty((len(paths), s.size))
    if hazard is not None:
        for i, p in enumerate(paths):
            lam = np.zeros(s.size)
            lam[1:] = hazard(s[1:], p.at(s[1:]))
            out[i] = config.ds * np.cumsum(lam)
        return out
    for lo in range(0, len(paths), _CHUNK):
        block = paths[lo:lo + _CHUNK]
        alpha = np.array([p.alpha for p in block])
        x1 = fourier_path(alpha, s, config.tau)  # values at grid points themselves
        x2 = s[None, :] > np.array([p.q for p in block])[:, None]
        const = np.array([p.constant for p in block])
        eta = _linear_predictor(config.setup, x1, x2, const[:, :1], const[:, 1:2], const[:, 2:3])
        out[lo:lo + len(block)] = config.ds * np.cumsum(lam0 * np.exp(eta), axis=1)
    return out


def oracle_truth_survival(path, config: SurvivalSimConfig, hazard=None) -> OracleTruth:
    """True discretised ``S`` on the fine grid (``S(tau) = 0``).

    ``hazard(s, X)`` overrides the setup's hazard; it receives the fine-grid
    times and the path's covariates there.
    """
    cum = _cumulative_hazards([path], config, hazard)[0]
    s = config.fine_grid()
    values = np.append(np.exp(-cum), 0.0 if hazard is None else np.exp(-cum[-1]))
    return OracleTruth(StepCurve(s, values, SURVIVAL), "analytic_grid")


def failure_times(cum: np.ndarray, u: np.ndarray, ds: float) -> np.ndarray:
    """``sup{t : S(t) >= u}`` for right-continuous step ``S`` on the fine grid.

    With ``S(t) = S_k`` on ``[s_k, s_{k+1})`` the supremum is ``s_{j+1}`` for
    the last ``j`` with ``S_j >= u``; comparing ``Λ_j <= -log u`` avoids
    rounding ``S`` to 1 for tiny hazards.  Subjects still at risk at the last
    finite grid point get ``tau``.
    """
    with np.errstate(divide="ignore"):
        thresh = -np.log(u)
    count = (cum <= thresh[:, None]).sum(axis=1)
    return count * ds


def gen_survival(config: SurvivalSimConfig, return_truth: bool = False, hazard=None):
    """Simulate right-censored survival records with time-varying covariates."""
    rng = np.random.default_rng(config.seed)
    paths = gen_covariate_paths(config.n, config, rng)
    u = rng.uniform(0.0, 1.0, size=config.n)
    c = rng.exponential(config.censor_mean, size=config.n)
    t = np.empty(config.n)
    truths = [] if return_truth else None
    s = config.fine_grid()
    for lo in range(0, config.n, _CHUNK):
        cum = _cumulative_hazards(paths[lo:lo + _CHUNK], config, hazard)
        t[lo:lo + len(cum)] = failure_times(cum, u[lo:lo + len(cum)], config.ds)
        if return_truth:
            for row in cum:
                truths.append(OracleTruth(StepCurve(s, np.append(np.exp(-row), 0.0), SURVIVAL), "analytic_grid"))
    y = np.minimum(t, c)
    delta = (t <= c).astype(int)
    records = [SurvivalRecord(i, float(y[i]), int(delta[i]), paths[i]) for i in range(config.n)]
    return (records, truths) if return_truth else records


# --- uncensored regression setups ---


def mixture_components(rng, size) -> np.ndarray:
    return rng.choice(3, size=size, p=MIXTURE_PROBS)


def _epsilon(rng, comp, x6):
    size = comp.shape[0]
    normal = rng.standard_normal(size)
    return np.where(comp == 0, normal - 2.0, np.where(comp == 1, normal, 0.5 * x6**2))


def _latent_x6(rng, setup, x1):
    z = rng.standard_normal(x1.shape[0])
    if setup == 1:
        return 1.0 + z
    return 1.0 + 0.5 * x1 + np.sqrt(0.75) * z


def regression_mean_part(x) -> np.ndarray:
    x = np.atleast_2d(x)
    return x[:, 0] ** 2 + x[:, 1] * x[:, 2] + x[:, 2] * x[:, 3] + x[:, 4]


def regression_scale(x, config: RegressionSimConfig) -> np.ndarray:
    x = np.atleast_2d(x)
    return np.full(len(x), config.c) if config.setup == 1 else config.c * x[:, 0] ** 2


def gen_regression_covariates(rng, n: int) -> np.ndarray:
    x1 = _truncated_normal(rng, 3.0, n)
    x2 = rng.uniform(0.0, 1.0, n)
    x3 = rng.beta(0.5, 0.5, n)
    x4 = rng.binomial(1, 0.5, n).astype(np.float64)
    x5 = _truncated_poisson(rng, 2.0, 5, n)
    return np.column_stack([x1, x2, x3, x4, x5])


def gen_regression(config: RegressionSimConfig, return_latent: bool = False):
    """Simulate ``y = x1² + x2x3 + x3x4 + x5 + ε g(x)``; only ``x1..x5`` are exposed."""
    rng = np.random.default_rng(config.seed)
    X = gen_regression_covariates(rng, config.n)
    x6 = _latent_x6(rng, config.setup, X[:, 0])
    comp = mixture_components(rng, config.n)
    eps = _epsilon(rng, comp, x6)
    y = regression_mean_part(X) + eps * regression_scale(X, config)
    records = [UncensoredRecord(i, float(y[i]), X[i]) for i in range(config.n)]
    if return_latent:
        return records, {"x6": x6, "component": comp, "epsilon": eps}
    return records


def oracle_truth_regression(x, config: RegressionSimConfig, times=None, mc_samples: int = 100_000,
                            seed: int = 0) -> OracleTruth:
    """Conditional CDF of ``y`` given ``x1..x5``, marginalising the latent ``x6`` by Monte Carlo."""
    if mc_samples < 100_000:
        raise ValueError("mc_samples must be at least 1e5")
    x = np.asarray(x, dtype=np.float64).reshape(1, 5)
    rng = np.random.default_rng(seed)
    x6 = _latent_x6(rng, config.setup, np.full(mc_samples, x[0, 0]))
    eps = _epsilon(rng, mixture_components(rng, mc_samples), x6)
    draws = np.sort(regression_mean_part(x)[0] + eps * regression_scale(x, config)[0])
    if times is None:
        times = np.unique(np.quantile(draws, np.linspace(0.0005, 0.9995, 400)))
    times = np.asarray(times, dtype=np.float64)
    values = np.searchsorted(draws, times, side="right") / mc_samples
    return OracleTruth(StepCurve(times, values, CDF), "monte_carlo", mc_samples)


def regression_cdf_exact(x, config: RegressionSimConfig, t) -> np.ndarray:
    """Closed-form conditional CDF (mixture of normals and a scaled noncentral chi-square)."""
    x = np.asarray(x, dtype=np.float64).reshape(1, 5)
    t = np.asarray(t, dtype=np.float64)
    m = regression_mean_part(x)[0]
    g = regression_scale(x, config)[0]
    if g == 0:
        return (t >= m).astype(np.float64)
    z = (t - m) / g
    if config.setup == 1:
        mu6, sd6 = 1.0, 1.0
    else:
        mu6, sd6 = 1.0 + 0.5 * x[0, 0], np.sqrt(0.75)
    r = np.sqrt(np.clip(2.0 * z, 0.0, None))
    chi = np.where(z > 0, ndtr((r - mu6) / sd6) - ndtr((-r - mu6) / sd6), 0.0)
    return 0.1 * ndtr(z + 2.0) + 0.7 * ndtr(z) + 0.2 * chi
