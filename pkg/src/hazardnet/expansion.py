"""Sample records and the expanded (start, stop] row layout used for training.

Each subject is rewritten as one row per at-risk interval of the training
time grid.  Rows are stored column-wise in :class:`ExpandedRows` because
realistic data sets produce O(n^2) of them.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Iterator, NamedTuple, Sequence

import numpy as np
import pandas as pd

SURVIVAL = "survival"
UNCENSORED = "uncensored"


class CoverageError(ValueError):
    """A covariate path was queried outside the interval it covers."""


class CovariatePath:
    """Piecewise-constant covariate path on ``(start, stop]`` segments.

    Parameters
    ----------
    stops : array of segment right end points, strictly increasing.  The first
        segment starts at ``start`` (0 by default) and each later segment
        starts where the previous one stopped.
    values : ``(n_segments, p_varying)`` array of time-varying covariate values.
    constant : time-independent covariates appended after the varying ones.
    """

    def __init__(self, stops, values, constant=(), start: float = 0.0):
        self.stops = np.asarray(stops, dtype=np.float64).reshape(-1)
        vals = np.asarray(values, dtype=np.float64)
        if vals.ndim == 1:
            vals = vals[:, None]
        self.values = vals
        self.constant = np.asarray(constant, dtype=np.float64).reshape(-1)
        self.start = float(start)
        if len(self.stops) == 0:
            if self.values.size:
                raise ValueError("values given without segments")
        elif len(self.stops) != len(self.values):
            raise ValueError("one row of values is required per segment")
        if np.any(np.diff(self.stops) <= 0) or (len(self.stops) and self.stops[0] <= self.start):
            raise ValueError("segments must be contiguous and strictly increasing")

    @classmethod
    def constant_path(cls, x, end: float = np.inf) -> "CovariatePath":
        return cls([end], np.empty((1, 0)), x)

    @classmethod
    def from_segments(cls, segments, constant=()) -> "CovariatePath":
        """Build from ``[(start, stop, values), ...]`` checking contiguity."""
        segments = list(segments)
        if not segments:
            raise ValueError("at least one segment is required")
        start = segments[0][0]
        prev = start
        for s, e, _ in segments:
            if s != prev:
                raise ValueError(f"segments not contiguous at {s}")
            prev = e
        return cls([e for _, e, _ in segments], [np.atleast_1d(v) for _, _, v in segments], constant, start)

    @property
    def end(self) -> float:
        return float(self.stops[-1])

    @property
    def dim(self) -> int:
        return self.values.shape[1] + self.constant.size

    def at(self, t) -> np.ndarray:
        """Covariates at times ``t`` as a ``(len(t), dim)`` array."""
        t = np.atleast_1d(np.asarray(t, dtype=np.float64))
        if np.any(t <= self.start) or np.any(t > self.end):
            raise CoverageError(f"path covers ({self.start}, {self.end}], queried [{t.min()}, {t.max()}]")
        idx = np.searchsorted(self.stops, t, side="left")
        varying = self.values[idx]
        const = np.broadcast_to(self.constant, (len(t), self.constant.size))
        return np.concatenate([varying, const], axis=1)

    def extended(self, until: float) -> "CovariatePath":
        """Carry the last value forward so the path covers ``(start, until]``."""
        if until <= self.end:
            return self
        return CovariatePath(
            np.append(self.stops, until), np.vstack([self.values, self.values[-1:]]), self.constant, self.start
        )

    def segments(self, until: float | None = None):
        """``(start, stop, values)`` triples, truncated at ``until``."""
        stops = self.stops
        if until is not None:
            stops = stops[: np.searchsorted(stops, until, side="left") + 1]
        starts = np.concatenate([[self.start], stops[:-1]])
        return list(zip(starts, stops, self.values))


def covariate_at(path, t: float) -> np.ndarray:
    """Covariate vector of ``path`` at a single time ``t``."""
    return path.at([t])[0]


@dataclass
class SurvivalRecord:
    id: object
    y: float
    delta: int
    path: object  # anything with .at(times) and .end

    def __post_init__(self):
        if not self.y > 0:
            raise ValueError(f"subject {self.id}: observed time must be positive")
        if self.delta not in (0, 1):
            raise ValueError(f"subject {self.id}: event indicator must be 0 or 1")
        if self.path.end < self.y:
            raise CoverageError(f"subject {self.id}: path ends at {self.path.end} before y={self.y}")


@dataclass
class UncensoredRecord:
    id: object
    y: float
    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=np.float64).reshape(-1)
        if not (np.isfinite(self.y) and np.all(np.isfinite(self.x))):
            raise ValueError(f"subject {self.id}: non-finite entries")


@dataclass(frozen=True)
class TimeGrid:
    """Sorted distinct observed times of a training set.

    ``origin`` is 0 for survival data and ``-inf`` for general responses;
    ``n_subjects`` is the training sample size the grid came from.
    """

    times: np.ndarray
    origin: float
    n_subjects: int

    @property
    def mode(self) -> str:
        return SURVIVAL if self.origin == 0 else UNCENSORED

    def __len__(self):
        return len(self.times)

    def to_dict(self) -> dict:
        return {"times": self.times.tolist(), "origin": self.mode, "n_subjects": self.n_subjects}

    @classmethod
    def from_dict(cls, doc: dict) -> "TimeGrid":
        origin = 0.0 if doc["origin"] == SURVIVAL else -np.inf
        return cls(np.asarray(doc["times"], dtype=np.float64), origin, int(doc["n_subjects"]))


def build_grid(ys: Sequence[float], mode: str = SURVIVAL) -> TimeGrid:
    ys = np.asarray(ys, dtype=np.float64).reshape(-1)
    if ys.size == 0:
        raise ValueError("cannot build a grid from no observations")
    if not np.all(np.isfinite(ys)):
        raise ValueError("observed times must be finite")
    if mode == SURVIVAL:
        if np.any(ys < 0):
            raise ValueError("survival times must be non-negative")
        origin = 0.0
    elif mode == UNCENSORED:
        origin = -np.inf
    else:
        raise ValueError(f"unknown mode {mode!r}")
    return TimeGrid(np.unique(ys), origin, int(ys.size))


class ExpandedRow(NamedTuple):
    subject_id: object
    t_prev: float
    t: float
    delta_ij: int
    x_at_t: np.ndarray


@dataclass
class ExpandedRows:
    """Column-wise collection of expanded rows."""

    subject_id: np.ndarray
    t_prev: np.ndarray
    t: np.ndarray
    delta: np.ndarray
    x: np.ndarray

    def __len__(self):
        return len(self.t)

    def __iter__(self) -> Iterator[ExpandedRow]:
        for k in range(len(self)):
            yield ExpandedRow(self.subject_id[k], self.t_prev[k], self.t[k], int(self.delta[k]), self.x[k])

    @property
    def dt(self) -> np.ndarray:
        return self.t - self.t_prev

    def inputs(self) -> np.ndarray:
        """Network input matrix ``[t_prev, t, x...]``."""
        return np.column_stack([self.t_prev, self.t, self.x])

    def to_frame(self) -> pd.DataFrame:
        df = pd.DataFrame(
            {"id": self.subject_id, "t_prev": self.t_prev, "t": self.t, "delta_ij": self.delta.astype(int)}
        )
        for k in range(self.x.shape[1]):
            df[f"x{k + 1}"] = self.x[:, k]
        return df

    def to_csv(self, path) -> None:
        self.to_frame().to_csv(path, index=False)

    @classmethod
    def concat(cls, parts, p: int) -> "ExpandedRows":
        parts = [q for q in parts if len(q)]
        if not parts:
            return cls.empty(p)
        return cls(*(np.concatenate([getattr(q, f) for q in parts]) for f in ("subject_id", "t_prev", "t", "delta", "x")))

    @classmethod
    def empty(cls, p: int) -> "ExpandedRows":
        return cls(np.array([], dtype=object), np.empty(0), np.empty(0), np.empty(0, dtype=np.int8), np.empty((0, p)))


def _intervals(y: float, grid: TimeGrid, first: int):
    """Interval end points for one subject.

    Grid times strictly below ``y`` from index ``first`` on, closed by ``y``
    itself.  For training subjects ``y`` is a grid time, so this is exactly
    the set ``{t_j : t_j <= y}``; held-out subjects get a terminal interval
    ending at their own observed time.
    """
    times = grid.times
    k = np.searchsorted(times, y, side="left")  # times[:k] < y
    stops = np.append(times[first:k], y) if k >= first else np.empty(0)
    if first == 0:
        starts = np.concatenate([[grid.origin], times[:k]])
    else:
        starts = times[first - 1:k]
    return starts[: len(stops)], stops


def expand_censored(records: Sequence[SurvivalRecord], grid: TimeGrid) -> ExpandedRows:
    """Expand survival records to one row per grid interval at risk."""
    if grid.mode != SURVIVAL:
        raise ValueError("censored expansion needs a survival grid")
    parts = []
    p = None
    for r in records:
        starts, stops = _intervals(r.y, grid, 0)
        x = r.path.at(stops)
        p = x.shape[1]
        m = len(stops)
        delta = np.zeros(m, dtype=np.int8)
        delta[-1] = r.delta
        ids = np.empty(m, dtype=object)
        ids[:] = [r.id] * m
        parts.append(ExpandedRows(ids, starts, stops, delta, x))
    return ExpandedRows.concat(parts, p or 0)


def expand_uncensored(records: Sequence[UncensoredRecord], grid: TimeGrid) -> ExpandedRows:
    """Expand uncensored records, dropping each subject's ``(-inf, t_1]`` row."""
    if grid.mode != UNCENSORED:
        raise ValueError("uncensored expansion needs an uncensored grid")
    parts = []
    p = len(records[0].x) if len(records) else 0
    for r in records:
        if r.y <= grid.times[0]:
            continue
        starts, stops = _intervals(r.y, grid, 1)
        m = len(stops)
        delta = np.zeros(m, dtype=np.int8)
        delta[-1] = 1
        ids = np.empty(m, dtype=object)
        ids[:] = [r.id] * m
        parts.append(ExpandedRows(ids, starts, stops, delta, np.broadcast_to(r.x, (m, r.x.size))))
    return ExpandedRows.concat(parts, p)


# --- CSV ingestion / emission ---


def _x_columns(df: pd.DataFrame) -> list:
    cols = [c for c in df.columns if c.startswith("x") and c[1:].isdigit()]
    return sorted(cols, key=lambda c: int(c[1:]))


def read_survival_csv(path, require_event: bool = True) -> list:
    """Read long-format survival data (``id, start, stop, event, x1..xp``).

    One row per covariate segment; the last segment of a subject ends at the
    observed time and its ``event`` value is the subject's indicator.
    Covariates that never change within any subject are stored as constants.
    """
    df = pd.read_csv(path, float_precision="round_trip")
    needed = ["id", "start", "stop"] + (["event"] if require_event else [])
    missing = [c for c in needed if c not in df.columns]
    if missing:
        raise ValueError(f"survival CSV is missing columns {missing}")
    xcols = _x_columns(df)
    if not xcols:
        raise ValueError("survival CSV has no x1..xp covariate columns")
    records = []
    for sid, g in df.groupby("id", sort=False):
        g = g.sort_values("stop")
        path = CovariatePath(g["stop"].to_numpy(), g[xcols].to_numpy(dtype=np.float64), (), g["start"].iloc[0])
        if np.any(g["start"].to_numpy()[1:] != g["stop"].to_numpy()[:-1]):
            raise ValueError(f"subject {sid}: segments are not contiguous")
        delta = int(g["event"].iloc[-1]) if require_event else 0
        records.append(SurvivalRecord(sid, float(g["stop"].iloc[-1]), delta, path))
    return records


def write_survival_csv(records, path, n_covariates: int | None = None) -> None:
    rows = []
    for r in records:
        for s, e, v in r.path.segments(until=r.y):
            if s >= r.y:
                break
            stop = min(e, r.y)
            last = stop >= r.y
            x = np.concatenate([np.atleast_1d(v), r.path.constant]) if hasattr(r.path, "constant") else v
            rows.append([r.id, s, stop, r.delta if last else 0, *x])
            if last:
                break
    p = len(rows[0]) - 4 if rows else (n_covariates or 0)
    df = pd.DataFrame(rows, columns=["id", "start", "stop", "event"] + [f"x{k + 1}" for k in range(p)])
    df.to_csv(path, index=False)


def read_uncensored_csv(path, require_y: bool = True) -> list:
    """Read wide regression data (``y, x1..xp``); ids are row numbers."""
    df = pd.read_csv(path, float_precision="round_trip")
    if require_y and "y" not in df.columns:
        raise ValueError("regression CSV needs a 'y' column")
    xcols = _x_columns(df)
    if not xcols:
        raise ValueError("regression CSV has no x1..xp covariate columns")
    X = df[xcols].to_numpy(dtype=np.float64)
    ids = df["id"].tolist() if "id" in df.columns else list(range(len(df)))
    ys = df["y"].to_numpy(dtype=np.float64) if "y" in df.columns else np.full(len(df), np.nan)
    if not require_y:
        return [(i, x) for i, x in zip(ids, X)]
    return [UncensoredRecord(i, float(y), x) for i, y, x in zip(ids, ys, X)]


def write_uncensored_csv(records, path) -> None:
    X = np.array([r.x for r in records])
    df = pd.DataFrame({"y": [r.y for r in records]})
    for k in range(X.shape[1]):
        df[f"x{k + 1}"] = X[:, k]
    df.to_csv(path, index=False)
