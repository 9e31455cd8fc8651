"""Mini-batch training with early stopping, swap-and-average and grid search."""
from __future__ import annotations

import itertools
import logging
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import losses
from .expansion import (
    SURVIVAL,
    UNCENSORED,
    ExpandedRows,
    TimeGrid,
    build_grid,
    expand_censored,
    expand_uncensored,
)
from .nn_core import (
    AdamState,
    GradientBundle,
    Network,
    _adam_inplace,
    _backprop,
    _trace,
    forward_chunked,
    init_network,
)

log = logging.getLogger(__name__)

CENSORED = "censored"
MODES = (CENSORED, "uncensored")


class TrainingDivergence(RuntimeError):
    """Training produced a non-finite loss that the retry could not recover."""


@dataclass
class TrainConfig:
    hidden_width: int = 64
    batch_size: int = 100
    learning_rate: float = 0.001
    patience: int = 10
    max_epochs: int = 1000
    seed: int = 0
    mode: str = CENSORED

    def __post_init__(self):
        for name in ("hidden_width", "batch_size", "patience", "max_epochs"):
            if int(getattr(self, name)) < 1:
                raise ValueError(f"{name} must be >= 1")
        if not self.learning_rate > 0:
            raise ValueError("learning_rate must be positive")
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class HyperGrid:
    widths: tuple = (64, 128, 256)
    learning_rates: tuple = (0.1, 0.01, 0.001, 0.0001)
    batch_sizes: tuple = (64, 128, 256)

    def __post_init__(self):
        if not (self.widths and self.learning_rates and self.batch_sizes):
            raise ValueError("hyperparameter grid sets must be nonempty")

    def cells(self):
        return itertools.product(self.widths, self.learning_rates, self.batch_sizes)


@dataclass
class FitResult:
    network: Network
    best_validation_loss: float
    epochs_run: int
    loss_history: list = field(default_factory=list)  # (epoch, train_loss, val_loss)
    grid: TimeGrid | None = None
    residuals: np.ndarray | None = None  # training residuals of an L2 fit
    learning_rate: float | None = None

    def history_csv(self) -> str:
        lines = ["epoch,train_loss,val_loss"]
        lines += [f"{e},{tr!r},{va!r}" for e, tr, va in self.loss_history]
        return "\n".join(lines) + "\n"


class _LikelihoodObjective:
    def __init__(self, rows: ExpandedRows, n_subjects: int):
        if len(rows) == 0:
            raise ValueError("no expanded rows to fit")
        self.inputs = rows.inputs()
        self.dt = rows.dt
        self.delta = rows.delta.astype(np.float64)
        self.n = n_subjects

    def __len__(self):
        return len(self.dt)

    def batch(self, h, idx):
        """Summed batch loss (on the full-data scale) and d loss / d h."""
        dt, delta = self.dt[idx], self.delta[idx]
        return losses.row_losses(h, dt, delta).sum() / self.n, losses.row_grads(h, dt, delta) / self.n

    def value(self, net):
        h = forward_chunked(net, self.inputs)
        return losses.array_loss(h, self.dt, self.delta, self.n)


class _L2Objective:
    def __init__(self, x, y):
        if len(y) == 0:
            raise ValueError("no observations to fit")
        self.inputs = np.asarray(x, dtype=np.float64)
        self.y = np.asarray(y, dtype=np.float64)

    def __len__(self):
        return len(self.y)

    def batch(self, h, idx):
        r = h - self.y[idx]
        return (r @ r) / len(self), 2.0 * r / len(idx)

    def value(self, net):
        return losses.l2_loss(forward_chunked(net, self.inputs), self.y)


def _run_epoch(net, state, objective, order, batch_size):
    """One pass of mini-batch Adam, updating ``net`` and ``state`` in place.

    Returns the epoch's training loss accumulated over the mini-batches, or
    NaN as soon as a batch produces a non-finite value.
    """
    grads = GradientBundle.zeros_like(net)
    scratch = np.empty_like(net.flat)
    total = 0.0
    for start in range(0, len(order), batch_size):
        idx = order[start:start + batch_size]
        h, acts = _trace(net, objective.inputs[idx])
        batch_loss, g = objective.batch(h, idx)
        if not (np.isfinite(batch_loss) and np.all(np.isfinite(g))):
            return np.nan
        total += batch_loss
        _backprop(net, acts, g, grads)
        _adam_inplace(net, grads, state, scratch)
        if not np.all(np.isfinite(net.flat)):
            return np.nan
    return total


def _fit(train_obj, val_obj, config: TrainConfig) -> FitResult:
    net = init_network(train_obj.inputs.shape[1], config.hidden_width, config.seed)
    net.set_standardizer(train_obj.inputs)
    state = AdamState.for_network(net, config.learning_rate)
    rng = np.random.default_rng(config.seed)

    best_val = val_obj.value(net)
    if not np.isfinite(best_val):
        raise TrainingDivergence("validation loss of the initial network is not finite")
    best_net = net.copy()
    history = [(0, train_obj.value(net), best_val)]
    wait = 0
    epoch = 0
    retried = False
    while epoch < config.max_epochs:
        order = rng.permutation(len(train_obj))
        trial_net = net.copy()
        trial_state = replace(state, first_moment=state.first_moment.copy(),
                              second_moment=state.second_moment.copy())
        train_loss = _run_epoch(trial_net, trial_state, train_obj, order, config.batch_size)
        val_loss = val_obj.value(trial_net) if np.isfinite(train_loss) else np.nan
        if not (np.isfinite(train_loss) and np.isfinite(val_loss)):
            if retried:
                raise TrainingDivergence(f"non-finite loss at epoch {epoch + 1} after halving the learning rate")
            retried = True
            state = replace(state, learning_rate=state.learning_rate / 2.0)
            log.warning("non-finite loss at epoch %d, retrying with lr=%g", epoch + 1, state.learning_rate)
            continue
        net, state = trial_net, trial_state
        epoch += 1
        history.append((epoch, float(train_loss), val_loss))
        if val_loss < best_val:
            best_val, best_net, wait = val_loss, net.copy(), 0
        else:
            wait += 1
            if wait >= config.patience:
                break
    return FitResult(best_net, best_val, epoch, history, learning_rate=state.learning_rate)


def _expand(records, grid, mode):
    return expand_censored(records, grid) if mode == CENSORED else expand_uncensored(records, grid)


def train(train_rows: ExpandedRows, val_rows: ExpandedRows, n_train_subjects: int, n_val_subjects: int,
          config: TrainConfig) -> FitResult:
    """Fit the log-hazard network, keeping the weights with the best validation loss."""
    return _fit(
        _LikelihoodObjective(train_rows, n_train_subjects),
        _LikelihoodObjective(val_rows, n_val_subjects),
        config,
    )


def fit_records(train_records, val_records, config: TrainConfig) -> FitResult:
    """Build the grid from ``train_records``, expand both sets and train."""
    grid_mode = SURVIVAL if config.mode == CENSORED else UNCENSORED
    if config.mode == CENSORED and not any(r.delta for r in train_records):
        raise ValueError("training split contains no events")
    grid = build_grid([r.y for r in train_records], grid_mode)
    result = train(
        _expand(train_records, grid, config.mode),
        _expand(val_records, grid, config.mode),
        len(train_records),
        len(val_records),
        config,
    )
    result.grid = grid
    return result


def split_halves(n: int, seed: int):
    """Random 1:1 split of ``range(n)`` into two index arrays."""
    if n < 2:
        raise ValueError("need at least 2 records to split")
    perm = np.random.default_rng(seed).permutation(n)
    half = n // 2
    return np.sort(perm[:half]), np.sort(perm[half:])


def fit_swap_average(all_records, config: TrainConfig):
    """Fit on half A validated on half B, then the other way round."""
    records = list(all_records)
    a_idx, b_idx = split_halves(len(records), config.seed)
    a = [records[i] for i in a_idx]
    b = [records[i] for i in b_idx]
    return fit_records(a, b, config), fit_records(b, a, config)


def train_l2(train_x, train_y, val_x, val_y, config: TrainConfig) -> FitResult:
    """Conditional-mean network trained with squared error (comparison baseline)."""
    result = _fit(_L2Objective(train_x, train_y), _L2Objective(val_x, val_y), config)
    result.residuals = np.asarray(train_y) - forward_chunked(result.network, np.asarray(train_x, dtype=np.float64))
    return result


def fit_swap_average_l2(all_records, config: TrainConfig):
    records = list(all_records)
    a_idx, b_idx = split_halves(len(records), config.seed)
    x = np.array([r.x for r in records])
    y = np.array([r.y for r in records])
    return (
        train_l2(x[a_idx], y[a_idx], x[b_idx], y[b_idx], config),
        train_l2(x[b_idx], y[b_idx], x[a_idx], y[a_idx], config),
    )


def grid_search(records, grid: HyperGrid, config_base: TrainConfig, fit_fn=fit_swap_average,
                return_fits: bool = False):
    """Pick the cell with the smallest summed validation loss of the fits ``fit_fn`` returns.

    Ties go to the smaller width, then the smaller batch, then the larger
    learning rate.  Returns ``(best_config, table)`` where ``table`` lists every
    cell with its score (``None`` for cells whose training failed); with
    ``return_fits`` the winning cell's fits are appended as a third item.
    """
    table = []
    fits_by_cell = {}
    for width, lr, batch in grid.cells():
        cfg = replace(config_base, hidden_width=width, learning_rate=lr, batch_size=batch)
        try:
            fits = fit_fn(records, cfg)
            score = float(sum(f.best_validation_loss for f in fits))
            if return_fits:
                fits_by_cell[(width, lr, batch)] = fits
        except TrainingDivergence as exc:
            log.warning("grid cell width=%d lr=%g batch=%d failed: %s", width, lr, batch, exc)
            score = None
        table.append({"hidden_width": width, "learning_rate": lr, "batch_size": batch, "score": score})
    ok = [row for row in table if row["score"] is not None and np.isfinite(row["score"])]
    if not ok:
        raise TrainingDivergence("every hyperparameter cell failed")
    best = min(ok, key=lambda r: (r["score"], r["hidden_width"], r["batch_size"], -r["learning_rate"]))
    best_cfg = replace(config_base, hidden_width=best["hidden_width"], learning_rate=best["learning_rate"],
                       batch_size=best["batch_size"])
    if return_fits:
        return best_cfg, table, fits_by_cell[(best["hidden_width"], best["learning_rate"], best["batch_size"])]
    return best_cfg, table
