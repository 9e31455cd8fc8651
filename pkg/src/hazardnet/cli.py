"""Command-line interface: simulate, train, predict, evaluate and crossval.

Every command writes a ``manifest.json`` holding the resolved configuration,
its sha256 and the hashes of the input files.  Outputs contain no timestamps
or absolute paths, so rerunning a command with the same manifest reproduces
its files byte for byte.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical
failure.
"""
from __future__ import annotations

import argparse
import copy
import hashlib
import json
import logging
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd

from . import __version__
from .curves import (
    CDF,
    StepCurve,
    average_swapped,
    cdf_curve,
    mean_from_cdf,
    predictive_interval,
    quantile_from_cdf,
    shifted_residual_cdf,
    survival_curve,
)
from .expansion import (
    CoverageError,
    TimeGrid,
    read_survival_csv,
    read_uncensored_csv,
    write_survival_csv,
    write_uncensored_csv,
)
from .metrics import EvalReport, regression_metrics, score_trace, survival_report
from .nn_core import Network, forward
from .simgen import (
    RegressionSimConfig,
    SurvivalSimConfig,
    gen_regression,
    gen_survival,
    oracle_truth_regression,
)
from .trainer import (
    CENSORED,
    FitResult,
    HyperGrid,
    TrainConfig,
    TrainingDivergence,
    fit_records,
    fit_swap_average,
    fit_swap_average_l2,
    grid_search,
    train_l2,
)

log = logging.getLogger("hazardnet")

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 2, 3, 4
UNCENSORED = "uncensored"
LIKELIHOOD, L2 = "likelihood", "l2"
MODEL_FILES = ("model_a.json", "model_b.json")
MODEL_FORMAT = 1


class ConfigError(ValueError):
    """Invalid or inconsistent configuration (exit code 2)."""


class DataError(ValueError):
    """Input data is missing, malformed or inconsistent with a model (exit code 3)."""


# --- configuration ---

DEFAULTS = {
    "train": {k: v for k, v in asdict(TrainConfig()).items() if k not in ("seed", "mode")},
    "grid": {k: list(v) for k, v in asdict(HyperGrid()).items()},
    "sim": {"setup": 1, "n": 1000, "c": 0.5, "tau": 100.0, "ds": 0.01, "censor_mean": 100.0},
    "truth_subjects": 9,
    "levels": [0.9, 0.95],
    "folds": 5,
    "n_points": 100,
}


@dataclass
class RunConfig:
    """Resolved settings of one command invocation."""

    command: str
    mode: str = CENSORED
    loss: str = LIKELIHOOD
    seed: int = 0
    tune: bool = False
    settings: dict = field(default_factory=lambda: copy.deepcopy(DEFAULTS))

    def train_config(self) -> TrainConfig:
        opts = dict(self.settings["train"], seed=self.seed, mode=self.mode)
        try:
            return TrainConfig(**opts)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid train settings: {exc}") from exc

    def hyper_grid(self) -> HyperGrid:
        try:
            return HyperGrid(**{k: tuple(v) for k, v in self.settings["grid"].items()})
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid grid settings: {exc}") from exc

    @property
    def levels(self) -> list:
        return [float(v) for v in self.settings["levels"]]

    def to_dict(self) -> dict:
        return {"command": self.command, "mode": self.mode, "loss": self.loss, "seed": self.seed,
                "tune": self.tune, "settings": self.settings}


@dataclass
class CVProtocol:
    folds: int = 5
    split_seed: int = 0
    validation_on_test: bool = False
    tuning: HyperGrid | None = None

    def __post_init__(self):
        if self.folds < 2:
            raise ConfigError("crossval needs at least 2 folds")

    def assignments(self, n: int) -> np.ndarray:
        """Fold label of each of ``n`` records."""
        if n < self.folds:
            raise DataError(f"{n} records cannot fill {self.folds} folds")
        perm = np.random.default_rng(self.split_seed).permutation(n)
        labels = np.empty(n, dtype=int)
        for k, part in enumerate(np.array_split(perm, self.folds)):
            labels[part] = k
        return labels

    def fold_seeds(self) -> list:
        return [int(s) for s in np.random.SeedSequence(self.split_seed).generate_state(self.folds)]


def _merge(base: dict, override: dict, where: str = "") -> None:
    for key, value in override.items():
        if key not in base:
            raise ConfigError(f"unknown config key {where}{key!r}")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"config key {where}{key!r} must be an object")
            _merge(base[key], value, f"{where}{key}.")
        else:
            base[key] = value


def resolve_config(args) -> RunConfig:
    settings = copy.deepcopy(DEFAULTS)
    file_doc = {}
    if args.config:
        try:
            file_doc = json.loads(Path(args.config).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(file_doc, dict):
            raise ConfigError("config file must hold a JSON object")
    top = {k: file_doc.pop(k) for k in ("mode", "loss", "seed", "tune") if k in file_doc}
    _merge(settings, file_doc)
    for key in ("setup", "n", "c"):
        value = getattr(args, key, None)
        if value is not None:
            settings["sim"][key] = value
    if getattr(args, "folds", None) is not None:
        settings["folds"] = args.folds
    if getattr(args, "truth_subjects", None) is not None:
        settings["truth_subjects"] = args.truth_subjects
    if getattr(args, "levels", None):
        settings["levels"] = args.levels

    def pick(name, default):
        value = getattr(args, name, None)
        return value if value is not None else top.get(name, default)

    cfg = RunConfig(
        command=args.command,
        mode=pick("mode", CENSORED),
        loss=pick("loss", LIKELIHOOD),
        seed=int(pick("seed", 0)),
        tune=bool(args.tune or top.get("tune", False)),
        settings=settings,
    )
    if cfg.mode not in (CENSORED, UNCENSORED):
        raise ConfigError(f"mode must be 'censored' or 'uncensored', got {cfg.mode!r}")
    if cfg.loss not in (LIKELIHOOD, L2):
        raise ConfigError(f"loss must be 'likelihood' or 'l2', got {cfg.loss!r}")
    if cfg.loss == L2 and cfg.mode == CENSORED:
        raise ConfigError("the l2 baseline needs uncensored data")
    if any(not 0.0 < lv < 1.0 for lv in cfg.levels):
        raise ConfigError("interval levels must lie in (0, 1)")
    return cfg


# --- deterministic output helpers ---


def _sha256_file(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _dump_json(doc, path) -> None:
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(out: Path, cfg: RunConfig, inputs: dict, extra: dict | None = None) -> None:
    canonical = json.dumps(cfg.to_dict(), sort_keys=True)
    doc = {
        "version": __version__,
        "config": cfg.to_dict(),
        "config_sha256": hashlib.sha256(canonical.encode("utf-8")).hexdigest(),
        "seed": cfg.seed,
        "inputs": {name: _sha256_file(p) for name, p in sorted(inputs.items())},
    }
    if extra:
        doc.update(extra)
    _dump_json(doc, out / "manifest.json")


def _out_dir(args) -> Path:
    out = Path(args.out)
    try:
        out.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"cannot create output directory {out}: {exc}") from exc
    return out


# --- data loading ---


def load_records(path, mode: str, require_outcome: bool = True) -> list:
    """Read survival (long format) or regression (wide) records from CSV."""
    if not Path(path).is_file():
        raise DataError(f"data file {path} does not exist")
    try:
        if mode == CENSORED:
            return read_survival_csv(path, require_event=require_outcome)
        return read_uncensored_csv(path, require_y=require_outcome)
    except (ValueError, KeyError, pd.errors.ParserError, pd.errors.EmptyDataError) as exc:
        raise DataError(f"{path}: {exc}") from exc


# --- model persistence ---


@dataclass
class LoadedModel:
    network: Network
    grid: TimeGrid | None
    residuals: np.ndarray | None


def model_document(fit: FitResult, cfg: RunConfig, train_config: TrainConfig) -> dict:
    return {
        "format_version": MODEL_FORMAT,
        "mode": cfg.mode,
        "loss": cfg.loss,
        "train_config": train_config.to_dict(),
        "network": fit.network.to_dict(),
        "grid": None if fit.grid is None else fit.grid.to_dict(),
        "residuals": None if fit.residuals is None else np.asarray(fit.residuals).tolist(),
        "best_validation_loss": fit.best_validation_loss,
        "epochs_run": fit.epochs_run,
        "final_learning_rate": fit.learning_rate,
    }


def save_models(out: Path, fits, cfg: RunConfig, train_config: TrainConfig) -> None:
    for name, fit in zip(MODEL_FILES, fits):
        _dump_json(model_document(fit, cfg, train_config), out / name)
        stem = name.replace("model", "history").replace(".json", ".csv")
        (out / stem).write_text(fit.history_csv(), encoding="utf-8")


def load_models(model_dir) -> tuple[list, str, str]:
    models, modes, losses_ = [], set(), set()
    for name in MODEL_FILES:
        path = Path(model_dir) / name
        if not path.is_file():
            raise DataError(f"model file {path} does not exist")
        try:
            doc = json.loads(path.read_text(encoding="utf-8"))
            if doc.get("format_version") != MODEL_FORMAT:
                raise ValueError(f"unsupported model format {doc.get('format_version')!r}")
            net = Network.from_dict(doc["network"])
            grid = TimeGrid.from_dict(doc["grid"]) if doc["grid"] is not None else None
            resid = np.asarray(doc["residuals"], dtype=np.float64) if doc["residuals"] is not None else None
        except (ValueError, KeyError, TypeError) as exc:
            raise DataError(f"{path}: malformed model file ({exc})") from exc
        models.append(LoadedModel(net, grid, resid))
        modes.add(doc["mode"])
        losses_.add(doc["loss"])
    if len(modes) != 1 or len(losses_) != 1:
        raise DataError("model files disagree on mode or loss")
    return models, modes.pop(), losses_.pop()


# --- training ---


def _l2_fit_fn(records, config):
    return fit_swap_average_l2(records, config)


def _single_fit_fn(val_records, loss):
    """Fit on all given records, validating on ``val_records`` (comparator protocol)."""

    def fit(records, config):
        if loss == L2:
            x = np.array([r.x for r in records])
            y = np.array([r.y for r in records])
            vx = np.array([r.x for r in val_records])
            vy = np.array([r.y for r in val_records])
            return (train_l2(x, y, vx, vy, config),)
        return (fit_records(records, val_records, config),)

    return fit


def fit_models(records, cfg: RunConfig, seed: int | None = None, val_records=None):
    """Train according to ``cfg``; returns ``(fits, train_config, tuning_table)``."""
    train_config = cfg.train_config()
    if seed is not None:
        train_config = TrainConfig(**dict(train_config.to_dict(), seed=seed))
    if cfg.mode == CENSORED and not any(r.delta for r in records):
        log.warning("the event column is all zeros; nothing to learn from")
        raise DataError("training data contains no events")
    if val_records is not None:
        fit_fn = _single_fit_fn(val_records, cfg.loss)
    else:
        fit_fn = _l2_fit_fn if cfg.loss == L2 else fit_swap_average
    try:
        if cfg.tune:
            best, table, fits = grid_search(records, cfg.hyper_grid(), train_config, fit_fn, return_fits=True)
            log.info("tuning picked width=%d lr=%g batch=%d", best.hidden_width, best.learning_rate,
                     best.batch_size)
            return fits, best, table
        return fit_fn(records, train_config), train_config, None
    except TrainingDivergence:
        raise
    except (ValueError, CoverageError) as exc:
        raise DataError(str(exc)) from exc


# --- prediction ---


@dataclass
class Prediction:
    id: object
    curve: StepCurve  # survival curve (censored) or CDF (uncensored)
    mean: float


def _check_dim(models, mode, loss, p: int) -> None:
    expected = models[0].network.input_dim - (0 if loss == L2 else 2)
    if p != expected:
        raise DataError(f"model expects {expected} covariates, input has {p}")


def predict_records(models, mode: str, loss: str, items) -> list:
    """Averaged curves for covariate paths (censored) or covariate rows."""
    preds = []
    if mode == CENSORED:
        horizon = max(float(m.grid.times[-1]) for m in models)
        for rec in items:
            path = rec.path
            _check_dim(models, mode, loss, path.dim)
            if hasattr(path, "extended"):
                path = path.extended(horizon)
            curves = [survival_curve(m.network, path, m.grid) for m in models]
            curve = average_swapped(*curves) if len(curves) == 2 else curves[0]
            preds.append(Prediction(rec.id, curve, mean_from_cdf(curve.to_cdf())))
        return preds
    for rid, x in items:
        x = np.asarray(x, dtype=np.float64)
        _check_dim(models, mode, loss, x.size)
        if loss == L2:
            centers = [float(forward(m.network, x)[0]) for m in models]
            curves = [shifted_residual_cdf(c, m.residuals) for c, m in zip(centers, models)]
            mean = float(np.mean(centers))
        else:
            curves = [cdf_curve(m.network, x, m.grid) for m in models]
            mean = None
        curve = average_swapped(*curves) if len(curves) == 2 else curves[0]
        preds.append(Prediction(rid, curve, mean_from_cdf(curve) if mean is None else mean))
    return preds


def _pct(level: float) -> str:
    return f"{level * 100:g}".replace(".", "_")


def summary_frame(preds, levels) -> pd.DataFrame:
    rows = []
    for k, p in enumerate(preds):
        cdf = p.curve.to_cdf() if p.curve.kind != CDF else p.curve
        median, med_flag = quantile_from_cdf(cdf, 0.5)
        row = {"id": p.id, "curve_file": f"curves/curve_{k}.csv", "mean": p.mean, "median": median}
        flags = [med_flag]
        for lv in levels:
            iv = predictive_interval(cdf, lv)
            row[f"lower_{_pct(lv)}"] = iv.lower
            row[f"upper_{_pct(lv)}"] = iv.upper
            flags.append(iv.extrapolated)
        row["extrapolated"] = int(any(flags))
        rows.append(row)
    return pd.DataFrame(rows)


def write_predictions(out: Path, preds, levels, model_hash: str = "") -> None:
    (out / "curves").mkdir(exist_ok=True)
    for k, p in enumerate(preds):
        p.curve.meta = {"id": p.id, "n": p.curve.meta.get("n", ""), "grid_max": float(p.curve.times[-1]),
                        "model_sha256": model_hash}
        p.curve.to_csv(out / "curves" / f"curve_{k}.csv")
    summary_frame(preds, levels).to_csv(out / "summary.csv", index=False)


def read_predictions(pred_dir) -> tuple[pd.DataFrame, dict]:
    pred_dir = Path(pred_dir)
    summary_path = pred_dir / "summary.csv"
    if not summary_path.is_file():
        raise DataError(f"{summary_path} does not exist")
    summary = pd.read_csv(summary_path, float_precision="round_trip")
    curves = {}
    for sid, rel in zip(summary["id"], summary["curve_file"]):
        curves[str(sid)] = StepCurve.from_csv(pred_dir / rel)
    return summary, curves


# --- evaluation ---


def evaluate_predictions(mode: str, test_records, preds, levels, n_points: int = 100) -> EvalReport:
    if not test_records:
        raise DataError("empty test set")
    by_id = {str(p.id): p for p in preds}
    missing = [r.id for r in test_records if str(r.id) not in by_id]
    if missing:
        raise DataError(f"no prediction for test ids {missing[:5]}")
    matched = [by_id[str(r.id)] for r in test_records]
    try:
        if mode == CENSORED:
            return survival_report(test_records, [p.curve for p in matched], n_points)
        intervals = {lv: [predictive_interval(p.curve, lv) for p in matched] for lv in levels}
        return regression_metrics([p.mean for p in matched], intervals, [r.y for r in test_records])
    except ValueError as exc:
        raise DataError(str(exc)) from exc


def _predictions_from_dir(pred_dir, levels) -> tuple[list, dict]:
    summary, curves = read_predictions(pred_dir)
    preds = [Prediction(str(sid), curves[str(sid)], float(m)) for sid, m in zip(summary["id"], summary["mean"])]
    return preds, summary


def _items(records, mode):
    if mode == CENSORED:
        return records
    return [(r.id, r.x) if hasattr(r, "x") else tuple(r) for r in records]


def _pool(reports) -> dict:
    """Unweighted fold means of the metrics; coverage averaged per level.

    R² is the exception: ``1 - sum(SSE) / sum(SST)`` with each fold's SST taken
    about that fold's own target mean.
    """
    keys = ("c_index", "ibs", "ibll", "mse", "median_se")
    pooled = {}
    for key in keys:
        vals = [getattr(r, key) for r in reports if getattr(r, key) is not None]
        if vals:
            pooled[key] = float(np.mean(vals))
    if all(r.r2 is not None for r in reports) and reports:
        sse = sum(r.meta["sse"] for r in reports)
        sst = sum(r.meta["sst"] for r in reports)
        pooled["r2"] = float(1.0 - sse / sst)
    levels = sorted({lv for r in reports for lv in r.coverage})
    if levels:
        pooled["coverage"] = {str(lv): float(np.mean([r.coverage[lv] for r in reports])) for lv in levels}
    return pooled


# --- commands ---


def cmd_simulate(args, cfg: RunConfig) -> int:
    out = _out_dir(args)
    sim = cfg.settings["sim"]
    k_truth = int(cfg.settings["truth_subjects"])
    truth_dir = out / "truth"
    truth_dir.mkdir(exist_ok=True)
    try:
        if cfg.mode == CENSORED:
            sc = SurvivalSimConfig(sim["setup"], sim["n"], sim["tau"], sim["ds"], sim["censor_mean"], cfg.seed)
            records, truths = gen_survival(sc, return_truth=True)
        else:
            rc = RegressionSimConfig(sim["setup"], sim["n"], sim["c"], cfg.seed)
            records = gen_regression(rc)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid simulation settings: {exc}") from exc
    if cfg.mode == CENSORED:
        write_survival_csv(records, out / "data.csv")
    else:
        write_uncensored_csv(records, out / "data.csv")
    for k, rec in enumerate(records[:k_truth]):
        if cfg.mode == CENSORED:
            truth = truths[k]
        else:
            truth = oracle_truth_regression(rec.x, rc, seed=cfg.seed + k)
        truth.true_curve.meta = {"id": rec.id, "source": truth.source}
        truth.true_curve.to_csv(truth_dir / f"truth_{k}.csv")
    events = None if cfg.mode != CENSORED else int(sum(r.delta for r in records))
    _write_manifest(out, cfg, {}, {"n_records": len(records), "n_events": events})
    log.info("wrote %d records to %s", len(records), out / "data.csv")
    return EXIT_OK


def cmd_train(args, cfg: RunConfig) -> int:
    records = load_records(args.data, cfg.mode)
    out = _out_dir(args)
    fits, train_config, table = fit_models(records, cfg)
    save_models(out, fits, cfg, train_config)
    if table is not None:
        pd.DataFrame(table).to_csv(out / "tuning.csv", index=False)
    _write_manifest(out, cfg, {"data": args.data}, {"selected": train_config.to_dict()})
    return EXIT_OK


def cmd_predict(args, cfg: RunConfig) -> int:
    models, mode, loss = load_models(args.model_dir)
    records = load_records(args.data, mode, require_outcome=False)
    out = _out_dir(args)
    preds = predict_records(models, mode, loss, _items(records, mode))
    model_hash = hashlib.sha256(
        "".join(_sha256_file(Path(args.model_dir) / n) for n in MODEL_FILES).encode("ascii")
    ).hexdigest()
    write_predictions(out, preds, cfg.levels, model_hash)
    cfg.mode, cfg.loss = mode, loss
    _write_manifest(out, cfg, {"data": args.data, **{n: Path(args.model_dir) / n for n in MODEL_FILES}})
    return EXIT_OK


def cmd_evaluate(args, cfg: RunConfig) -> int:
    if bool(args.model_dir) == bool(args.pred_dir):
        raise ConfigError("evaluate needs exactly one of --model-dir or --pred-dir")
    inputs = {"data": args.data}
    if args.model_dir:
        models, mode, loss = load_models(args.model_dir)
        cfg.mode, cfg.loss = mode, loss
        test = load_records(args.data, mode)
        preds = predict_records(models, mode, loss, _items(test, mode))
        inputs.update({n: Path(args.model_dir) / n for n in MODEL_FILES})
    else:
        test = load_records(args.data, cfg.mode)
        preds, _ = _predictions_from_dir(args.pred_dir, cfg.levels)
        inputs["summary"] = Path(args.pred_dir) / "summary.csv"
    n_points = int(cfg.settings["n_points"])
    report = evaluate_predictions(cfg.mode, test, preds, cfg.levels, n_points)
    out = _out_dir(args)
    _dump_json(report.to_dict(), out / "report.json")
    if cfg.mode == CENSORED:
        by_id = {str(p.id): p.curve for p in preds}
        ts, bs, bll = score_trace(test, [by_id[str(r.id)] for r in test], n_points)
        pd.DataFrame({"t": ts, "brier": bs, "bll": bll}).to_csv(out / "score_trace.csv", index=False)
    _write_manifest(out, cfg, inputs)
    return EXIT_OK


def run_crossval(records, cfg: RunConfig, protocol: CVProtocol, out: Path | None = None) -> dict:
    """Cross-validated reports; the held-out fold never touches training or validation
    unless ``protocol.validation_on_test`` is set."""
    labels = protocol.assignments(len(records))
    seeds = protocol.fold_seeds()
    fold_docs, reports = [], []
    for k in range(protocol.folds):
        test = [r for r, lab in zip(records, labels) if lab == k]
        rest = [r for r, lab in zip(records, labels) if lab != k]
        if cfg.mode == CENSORED and not any(r.delta for r in rest):
            raise DataError(f"fold {k}: training part has no events")
        val = test if protocol.validation_on_test else None
        fits, train_config, table = fit_models(rest, cfg, seed=seeds[k], val_records=val)
        models = [LoadedModel(f.network, f.grid, f.residuals) for f in fits]
        preds = predict_records(models, cfg.mode, cfg.loss, _items(test, cfg.mode))
        report = evaluate_predictions(cfg.mode, test, preds, cfg.levels, int(cfg.settings["n_points"]))
        reports.append(report)
        doc = {"fold": k, "seed": seeds[k], "n_train": len(rest), "n_test": len(test),
               "selected": train_config.to_dict(), "report": report.to_dict()}
        if table is not None:
            doc["tuning"] = table
        fold_docs.append(doc)
        if out is not None:
            fold_dir = out / f"fold_{k}"
            fold_dir.mkdir(exist_ok=True)
            save_models(fold_dir, fits, cfg, train_config)
            _dump_json(doc, fold_dir / "report.json")
    return {
        "protocol": {"folds": protocol.folds, "split_seed": protocol.split_seed,
                     "validation_on_test": protocol.validation_on_test, "tuning": "per_fold" if cfg.tune else None,
                     "pooling": "unweighted_fold_mean"},
        "folds": fold_docs,
        "pooled": _pool(reports),
    }


def cmd_crossval(args, cfg: RunConfig) -> int:
    records = load_records(args.data, cfg.mode)
    protocol = CVProtocol(int(cfg.settings["folds"]), cfg.seed, args.validation_on_test,
                          cfg.hyper_grid() if cfg.tune else None)
    out = _out_dir(args)
    result = run_crossval(records, cfg, protocol, out)
    _dump_json(result, out / "crossval.json")
    _write_manifest(out, cfg, {"data": args.data}, {"validation_on_test": args.validation_on_test})
    return EXIT_OK


# --- argument parsing ---


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=None, help="master seed (default 0)")
    common.add_argument("--config", default=None, help="JSON file with settings overrides")
    common.add_argument("--out", default=".", help="output directory")
    common.add_argument("--mode", choices=(CENSORED, UNCENSORED), default=None)
    common.add_argument("--loss", choices=(LIKELIHOOD, L2), default=None)
    common.add_argument("--tune", action="store_true", help="grid-search width, learning rate and batch size")
    common.add_argument("--levels", type=float, nargs="+", default=None, help="predictive interval levels")
    common.add_argument("-v", "--verbose", action="count", default=0)

    parser = argparse.ArgumentParser(prog="hazardnet", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("simulate", parents=[common], help="generate a simulated data set with oracle truth")
    p.add_argument("--setup", type=int, choices=(1, 2), default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--c", type=float, default=None, help="error scale of the regression setups")
    p.add_argument("--truth-subjects", type=int, default=None, help="write truth curves for this many subjects")
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("train", parents=[common], help="fit the swapped pair of networks")
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("predict", parents=[common], help="curves and summaries for new covariates")
    p.add_argument("--model-dir", required=True)
    p.add_argument("--data", required=True)
    p.set_defaults(func=cmd_predict)

    p = sub.add_parser("evaluate", parents=[common], help="metrics on held-out data")
    p.add_argument("--data", required=True)
    p.add_argument("--model-dir", default=None)
    p.add_argument("--pred-dir", default=None)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("crossval", parents=[common], help="k-fold cross-validated evaluation")
    p.add_argument("--data", required=True)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--validation-on-test", action="store_true",
                   help="validate on the held-out fold as well (comparator protocol)")
    p.set_defaults(func=cmd_crossval)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        return args.func(args, cfg)
    except ConfigError as exc:
        log.error("configuration error: %s", exc)
        return EXIT_CONFIG
    except (DataError, CoverageError) as exc:
        log.error("data error: %s", exc)
        return EXIT_DATA
    except (TrainingDivergence, FloatingPointError) as exc:
        log.error("numerical failure: %s", exc)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
