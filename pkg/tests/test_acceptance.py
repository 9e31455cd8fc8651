"""End-to-end acceptance checks, one test per criterion.

The statistical checks (4 to 7) train many networks and take most of the
suite's runtime; they are marked ``slow``.  A PASS/FAIL line per criterion is
printed in the terminal summary.
"""
import json
import math
from pathlib import Path

import numpy as np
import pytest

from hazardnet.cli import LoadedModel, main, predict_records
from hazardnet.curves import SURVIVAL, StepCurve, average_swapped, cdf_curve, predictive_interval, survival_curve
from hazardnet.expansion import (
    CovariatePath,
    SurvivalRecord,
    UncensoredRecord,
    build_grid,
    expand_censored,
    expand_uncensored,
    write_survival_csv,
)
from hazardnet.losses import RowLossInput, censored_loss, row_grads, uncensored_constant, uncensored_loss
from hazardnet.metrics import bll_score, brier_score, c_index_td, km_censoring, survival_report
from hazardnet.nn_core import backward, forward, init_network
from hazardnet.simgen import (
    RegressionSimConfig,
    SurvivalSimConfig,
    gen_covariate_paths,
    gen_regression,
    gen_survival,
    oracle_truth_survival,
)
from hazardnet.trainer import TrainConfig, fit_swap_average, fit_swap_average_l2


def _detail(request, text):
    request.node.user_properties.append(("detail", text))


def _toy_survival(rng, n, p):
    """Records with one covariate that jumps at a random time and ``p - 1`` constant ones."""
    y = rng.uniform(0.1, 5.0, n)
    delta = rng.integers(0, 2, n)
    delta[0] = 1
    recs, jumps = [], []
    for i in range(n):
        q = rng.uniform(0.0, 5.0)
        before, after = rng.normal(size=p), rng.normal(size=p)
        after[1:] = before[1:]
        end = max(y[i], q) + 1.0
        recs.append(SurvivalRecord(i, float(y[i]), int(delta[i]), CovariatePath([q, end], [before, after])))
        jumps.append((q, before, after))
    return recs, jumps


def _close(a, b, tol=1e-12):
    """``tol`` absolute for O(1) values, relative above that (double precision resolution)."""
    return abs(a - b) <= tol * max(1.0, abs(b))


def _x_at(jump, t):
    """Covariate value at ``t``: the jump happens right after ``q``."""
    q, before, after = jump
    return before if t <= q else after


# --- criterion 1 ---


def _fd(fn, flat, eps=1e-6):
    out = np.empty(flat.size)
    for k in range(flat.size):
        plus, minus = flat.copy(), flat.copy()
        plus[k] += eps
        minus[k] -= eps
        out[k] = (fn(plus) - fn(minus)) / (2 * eps)
    return out


@pytest.mark.criterion(1, "analytic parameter gradients match central differences")
def test_criterion_1_gradients(request):
    worst = 0.0
    for seed in range(100):
        rng = np.random.default_rng(seed)
        p = int(rng.integers(1, 4))
        net = init_network(p + 2, int(rng.integers(2, 6)), seed=seed)
        net.flat += rng.normal(0.0, 0.1, net.n_params)
        n = int(rng.integers(2, 7))
        if seed % 2 == 0:
            recs, _ = _toy_survival(rng, n, p)
            rows = expand_censored(recs, build_grid([r.y for r in recs]))
            loss_fn = censored_loss
        else:
            recs = [UncensoredRecord(i, float(rng.normal()), rng.normal(size=p)) for i in range(n)]
            rows = expand_uncensored(recs, build_grid([r.y for r in recs], "uncensored"))
            loss_fn = uncensored_loss
        x, dt, delta = rows.inputs(), rows.dt, rows.delta

        def value(flat):
            h = forward(net.with_flat(flat), x)
            return loss_fn([RowLossInput(*r) for r in zip(h, dt, delta)], n).total

        analytic = backward(net, x, row_grads(forward(net, x), dt, delta) / n).flat
        numeric = _fd(value, net.flat.copy())
        scale = np.maximum(np.abs(analytic), np.abs(numeric))
        err = np.abs(analytic - numeric)
        assert np.all(err <= 1e-4 * scale + 1e-9), seed
        norm_err = np.linalg.norm(analytic - numeric) / max(np.linalg.norm(numeric), 1e-12)
        assert norm_err < 1e-4, seed
        worst = max(worst, norm_err)
    _detail(request, f"worst relative error {worst:.2e}")


# --- criterion 2 ---


@pytest.mark.criterion(2, "losses over expanded rows equal the direct double sums")
def test_criterion_2_loss_oracle(request):
    worst = 0.0
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        n = int(rng.integers(2, 11))
        p = 2
        net = init_network(p + 2, 5, seed=seed)

        def h_of(t_prev, t, x):
            return float(forward(net, np.r_[t_prev, t, x][None, :])[0])

        recs, jumps = _toy_survival(rng, n, p)
        rows = expand_censored(recs, build_grid([r.y for r in recs]))
        h = forward(net, rows.inputs())
        value = censored_loss([RowLossInput(*r) for r in zip(h, rows.dt, rows.delta)], n).total
        times = sorted(r.y for r in recs)
        direct = 0.0
        for rec, jump in zip(recs, jumps):
            for j, tj in enumerate(times):
                if tj > rec.y:
                    continue
                prev = times[j - 1] if j else 0.0
                hij = h_of(prev, tj, _x_at(jump, tj))
                direct += math.exp(hij) * (tj - prev) - hij * (rec.delta if tj == rec.y else 0)
        direct /= n
        assert _close(value, direct)
        worst = max(worst, abs(value - direct) / max(1.0, abs(direct)))

        urecs = [UncensoredRecord(i, float(rng.normal(0, 2)), rng.normal(size=p)) for i in range(n)]
        urows = expand_uncensored(urecs, build_grid([r.y for r in urecs], "uncensored"))
        uh = forward(net, urows.inputs())
        lv = uncensored_loss([RowLossInput(*r) for r in zip(uh, urows.dt, urows.delta)], n)
        times = sorted(r.y for r in urecs)
        direct = 0.0
        for rec in urecs:
            for j in range(1, n):
                tj = times[j]
                if tj <= rec.y:
                    hij = h_of(times[j - 1], tj, rec.x)
                    direct += math.exp(hij) * (tj - times[j - 1]) - hij * (tj == rec.y)
        direct /= n
        assert _close(lv.total, direct)
        assert _close(lv.full, direct - math.log(1 - 1 / n))
        assert lv.constant == uncensored_constant(n)
        worst = max(worst, abs(lv.total - direct) / max(1.0, abs(direct)))
    _detail(request, f"worst scaled difference {worst:.1e}")


# --- criterion 3 ---


@pytest.mark.criterion(3, "survival and CDF estimates are valid for any network")
def test_criterion_3_validity(request):
    for seed in range(1000):
        rng = np.random.default_rng(seed)
        net = init_network(3, int(rng.integers(1, 17)), seed=seed)
        net.flat += rng.normal(0.0, 0.3, net.n_params)
        net.layers[-1].bias[0] += rng.uniform(-3, 3)
        m = int(rng.integers(1, 40))
        ys = rng.uniform(0.01, 10.0, m)
        xval = rng.normal()
        s = survival_curve(net, CovariatePath.constant_path([xval]), build_grid(ys))
        assert np.all(np.diff(s.values) <= 0), seed
        assert np.all((s.values >= 0) & (s.values <= 1)), seed
        # exp(-cum) is strictly positive unless it underflows double precision
        stops = np.unique(ys)
        starts = np.r_[0.0, stops[:-1]]
        h = forward(net, np.column_stack([starts, stops, np.full(stops.size, xval)]))
        cum = np.cumsum(np.exp(np.clip(h, -30, 30)) * (stops - starts))
        assert np.all(s.values[cum < 700] > 0), seed
        m = max(m, 2)
        grid = build_grid(rng.normal(0, 3, m), "uncensored")
        f = cdf_curve(net, [rng.normal()], grid)
        assert f.values[0] == 1.0 / m, seed
        assert np.all(np.diff(f.values) >= 0) and np.all(f.values <= 1), seed
    _detail(request, "1000 networks")


# --- criteria 4 and 5 ---


def _survival_replicate(setup, rep):
    cfg = SurvivalSimConfig(setup=setup, n=1000, seed=rep)
    fa, fb = fit_swap_average(gen_survival(cfg), TrainConfig(seed=rep))
    errors = []
    for path in gen_covariate_paths(9, cfg, np.random.default_rng(10**6 + rep)):
        est = average_swapped(survival_curve(fa.network, path, fa.grid), survival_curve(fb.network, path, fb.grid))
        truth = oracle_truth_survival(path, cfg).true_curve
        errors.append(np.mean(np.abs(est.values - truth(est.times))))
    return float(np.mean(errors))


@pytest.fixture(scope="module")
def survival_mae():
    cache = {}

    def get(setup):
        if setup not in cache:
            cache[setup] = [_survival_replicate(setup, rep) for rep in range(10)]
        return cache[setup]

    return get


@pytest.mark.slow
@pytest.mark.criterion(4, "Setup 1 survival recovery, mean absolute error <= 0.10")
def test_criterion_4_setup1_recovery(request, survival_mae):
    mae = float(np.mean(survival_mae(1)))
    _detail(request, f"MAE {mae:.4f} over 10 replicates")
    assert mae <= 0.10


@pytest.mark.slow
@pytest.mark.criterion(5, "Setup 2 error within 1.5x of Setup 1")
def test_criterion_5_setup2_robustness(request, survival_mae):
    mae1 = float(np.mean(survival_mae(1)))
    mae2 = float(np.mean(survival_mae(2)))
    _detail(request, f"MAE {mae2:.4f} vs {mae1:.4f}, ratio {mae2 / mae1:.2f}")
    assert mae2 <= 1.5 * mae1


# --- criteria 6 and 7 ---


def _regression_replicate(setup, n, rep):
    cfg = RegressionSimConfig(setup=setup, n=n, c=0.5, seed=rep)
    recs = gen_regression(cfg)
    test = gen_regression(RegressionSimConfig(setup=setup, n=500, c=0.5, seed=10**6 + rep))
    items = [(r.id, r.x) for r in test]
    y = np.array([r.y for r in test])
    train_cfg = TrainConfig(seed=rep, mode="uncensored")
    lik = [LoadedModel(f.network, f.grid, None) for f in fit_swap_average(recs, train_cfg)]
    l2 = [LoadedModel(f.network, None, f.residuals) for f in fit_swap_average_l2(recs, train_cfg)]
    lik_preds = predict_records(lik, "uncensored", "likelihood", items)
    l2_preds = predict_records(l2, "uncensored", "l2", items)
    se_lik = (np.array([p.mean for p in lik_preds]) - y) ** 2
    se_l2 = (np.array([p.mean for p in l2_preds]) - y) ** 2
    cov = {lv: np.mean([predictive_interval(p.curve, lv).covers(t) for p, t in zip(lik_preds, y)])
           for lv in (0.9, 0.95)}
    return {"mse_lik": se_lik.mean(), "mse_l2": se_l2.mean(), "med_lik": np.median(se_lik),
            "med_l2": np.median(se_l2), "cov90": cov[0.9], "cov95": cov[0.95]}


def _average(reps):
    return {k: float(np.mean([r[k] for r in reps])) for k in reps[0]}


@pytest.mark.slow
@pytest.mark.criterion(6, "regression Setup 1 errors and interval coverage")
def test_criterion_6_regression_setup1(request):
    avg = _average([_regression_replicate(1, 1000, rep) for rep in range(20)])
    _detail(request, ", ".join(f"{k} {v:.3f}" for k, v in avg.items()))
    assert 0.40 <= avg["mse_lik"] <= 0.65
    assert 0.40 <= avg["mse_l2"] <= 0.65
    assert 0.85 <= avg["cov90"] <= 0.95
    assert 0.90 <= avg["cov95"] <= 0.99


@pytest.mark.slow
@pytest.mark.criterion(7, "regression Setup 2 median squared error below half of L2 (n=2000)")
def test_criterion_7_regression_setup2(request):
    avg = _average([_regression_replicate(2, 2000, rep) for rep in range(10)])
    ratio = avg["med_lik"] / avg["med_l2"]
    _detail(request, f"median SE {avg['med_lik']:.4f} vs {avg['med_l2']:.4f}, ratio {ratio:.3f}")
    assert ratio < 0.5


# --- criterion 8 ---


@pytest.mark.criterion(8, "Setup 1 censoring rate in [0.15, 0.25]")
def test_criterion_8_censoring_rate(request):
    recs = gen_survival(SurvivalSimConfig(setup=1, n=5000, seed=0))
    rate = 1.0 - np.mean([r.delta for r in recs])
    _detail(request, f"censoring rate {rate:.4f}")
    assert 0.15 <= rate <= 0.25


# --- criterion 9 ---


def _recs(pairs):
    return [SurvivalRecord(k, float(y), d, CovariatePath.constant_path([0.0], y)) for k, (y, d) in enumerate(pairs)]


@pytest.mark.criterion(9, "metric oracles on hand-enumerated fixtures")
def test_criterion_9_metric_oracles(request):
    tol = 1e-10
    g = km_censoring(_recs([(1, 0), (2, 1)]))
    assert abs(g(0.5) - 1.0) <= tol and abs(g(1.0) - 0.5) <= tol and abs(g(3.0) - 0.5) <= tol
    g = km_censoring(_recs([(1, 0), (2, 0), (3, 0)]))
    assert np.allclose([g(1), g(2), g(3)], [2 / 3, 1 / 3, 0.0], rtol=0, atol=tol)

    recs = _recs([(1, 1), (2, 0), (3, 1)])
    grid = [1.0, 2.0, 3.0]
    curves = [StepCurve(grid, [0.5, 0.3, 0.1]), StepCurve(grid, [0.9, 0.6, 0.4]), StepCurve(grid, [0.5, 0.4, 0.2])]
    g = km_censoring(recs)
    assert abs(c_index_td(recs, curves) - 0.75) <= tol
    assert abs(brier_score(recs, curves, 2.0, g) - 0.27) <= tol
    assert abs(brier_score(recs, curves, 3.0, g) - 0.03) <= tol
    assert abs(bll_score(recs, curves, 2.0, g) - (math.log(0.7) + 2 * math.log(0.4)) / 3) <= tol

    same = [StepCurve(grid, [0.8, 0.5, 0.2])] * 3
    assert c_index_td(recs, same) == 0.5
    full = _recs([(1.0, 1), (2.0, 1), (4.0, 1)])
    report = survival_report(full, [StepCurve([r.y], [0.0], SURVIVAL) for r in full])
    assert report.c_index == 1.0 and abs(report.ibs) <= tol
    _detail(request, "KM, C-index, BS, BLL, IBS")


# --- criterion 10 ---


def _tree(root: Path) -> dict:
    return {str(p.relative_to(root)): p.read_bytes() for p in sorted(root.rglob("*")) if p.is_file()}


def _run_all(base: Path, shared: Path, config: str) -> None:
    fast = ["--config", config]
    assert main(["simulate", "--mode", "uncensored", "--n", "40", "--truth-subjects", "2", "--seed", "4",
                 "--out", str(base / "sim_reg")]) == 0
    assert main(["simulate", "--mode", "censored", "--n", "8", "--truth-subjects", "1", "--seed", "4",
                 "--out", str(base / "sim_surv")]) == 0
    surv = str(shared / "surv.csv")
    assert main(["train", "--data", surv, *fast, "--out", str(base / "train")]) == 0
    assert main(["predict", "--model-dir", str(base / "train"), "--data", surv, "--out", str(base / "pred")]) == 0
    assert main(["evaluate", "--data", surv, "--model-dir", str(base / "train"), "--out", str(base / "eval_m")]) == 0
    assert main(["evaluate", "--data", surv, "--pred-dir", str(base / "pred"), "--out", str(base / "eval_p")]) == 0
    assert main(["crossval", "--data", surv, "--folds", "3", "--tune", *fast, "--out", str(base / "cv")]) == 0
    reg = str(shared / "reg.csv")
    assert main(["train", "--mode", "uncensored", "--loss", "l2", "--data", reg, *fast,
                 "--out", str(base / "train_l2")]) == 0
    assert main(["predict", "--model-dir", str(base / "train_l2"), "--data", reg,
                 "--out", str(base / "pred_l2")]) == 0


@pytest.mark.criterion(10, "every command reruns to byte-identical outputs")
def test_criterion_10_determinism(request, tmp_path):
    shared = tmp_path / "shared"
    shared.mkdir()
    rng = np.random.default_rng(0)
    x = rng.normal(size=(40, 2))
    y = rng.exponential(np.exp(-x[:, 0])) + 0.01
    write_survival_csv([SurvivalRecord(i, float(y[i]), int(i % 4 != 0), CovariatePath.constant_path(x[i], y[i]))
                        for i in range(40)], shared / "surv.csv")
    assert main(["simulate", "--mode", "uncensored", "--n", "40", "--truth-subjects", "0",
                 "--out", str(tmp_path / "reg_src")]) == 0
    (shared / "reg.csv").write_bytes((tmp_path / "reg_src" / "data.csv").read_bytes())
    config = shared / "fast.json"
    config.write_text(json.dumps({
        "train": {"max_epochs": 5, "hidden_width": 8, "batch_size": 32},
        "grid": {"widths": [4, 8], "learning_rates": [0.01], "batch_sizes": [32]},
    }))
    _run_all(tmp_path / "a", shared, str(config))
    _run_all(tmp_path / "b", shared, str(config))
    first, second = _tree(tmp_path / "a"), _tree(tmp_path / "b")
    assert first.keys() == second.keys()
    differing = [name for name in first if first[name] != second[name]]
    assert not differing, differing
    _detail(request, f"{len(first)} files identical")
