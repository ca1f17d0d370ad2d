"""Acceptance suite.

Runs every acceptance criterion at its stated tolerance and prints one
PASS/FAIL line per criterion (visible with ``pytest -s`` or in captured
output). The quantitative criteria run on the seeded synthetic fixture:
60 counties, 4 states, years 1980-2000, generator seed 42; the main
CNN-RNN run uses 20,000 iterations and is shared by the attribution and
weather-sweep criteria. Secondary training runs (trend ablation, subset
retrains, CV folds) use reduced budgets; the criteria they check are
relative orderings.
"""

import time

import numpy as np
import pytest

from yieldnet import autodiff as ad
from yieldnet import experiments as xp
from yieldnet.attribution import guided_attribute
from yieldnet.baselines import fit_lasso
from yieldnet.data import (
    Dataset,
    SyntheticConfig,
    assemble_sequences,
    compute_avg_yields,
    gen_synthetic,
    weekly_average,
)
from yieldnet.model import CnnRnnConfig, build_cnn_rnn, cnn_rnn_apply
from yieldnet.training import TrainConfig, lr_schedule

MAIN_ITERS = 20000       # criterion 3's stated budget; also the subset arms
SELECT_ITERS = 6000      # criterion 6 attribution model (not part of the comparison)
CV_ITERS = 4000          # criterion 7 folds and its same-budget comparison holdout
TREND_ITERS = 3000       # criterion 4

GRADCHECK_POINTS = 20
GRADCHECK_TOL = 1e-4


def _report(criterion, ok, detail):
    print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} ({detail})")
    assert ok, f"criterion {criterion}: {detail}"


# ---------------------------------------------------------------------------
# shared fixtures


@pytest.fixture(scope="module")
def fixture_dataset():
    records, meta = gen_synthetic(SyntheticConfig())
    return Dataset(records=records, crop="corn", meta=meta)


@pytest.fixture(scope="module")
def main_run(fixture_dataset):
    """Criterion 3's 20k-iteration CNN-RNN holdout at year 2000."""
    started = time.perf_counter()
    result, model = xp.temporal_holdout(
        fixture_dataset, 2000, "cnn-rnn", TrainConfig(max_iters=MAIN_ITERS, seed=42)
    )
    return result, model, time.perf_counter() - started


@pytest.fixture(scope="module")
def val_samples_2000(fixture_dataset):
    ay = compute_avg_yields(fixture_dataset.records, "corn",
                            years=set(range(1980, 2000)))
    samples, _ = assemble_sequences(
        fixture_dataset.records, 5, [2000], "test", crop="corn", avg_yields=ay
    )
    return samples


# ---------------------------------------------------------------------------
# criterion 1: finite-difference gradient suite


class TestCriterion1Gradients:
    def test_gradient_suite(self):
        started = time.perf_counter()
        rng = np.random.default_rng(1234)
        worst = {}

        def check(name, f, point_fn):
            errs = []
            for _ in range(GRADCHECK_POINTS):
                errs.append(ad.grad_check(f, point_fn()))
            worst[name] = max(errs)

        check("conv1d", lambda x, w, b: ad.conv1d(x, w, b),
              lambda: [rng.normal(size=(3, 11)), rng.normal(size=(4, 3, 3)),
                       rng.normal(size=4)])
        check("avgpool1d", lambda x: ad.avgpool1d(x),
              lambda: [rng.normal(size=(3, 9))])
        check("affine", lambda x, w, b: ad.affine(x, w, b),
              lambda: [rng.normal(size=5), rng.normal(size=(4, 5)), rng.normal(size=4)])

        def relu_point():
            x = rng.normal(size=7)
            x += np.sign(x) * 1e-3
            return [x]

        check("relu", lambda x: ad.relu(x), relu_point)
        check("concat", lambda a, b: ad.concat([a, b]),
              lambda: [rng.normal(size=4), rng.normal(size=3)])

        def lstm_point():
            d, h = 3, 4
            pt = [rng.normal(size=d), rng.normal(size=h), rng.normal(size=h)]
            for _ in range(4):
                pt += [rng.normal(size=(h, d + h)) * 0.5, rng.normal(size=h) * 0.5]
            return pt

        def lstm_f(x, h0, c0, wi, bi, wf, bf, wg, bg, wo, bo):
            hh, cc = ad.lstm_cell_step(
                x, h0, c0, ad.LstmParams(wi, bi, wf, bf, wg, bg, wo, bo))
            return ad.add(hh, cc)

        check("lstm_cell_step", lstm_f, lstm_point)

        tiny = CnnRnnConfig(
            k=1, lstm_hidden=3, fc_w_out=4, fc_s_out=3, management_dim=2,
            weather_vars=2, weeks=8, soil_vars=2, soil_depths=5, surface_dim=2,
            wcnn_channels=(3, 4), wcnn_pool=(True, True),
            scnn_channels=(3,), scnn_pool=(True,),
        )
        tiny_model = build_cnn_rnn(tiny, 7)
        names = list(tiny_model.params)

        def net_f(*leaves):
            bound = dict(zip(names, leaves[: len(names)]))
            rest = leaves[len(names):]
            steps = []
            for s in range(tiny.k + 1):
                w, so, su, av, mg = rest[s * 5 : (s + 1) * 5]
                steps.append({"weather": w, "soil": so, "surface": su,
                              "avg": av, "mgmt": mg})
            return cnn_rnn_apply(tiny, bound, leaves[0].tape, steps).preds[-1]

        def net_point():
            pt = [tiny_model.params[n] + 0.02 * rng.normal(size=tiny_model.params[n].shape)
                  for n in names]
            for _ in range(tiny.k + 1):
                pt += [rng.normal(size=(1, 2, 8)), rng.normal(size=(1, 2, 5)),
                       rng.normal(size=(1, 2)), rng.normal(size=(1, 1)),
                       rng.normal(size=(1, 2))]
            return pt

        check("cnn_rnn_forward", net_f, net_point)

        elapsed = time.perf_counter() - started
        detail = (", ".join(f"{k}={v:.2e}" for k, v in worst.items())
                  + f"; runtime {elapsed:.1f}s")
        ok = max(worst.values()) < GRADCHECK_TOL and elapsed < 120.0
        _report(1, ok, detail)


# ---------------------------------------------------------------------------
# criterion 2: oracle equivalence


class TestCriterion2Oracles:
    def test_oracle_equivalence(self):
        from oracles import conv1d_reference, corr_pct_reference, rmse_reference

        rng = np.random.default_rng(77)
        worst = 0.0
        for _ in range(10):
            ci, co = int(rng.integers(1, 9)), int(rng.integers(1, 7))
            length = int(rng.integers(2, 65))
            x = rng.normal(size=(ci, length))
            w = rng.normal(size=(co, ci, 3))
            b = rng.normal(size=co)
            tape = ad.Tape()
            got = ad.conv1d(tape.leaf(x), tape.leaf(w), tape.leaf(b)).data
            worst = max(worst, float(np.abs(got - conv1d_reference(x, w, b)).max()))
        ok_conv = worst < 1e-12

        # the three fit_lasso closed-form examples
        rng = np.random.default_rng(78)
        shrunk_x = rng.normal(size=(40, 6))
        shrunk_x = (shrunk_x - shrunk_x.mean(0)) / shrunk_x.std(0)
        shrunk_y = rng.normal(size=40) * 3 + 10
        m_shrunk = fit_lasso(shrunk_x, shrunk_y, lam=1e6)
        err_shrink = max(float(np.abs(m_shrunk.coef).max()),
                         abs(m_shrunk.intercept - shrunk_y.mean()))

        n = 64
        base = rng.normal(size=(n, 4))
        base -= base.mean(axis=0)
        q, _ = np.linalg.qr(base)
        X = q * np.sqrt(n)
        beta = np.array([2.0, -1.0, 0.5, 3.0])
        m_ols = fit_lasso(X, X @ beta + 0.9, lam=0.0)
        err_ols = float(np.abs(m_ols.coef - beta).max())

        x1 = rng.normal(size=(50, 1))
        x1 = (x1 - x1.mean()) / x1.std()
        m_soft = fit_lasso(x1, 2.0 * x1[:, 0], lam=0.5)
        err_soft = abs(m_soft.coef[0] - 1.5)
        ok_lasso = max(err_shrink, err_ols, err_soft) < 1e-8

        # metric reimplementations
        rng = np.random.default_rng(79)
        worst_m = 0.0
        for _ in range(20):
            nv = int(rng.integers(2, 40))
            p, t = rng.normal(size=nv), rng.normal(size=nv)
            worst_m = max(worst_m, abs(xp.rmse(p, t) - rmse_reference(p, t)),
                          abs(xp.pearson_corr(p, t) - corr_pct_reference(p, t)))
        ok_metrics = worst_m < 1e-12

        detail = (f"conv={worst:.1e}, lasso=({err_shrink:.1e},{err_ols:.1e},"
                  f"{err_soft:.1e}), metrics={worst_m:.1e}")
        _report(2, ok_conv and ok_lasso and ok_metrics, detail)


# ---------------------------------------------------------------------------
# criteria 3 + 5 + 8 share the main 20k run


class TestCriterion3EndToEnd:
    def test_cnn_rnn_beats_baselines(self, fixture_dataset, main_run):
        result, model, elapsed = main_run
        avg_result, _ = xp.temporal_holdout(
            fixture_dataset, 2000, "average", TrainConfig(seed=42))
        lasso_result, _ = xp.temporal_holdout(
            fixture_dataset, 2000, "lasso", TrainConfig(seed=42))
        cnn = result.metrics["val_rmse"]
        avg = avg_result.metrics["val_rmse"]
        lasso = lasso_result.metrics["val_rmse"]
        ok = (cnn <= 0.8 * avg) and (cnn < lasso) and elapsed < 20 * 60
        _report(3, ok, f"cnn={cnn:.3f}, average={avg:.3f} (need <= {0.8 * avg:.3f}), "
                       f"lasso={lasso:.3f}, train_time={elapsed / 60:.1f} min")


class TestCriterion5Attribution:
    @staticmethod
    def _top7_hits(raw, layout, causal):
        w_scores = raw[layout.weather_slice]
        order = np.argsort(-w_scores, kind="stable")[:7]
        top = [(int(i) // 52 + 1, int(i) % 52 + 1) for i in order]
        return top, sum(1 for var, week in top if var == 1 and week in causal)

    def test_causal_weeks_recovered(self, fixture_dataset, main_run, val_samples_2000):
        _, model, _ = main_run
        causal = set(fixture_dataset.meta["causal"]["precipitation"]["weeks"])
        report = guided_attribute(model, val_samples_2000)
        top, hits = self._top7_hits(report.raw, report.layout, causal)

        # contrast diagnostic for the report line: standard-mode gradient of
        # the prediction over the same samples (not part of the criterion)
        prep = model.prepare(val_samples_2000)
        tape = ad.Tape(ad.STANDARD)
        bound = {k: tape.leaf(v) for k, v in model.params.items()}
        res = cnn_rnn_apply(model.config, bound, tape,
                            prep.steps_for(np.arange(prep.n)))
        out = res.preds[-1]
        tape.backward(out, np.ones_like(out.data))
        std_raw = np.abs(res.input_leaves[-1]["weather"].grad)
        std_raw = std_raw.reshape(prep.n, -1).mean(axis=0)
        full = np.zeros(report.layout.size)
        full[report.layout.weather_slice] = std_raw
        _, std_hits = self._top7_hits(full, report.layout, causal)

        _report(5, hits >= 5,
                f"guided hits {hits}/7 (top {top}); standard prediction-gradient "
                f"hits {std_hits}/7; see decisions ledger if red")


class TestCriterion8WeatherSweep:
    def test_updates_reduce_error(self, fixture_dataset, main_run):
        _, model, _ = main_run
        result, rows = xp.weather_sweep_run(fixture_dataset, 2000, model=model)
        ok = (result.metrics["rmse_full_update"] < result.metrics["rmse_zero_updates"]
              and len(rows) >= 10)
        _report(8, ok, f"zero={rows[0][1]:.3f}, full={rows[-1][1]:.3f}, steps={len(rows)}")


# ---------------------------------------------------------------------------
# criterion 4: trend capture


class TestCriterion4Trend:
    def test_management_ablation_beats_average_on_pure_trend(self):
        records, meta = gen_synthetic(SyntheticConfig(
            n_counties=30, n_states=3, year_start=1980, year_end=1996, seed=43,
            alpha_precip=0.0, beta_soil=0.0, gamma_heat=0.0,
            trend_per_year=1.0, noise_sd=0.5,
        ))
        ds = Dataset(records=records, crop="corn", meta=meta)
        m_result, _ = xp.ablation_run(
            ds, "M", 1996, TrainConfig(max_iters=TREND_ITERS, seed=42))
        avg_result, _ = xp.ablation_run(ds, "AVG", 1996, TrainConfig(seed=42))
        m_rmse = m_result.metrics["val_rmse"]
        avg_rmse = avg_result.metrics["val_rmse"]
        _report(4, m_rmse < avg_rmse, f"cnn-rnn(M)={m_rmse:.3f} vs average={avg_rmse:.3f}")


# ---------------------------------------------------------------------------
# criterion 6: feature-subset monotonicity


class TestCriterion6FeatureSubset:
    def test_subset_rmse_pattern(self, fixture_dataset, main_run):
        # the fraction-1.0 arm is bit-identical to the plain holdout under the
        # same seed/config (proven property), so the main run stands in for it;
        # the masked arms train at the same 20k budget
        _, runs = xp.feature_subset_run(
            fixture_dataset, 1999, 2000, fractions=(0.5, 0.75),
            train_config=TrainConfig(max_iters=MAIN_ITERS, seed=42),
            attribution_train_config=TrainConfig(max_iters=SELECT_ITERS, seed=42),
        )
        r100 = main_run[0].metrics["val_rmse"]
        r75 = runs[0.75][0].metrics["val_rmse"]
        r50 = runs[0.5][0].metrics["val_rmse"]
        ok = (r100 <= r75 <= 1.05 * r50) and (r75 <= 1.25 * r100)
        _report(6, ok,
                f"rmse100={r100:.3f}, rmse75={r75:.3f}, rmse50={r50:.3f}; "
                f"see decisions ledger if red")


# ---------------------------------------------------------------------------
# criterion 7: leave-location-out CV


class TestCriterion7LocationCV:
    def test_cv_within_band_of_holdout(self, fixture_dataset):
        cv = xp.kfold_location_cv(
            fixture_dataset, 2000, model_kind="cnn-rnn", folds=5, seed=42,
            train_config=TrainConfig(max_iters=CV_ITERS, seed=42),
        )
        holdout, _ = xp.temporal_holdout(
            fixture_dataset, 2000, "cnn-rnn",
            TrainConfig(max_iters=CV_ITERS, seed=42),
        )
        cv_rmse = cv.metrics["val_rmse"]
        ho_rmse = holdout.metrics["val_rmse"]
        _report(7, cv_rmse <= 1.5 * ho_rmse,
                f"cv={cv_rmse:.3f} vs holdout={ho_rmse:.3f} (band {1.5 * ho_rmse:.3f})")


# ---------------------------------------------------------------------------
# criterion 9: exact schedule and convention checks


class TestCriterion9Conventions:
    def test_exact_values(self):
        cfg = TrainConfig()
        lr_ok = (lr_schedule(0, cfg) == 3e-4 and lr_schedule(60000, cfg) == 1.5e-4
                 and lr_schedule(120000, cfg) == 7.5e-5)
        corr_ok = xp.pearson_corr(np.full(5, 3.0), np.arange(5.0)) == 0.0
        weeks_ok = weekly_average(np.arange(365.0)).shape == (52,)
        _report(9, lr_ok and corr_ok and weeks_ok,
                f"lr={lr_ok}, avg-corr-zero={corr_ok}, weekly-365-to-52={weeks_ok}")


# ---------------------------------------------------------------------------
# criterion 10: byte-identical reruns


class TestCriterion10Determinism:
    def test_rerun_byte_identical(self, fixture_dataset):
        artifacts = []
        for _ in range(2):
            result, _ = xp.temporal_holdout(
                fixture_dataset, 2000, "cnn-rnn",
                TrainConfig(max_iters=120, seed=9, emit_every=60),
            )
            artifacts.append((result.metrics_json().encode(),
                              result.predictions_csv().encode()))
        ok = artifacts[0] == artifacts[1]
        _report(10, ok, "metrics.json and predictions.csv byte-identical across reruns")
