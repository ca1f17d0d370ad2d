"""Metrics and the experiment protocols.

Protocols: temporal holdout, leave-location-out k-fold CV, single-source
ablations, feature-subset retraining, and the predicted-weather update sweep.
Every protocol is deterministic given (seed, dataset, config), never reads
held-out targets before metric computation (enforced through the dataset
layer's target guard), and reports the four-column metric table: training
RMSE, training correlation %, validation RMSE, validation correlation %.
"""

from __future__ import annotations

import hashlib
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .attribution import (
    apply_mask,
    guided_attribute,
    mask_fill_values,
    select_top_fraction,
)
from .baselines import average_baseline, fit_lasso, fit_random_forest, flatten_features
from .data.preprocess import assemble_sequences, compute_avg_yields, substitute_weather
from .data.records import guard_targets
from .errors import ContractViolation
from .features import (
    GROUP_AVG_YIELD,
    GROUP_MANAGEMENT,
    GROUP_SOIL_DEPTH,
    GROUP_SOIL_SURFACE,
    GROUP_WEATHER,
    Standardizer,
)
from .model import CnnRnnConfig, DfnnConfig, build_cnn_rnn, build_dfnn
from .training import TrainConfig, train

MODEL_KINDS = ("cnn-rnn", "dfnn", "rf", "lasso", "average")
ABLATION_SOURCES = ("W", "S", "M", "AVG")
DEFAULT_SWEEP_WEEKS = tuple(range(22, 40))  # June-September analog


def rmse(pred, truth):
    """Root mean squared error, in the target's units."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.size == 0:
        raise ContractViolation("rmse needs equal-length non-empty vectors")
    d = pred - truth
    return float(np.sqrt(np.mean(d * d)))


def pearson_corr(pred, truth):
    """Pearson correlation coefficient in percent; 0 when either side is
    constant (the convention used for the Average model)."""
    pred = np.asarray(pred, dtype=np.float64)
    truth = np.asarray(truth, dtype=np.float64)
    if pred.shape != truth.shape or pred.size < 2:
        raise ContractViolation("pearson_corr needs equal lengths >= 2")
    ps = pred.std()
    ts = truth.std()
    if ps < 1e-12 or ts < 1e-12:
        return 0.0
    cov = ((pred - pred.mean()) * (truth - truth.mean())).mean()
    return float(100.0 * cov / (ps * ts))


def config_hash(payload) -> str:
    return hashlib.sha256(
        json.dumps(payload, sort_keys=True, default=str).encode()
    ).hexdigest()[:12]


@dataclass
class ExperimentResult:
    experiment: str
    seed: int
    config_hash: str
    crop: str
    metrics: dict
    predictions: list = field(default_factory=list)  # (county_id, year, truth, pred)
    extra: dict = field(default_factory=dict)
    runtime: float = 0.0  # volatile; never serialized

    def metrics_json(self) -> str:
        body = {
            "experiment": self.experiment,
            "seed": self.seed,
            "config_hash": self.config_hash,
            "crop": self.crop,
            "metrics": self.metrics,
            "extra": self.extra,
        }
        return json.dumps(body, sort_keys=True, indent=2) + "\n"

    def predictions_csv(self) -> str:
        lines = ["county_id,year,truth,prediction,abs_error"]
        for county, year, truth, pred in self.predictions:
            if truth is None:
                lines.append(f"{county},{year},,{repr(pred)},")
            else:
                lines.append(
                    f"{county},{year},{repr(truth)},{repr(pred)},{repr(abs(pred - truth))}"
                )
        return "\n".join(lines) + "\n"


def metric_pair(preds, samples):
    """(rmse, corr%) over the samples that have observed targets."""
    pairs = [(p, s.target) for p, s in zip(preds, samples) if s.has_target]
    if not pairs:
        return float("nan"), float("nan"), 0
    p = np.array([a for a, _ in pairs])
    t = np.array([b for _, b in pairs])
    corr = pearson_corr(p, t) if p.size >= 2 else 0.0
    return rmse(p, t), corr, p.size


def prediction_rows(preds, samples):
    rows = []
    for p, s in zip(preds, samples):
        truth = s.target if s.has_target else None
        rows.append((s.county_id, s.target_year, truth, float(p)))
    return rows


def group_source_mask(layout, source):
    """Flat feature mask for a single-source ablation; the average-yield
    channel is always kept."""
    if source not in ("W", "S", "M"):
        raise ContractViolation(f"unknown ablation source {source!r}")
    groups = layout.groups()
    keep_groups = {
        "W": {GROUP_WEATHER},
        "S": {GROUP_SOIL_DEPTH, GROUP_SOIL_SURFACE},
        "M": {GROUP_MANAGEMENT},
    }[source] | {GROUP_AVG_YIELD}
    return np.array([g in keep_groups for g in groups])


def fit_model(kind, train_samples, crop, train_config: TrainConfig,
              model_config=None, lam=0.4, mask=None, mask_fill=None):
    """Fit any of the five model kinds on training samples.

    ``mask``/``mask_fill`` (flat feature layout) pin masked inputs to their
    fill values before standardization; only the CNN-RNN honors them.
    """
    if kind not in MODEL_KINDS:
        raise ContractViolation(f"unknown model kind {kind!r}")
    train_samples = [s for s in train_samples if s.has_target]
    if not train_samples:
        raise ContractViolation("no training samples with observed targets")
    mdim = train_samples[0].records[-1].management.shape[0]

    if kind == "cnn-rnn":
        window_k = len(train_samples[0].records) - 1
        config = model_config or CnnRnnConfig.for_crop(
            crop, management_dim=mdim, k=window_k
        )
        model = build_cnn_rnn(config, train_config.seed)
        if mask is not None:
            model.input_mask = np.asarray(mask, dtype=bool)
            model.mask_fill = np.asarray(mask_fill, dtype=np.float64)
            train_samples = [
                apply_mask(s, model.input_mask, model.mask_fill, config.layout)
                for s in train_samples
            ]
        model.train_curve = train(model, train_samples, train_config).curve
        return model

    if kind == "dfnn":
        layout_size = 6 * 52 + 10 * 9 + 4 + mdim + 1
        config = model_config or DfnnConfig(input_dim=layout_size)
        model = build_dfnn(config, train_config.seed)
        model.train_curve = train(model, train_samples, train_config).curve
        return model

    st = Standardizer.fit(train_samples, standardize_targets=False)
    y = np.array([s.target for s in train_samples])
    if kind == "average":
        model = average_baseline(y)
        model.standardizer = st
        return model
    X = np.stack([flatten_features(s) for s in train_samples])
    X = (X - st.flat_mean) / st.flat_sd
    if kind == "lasso":
        model = fit_lasso(X, y, lam=lam)
    else:
        model = fit_random_forest(X, y, seed=train_config.seed)
    model.standardizer = st
    return model


def predict_model(model, samples):
    """Predictions in bu/acre for any model kind; applies a stored input
    mask when the model carries one."""
    samples = list(samples)
    if not samples:
        return np.empty(0)
    if model.kind == "cnn-rnn":
        if model.input_mask is not None:
            samples = [
                apply_mask(s, model.input_mask, model.mask_fill, model.config.layout)
                for s in samples
            ]
        return model.predict(samples)
    if model.kind == "dfnn":
        return model.predict(samples)
    st = model.standardizer
    X = np.stack([flatten_features(s) for s in samples])
    if st is not None:
        X = (X - st.flat_mean) / st.flat_sd
    return model.predict(X)


def _split_years(dataset, validation_year, k):
    years = dataset.years
    first_target = min(years) + k
    if validation_year <= first_target:
        raise ContractViolation(
            f"validation year {validation_year} needs at least k+1={k + 1} prior years"
        )
    if validation_year not in years:
        raise ContractViolation(f"validation year {validation_year} not present in dataset")
    return list(range(first_target, validation_year))


def holdout_splits(dataset, validation_year, k):
    """(train_samples, val_samples) for the temporal-holdout protocol."""
    train_targets = _split_years(dataset, validation_year, k)
    ay = compute_avg_yields(dataset.records, dataset.crop,
                            years=set(range(min(dataset.years), validation_year)))
    train_samples, _ = assemble_sequences(
        dataset.records, k, train_targets, "train", crop=dataset.crop, avg_yields=ay
    )
    val_samples, _ = assemble_sequences(
        dataset.records, k, [validation_year], "test", crop=dataset.crop, avg_yields=ay
    )
    if not train_samples:
        raise ContractViolation("temporal holdout produced no training samples")
    return train_samples, val_samples


def temporal_holdout(dataset, validation_year, model_kind, train_config=None,
                     k=5, model_config=None, lam=0.4, mask=None, mask_fill=None,
                     experiment_id="holdout"):
    """Train on all years before ``validation_year``, evaluate both splits.

    Returns (ExperimentResult, fitted model).
    """
    train_config = train_config or TrainConfig()
    started = time.perf_counter()
    train_samples, val_samples = holdout_splits(dataset, validation_year, k)
    with guard_targets({validation_year}):
        model = fit_model(
            model_kind, train_samples, dataset.crop, train_config,
            model_config=model_config, lam=lam, mask=mask, mask_fill=mask_fill,
        )
        train_preds = predict_model(model, train_samples)
        val_preds = predict_model(model, val_samples)
    tr_rmse, tr_corr, n_train = metric_pair(train_preds, train_samples)
    va_rmse, va_corr, n_val = metric_pair(val_preds, val_samples)
    payload = {
        "experiment": experiment_id, "model": model_kind, "year": validation_year,
        "k": k, "seed": train_config.seed, "iters": train_config.max_iters,
        "masked": mask is not None,
    }
    result = ExperimentResult(
        experiment=experiment_id,
        seed=train_config.seed,
        config_hash=config_hash(payload),
        crop=dataset.crop,
        metrics={
            "train_rmse": tr_rmse, "train_corr_pct": tr_corr,
            "val_rmse": va_rmse, "val_corr_pct": va_corr,
        },
        predictions=prediction_rows(val_preds, val_samples),
        extra={"model_kind": model_kind, "validation_year": validation_year,
               "n_train": n_train, "n_val": n_val},
        runtime=time.perf_counter() - started,
    )
    return result, model


def kfold_location_cv(dataset, target_year, model_kind="cnn-rnn", folds=5,
                      seed=0, train_config=None, k=5):
    """Leave-location-out CV at ``target_year`` with pooled metrics."""
    train_config = train_config or TrainConfig(seed=seed)
    started = time.perf_counter()
    counties = sorted(
        r.county_id for r in dataset.records if r.year == target_year and r.has_yield
    )
    if len(counties) < folds:
        raise ContractViolation(
            f"need at least {folds} counties with ground truth at {target_year}"
        )
    rng = np.random.default_rng(seed)
    order = rng.permutation(len(counties))
    fold_sets = [sorted(np.asarray(counties)[idx].tolist())
                 for idx in np.array_split(order, folds)]
    if any(len(f) == 0 for f in fold_sets):
        raise ContractViolation("a CV fold would be empty")

    pooled_val = []
    pooled_train = []
    per_fold = []
    all_rows = []
    for fold_no, held_out in enumerate(fold_sets):
        held = set(held_out)
        train_records = [r for r in dataset.records if r.county_id not in held]
        ay = compute_avg_yields(train_records, dataset.crop,
                                years=set(range(min(dataset.years), target_year)))
        train_targets = _split_years(dataset, target_year, k)
        train_samples, _ = assemble_sequences(
            train_records, k, train_targets, "train", crop=dataset.crop, avg_yields=ay
        )
        fold_records = [r for r in dataset.records if r.county_id in held]
        val_samples, _ = assemble_sequences(
            fold_records, k, [target_year], "test", crop=dataset.crop, avg_yields=ay
        )
        with guard_targets({target_year}):
            model = fit_model(model_kind, train_samples, dataset.crop, train_config)
            train_preds = predict_model(model, train_samples)
            val_preds = predict_model(model, val_samples)
        for p, s in zip(val_preds, val_samples):
            if s.has_target:
                pooled_val.append((float(p), s.target))
        for p, s in zip(train_preds, train_samples):
            if s.has_target:
                pooled_train.append((float(p), s.target))
        fr, fc, fn = metric_pair(val_preds, val_samples)
        per_fold.append({"fold": fold_no, "counties": held_out,
                         "val_rmse": fr, "val_corr_pct": fc, "n_val": fn})
        all_rows.extend(prediction_rows(val_preds, val_samples))

    vp = np.array([p for p, _ in pooled_val])
    vt = np.array([t for _, t in pooled_val])
    tp = np.array([p for p, _ in pooled_train])
    tt = np.array([t for _, t in pooled_train])
    payload = {"experiment": "cv", "model": model_kind, "year": target_year,
               "folds": folds, "seed": seed, "iters": train_config.max_iters, "k": k}
    result = ExperimentResult(
        experiment="cv",
        seed=seed,
        config_hash=config_hash(payload),
        crop=dataset.crop,
        metrics={
            "train_rmse": rmse(tp, tt), "train_corr_pct": pearson_corr(tp, tt),
            "val_rmse": rmse(vp, vt), "val_corr_pct": pearson_corr(vp, vt),
        },
        predictions=sorted(all_rows),
        extra={"model_kind": model_kind, "target_year": target_year,
               "folds": per_fold, "n_val": int(vp.size)},
        runtime=time.perf_counter() - started,
    )
    return result


def ablation_run(dataset, source, validation_year, train_config=None, k=5,
                 model_config=None):
    """Single-source variant: keep one input group (plus the average-yield
    channel) and pin everything else to the training mean; AVG runs the
    constant Average baseline on the same splits."""
    if source not in ABLATION_SOURCES:
        raise ContractViolation(f"ablation source must be one of {ABLATION_SOURCES}")
    train_config = train_config or TrainConfig()
    if source == "AVG":
        result, model = temporal_holdout(
            dataset, validation_year, "average", train_config, k=k,
            experiment_id="ablation-AVG",
        )
        return result, model
    train_samples, _ = holdout_splits(dataset, validation_year, k)
    st = Standardizer.fit([s for s in train_samples if s.has_target])
    mdim = dataset.management_dim
    layout = CnnRnnConfig.for_crop(dataset.crop, management_dim=mdim).layout
    mask = group_source_mask(layout, source)
    result, model = temporal_holdout(
        dataset, validation_year, "cnn-rnn", train_config, k=k,
        model_config=model_config, mask=mask, mask_fill=st.flat_mean,
        experiment_id=f"ablation-{source}",
    )
    return result, model


def feature_subset_run(dataset, select_year, eval_year, fractions=(0.5, 0.75, 1.0),
                       train_config=None, k=5, model_config=None,
                       attribution_train_config=None):
    """Attribution-guided feature-subset retraining.

    Trains on years < ``select_year``, attributes on ``select_year``, then
    retrains on years < ``eval_year`` with each fraction's mask and
    evaluates at ``eval_year``. Selection never reads ``eval_year`` data.
    """
    if select_year >= eval_year:
        raise ContractViolation("select_year must precede eval_year")
    if any(not 0.0 < f <= 1.0 for f in fractions):
        raise ContractViolation("fractions must lie in (0, 1]")
    train_config = train_config or TrainConfig()
    attribution_train_config = attribution_train_config or train_config
    _, select_model = temporal_holdout(
        dataset, select_year, "cnn-rnn", attribution_train_config, k=k,
        model_config=model_config, experiment_id="subset-select",
    )
    ay = compute_avg_yields(dataset.records, dataset.crop,
                            years=set(range(min(dataset.years), select_year)))
    select_samples, _ = assemble_sequences(
        dataset.records, k, [select_year], "test", crop=dataset.crop, avg_yields=ay
    )
    report = guided_attribute(select_model, select_samples)
    fill = mask_fill_values(select_model.standardizer)

    results = {}
    for fraction in fractions:
        mask = select_top_fraction(report, fraction)
        result, model = temporal_holdout(
            dataset, eval_year, "cnn-rnn", train_config, k=k,
            model_config=model_config, mask=mask, mask_fill=fill,
            experiment_id=f"subset-{int(round(fraction * 100))}",
        )
        result.extra["fraction"] = fraction
        result.extra["kept_features"] = int(mask.sum())
        results[fraction] = (result, model)
    return report, results


def weather_sweep_run(dataset, target_year, model=None, train_config=None, k=5,
                      substitution_weeks=DEFAULT_SWEEP_WEEKS, update_schedule=None,
                      model_config=None):
    """Predicted-weather sweep at ``target_year``.

    The target year's weather inside the substitution window starts out
    replaced by the prior year's values; each update step restores one more
    week of ground truth (in ``update_schedule`` order, default ascending)
    and re-predicts. Emits one row per update count.
    """
    train_config = train_config or TrainConfig()
    started = time.perf_counter()
    weeks = sorted(set(substitution_weeks))
    if update_schedule is None:
        update_schedule = list(weeks)
    if sorted(update_schedule) != weeks:
        raise ContractViolation("update schedule must cover exactly the substitution weeks")
    if model is None:
        _, model = temporal_holdout(
            dataset, target_year, "cnn-rnn", train_config, k=k, model_config=model_config,
        )
    prior = dataset.records_for_year(target_year - 1)
    ay = compute_avg_yields(dataset.records, dataset.crop,
                            years=set(range(min(dataset.years), target_year)))
    val_samples, _ = assemble_sequences(
        dataset.records, k, [target_year], "test", crop=dataset.crop, avg_yields=ay
    )
    usable = [s for s in val_samples if s.county_id in prior]
    skipped = len(val_samples) - len(usable)
    if not usable:
        raise ContractViolation("no county has prior-year weather for the sweep")

    rows = []
    for updated in range(len(update_schedule) + 1):
        remaining = update_schedule[updated:]
        if remaining:
            stepped = [substitute_weather(s, prior, remaining) for s in usable]
        else:
            stepped = usable
        preds = predict_model(model, stepped)
        r, _, _ = metric_pair(preds, usable)
        rows.append((updated, r, float(np.mean(preds))))

    payload = {"experiment": "weather-sweep", "year": target_year,
               "weeks": weeks, "seed": train_config.seed}
    result = ExperimentResult(
        experiment="weather-sweep",
        seed=train_config.seed,
        config_hash=config_hash(payload),
        crop=dataset.crop,
        metrics={
            "rmse_zero_updates": rows[0][1],
            "rmse_full_update": rows[-1][1],
        },
        extra={
            "target_year": target_year,
            "substitution_weeks": weeks,
            "counties_skipped": skipped,
            "steps": [{"weeks_updated": u, "rmse": r, "mean_pred": m} for u, r, m in rows],
        },
        runtime=time.perf_counter() - started,
    )
    return result, rows


def sweep_csv(rows) -> str:
    lines = ["weeks_updated,rmse,mean_pred"]
    for updated, r, mean_pred in rows:
        lines.append(f"{updated},{repr(r)},{repr(mean_pred)}")
    return "\n".join(lines) + "\n"
