"""Command-line surface.

Subcommands: gen-synthetic, train, evaluate, attribute,
experiment {holdout, cv, ablation, subset, weather-sweep}, summarize.

All outputs are written atomically (temp file + rename), embed the seed and
a config hash, and contain nothing volatile, so re-running a command with
identical inputs reproduces identical bytes. Exit codes: 0 success,
1 contract violation or usage error, 2 I/O or data-format error.
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import experiments as xp
from . import serialize
from .data.io import atomic_write_text, load_dataset, write_dataset
from .data.preprocess import assemble_sequences, compute_avg_yields, summarize_dataset
from .data.synthetic import SyntheticConfig, gen_synthetic
from .errors import ContractViolation, DataFormatError, TrainingDiverged
from .training import TrainConfig


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise ContractViolation(message)


def _year_range(text):
    try:
        lo, hi = text.split(":")
        return int(lo), int(hi)
    except ValueError:
        raise ContractViolation(f"expected START:END year range, got {text!r}") from None


def _fractions(text):
    return tuple(float(tok) for tok in text.split(","))


def _add_common(p):
    p.add_argument("--seed", type=int, default=42)
    p.add_argument("--iters", type=int, default=None, help="training iterations")
    p.add_argument("--batch-size", type=int, default=None)
    p.add_argument("--lr", type=float, default=None, help="base learning rate")
    p.add_argument("--k", type=int, default=5, help="window length in years")
    p.add_argument("--lam", type=float, default=0.4, help="lasso L1 weight")
    p.add_argument("--threads", type=int, default=None,
                   help="cap on parallel contexts (default: YIELDNET_THREADS or 1)")
    p.add_argument("--config", default=None, help="key=value config file; flags win")
    p.add_argument("--out", default="out", help="output directory")


def build_parser():
    parser = _Parser(prog="yieldnet", description=__doc__,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen-synthetic", help="generate a synthetic dataset directory")
    g.add_argument("--counties", type=int, default=60)
    g.add_argument("--states", type=int, default=4)
    g.add_argument("--years", type=_year_range, default=(1980, 2000), metavar="START:END")
    g.add_argument("--seed", type=int, default=42)
    g.add_argument("--crop", choices=("corn", "soybean"), default="corn")
    g.add_argument("--trend", type=float, default=None)
    g.add_argument("--alpha", type=float, default=None, help="precipitation coefficient")
    g.add_argument("--beta", type=float, default=None, help="soil latent coefficient")
    g.add_argument("--gamma", type=float, default=None, help="heat stress coefficient")
    g.add_argument("--noise-sd", type=float, default=None)
    g.add_argument("--out", default="data")

    for name, extra in (
        ("train", lambda p: (p.add_argument("--year", type=int, required=True,
                                            help="train on target years before this year"),
                             p.add_argument("--model", choices=xp.MODEL_KINDS,
                                            default="cnn-rnn"))),
        ("evaluate", lambda p: (p.add_argument("--year", type=int, required=True),
                                p.add_argument("--model-file", required=True))),
        ("attribute", lambda p: (p.add_argument("--year", type=int, required=True),
                                 p.add_argument("--model-file", required=True),
                                 p.add_argument("--from-head", action="store_true"))),
        ("summarize", lambda p: None),
    ):
        p = sub.add_parser(name)
        p.add_argument("--data", required=True, help="dataset directory")
        extra(p)
        if name != "gen-synthetic":
            _add_common(p)

    e = sub.add_parser("experiment")
    esub = e.add_subparsers(dest="protocol", required=True)
    for proto in ("holdout", "cv", "ablation", "subset", "weather-sweep"):
        p = esub.add_parser(proto)
        p.add_argument("--data", required=True)
        _add_common(p)
        if proto == "holdout":
            p.add_argument("--year", type=int, required=True)
            p.add_argument("--model", choices=xp.MODEL_KINDS, default="cnn-rnn")
        elif proto == "cv":
            p.add_argument("--year", type=int, required=True)
            p.add_argument("--model", choices=xp.MODEL_KINDS, default="cnn-rnn")
            p.add_argument("--folds", type=int, default=5)
        elif proto == "ablation":
            p.add_argument("--year", type=int, required=True)
            p.add_argument("--source", choices=xp.ABLATION_SOURCES, required=True)
        elif proto == "subset":
            p.add_argument("--select-year", type=int, required=True)
            p.add_argument("--eval-year", type=int, required=True)
            p.add_argument("--fractions", type=_fractions, default=(0.5, 0.75, 1.0))
        elif proto == "weather-sweep":
            p.add_argument("--year", type=int, required=True)
            p.add_argument("--weeks", type=_year_range, default=(22, 39), metavar="FIRST:LAST")
            p.add_argument("--model-file", default=None)
    return parser


def _apply_config_file(args):
    if getattr(args, "config", None) is None:
        return args
    if not os.path.exists(args.config):
        raise DataFormatError("config file not found", path=args.config)
    overrides = {}
    with open(args.config, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if "=" not in line:
                raise DataFormatError("expected key=value", path=args.config, row=lineno)
            key, value = line.split("=", 1)
            overrides[key.strip().replace("-", "_")] = value.strip()
    for key, value in overrides.items():
        if not hasattr(args, key) or getattr(args, key) is not None:
            continue  # unknown key or flag already set: flags win
        current = getattr(args, key)
        setattr(args, key, type(current)(value) if current is not None else _auto(value))
    return args


def _auto(text):
    for cast in (int, float):
        try:
            return cast(text)
        except ValueError:
            pass
    return text


def _train_config(args):
    kwargs = {"seed": args.seed}
    if args.iters is not None:
        kwargs["max_iters"] = args.iters
    if args.batch_size is not None:
        kwargs["batch_size"] = args.batch_size
    if args.lr is not None:
        kwargs["base_lr"] = args.lr
    return TrainConfig(**kwargs)


def _threads(args):
    n = args.threads if args.threads is not None else int(
        os.environ.get("YIELDNET_THREADS", "1")
    )
    if n < 1:
        raise ContractViolation("--threads must be >= 1")
    return n


def _write_result(result, out_dir, extra_files=()):
    atomic_write_text(os.path.join(out_dir, "metrics.json"), result.metrics_json())
    if result.predictions:
        atomic_write_text(os.path.join(out_dir, "predictions.csv"), result.predictions_csv())
    for name, text in extra_files:
        atomic_write_text(os.path.join(out_dir, name), text)


def _summary_line(result):
    m = result.metrics
    bits = [result.experiment, f"seed={result.seed}"]
    for key in ("val_rmse", "val_corr_pct", "rmse_zero_updates", "rmse_full_update"):
        if key in m and np.isfinite(m[key]):
            bits.append(f"{key}={m[key]:.4f}")
    return " ".join(bits)


def _run(args):
    if args.command == "gen-synthetic":
        overrides = {}
        for flag, key in (("trend", "trend_per_year"), ("alpha", "alpha_precip"),
                          ("beta", "beta_soil"), ("gamma", "gamma_heat"),
                          ("noise_sd", "noise_sd")):
            value = getattr(args, flag)
            if value is not None:
                overrides[key] = value
        config = SyntheticConfig(
            n_counties=args.counties, n_states=args.states,
            year_start=args.years[0], year_end=args.years[1],
            seed=args.seed, crop=args.crop, **overrides,
        )
        records, meta = gen_synthetic(config)
        write_dataset(records, args.out, meta=meta)
        print(f"gen-synthetic counties={args.counties} years={args.years[0]}:{args.years[1]} "
              f"seed={args.seed} out={args.out}")
        return 0

    _threads(args)
    dataset = load_dataset(args.data)
    tc = _train_config(args)

    if args.command == "train":
        result, model = xp.temporal_holdout(
            dataset, args.year, args.model, tc, k=args.k, lam=args.lam,
        )
        os.makedirs(args.out, exist_ok=True)
        serialize.save_model(model, os.path.join(args.out, "model.ynet"))
        curve = getattr(model, "train_curve", None)
        if curve:
            from .training import TrainResult

            atomic_write_text(os.path.join(args.out, "curve.csv"),
                              TrainResult(model, curve).curve_csv())
        _write_result(result, args.out)
        print(_summary_line(result))
        return 0

    if args.command == "evaluate":
        model = serialize.load_model(args.model_file)
        k = model.config.k if hasattr(model, "config") and hasattr(model.config, "k") \
            else args.k
        ay = compute_avg_yields(dataset.records, dataset.crop,
                                years=set(range(min(dataset.years), args.year)))
        samples, _ = assemble_sequences(
            dataset.records, k, [args.year], "test",
            crop=dataset.crop, avg_yields=ay,
        )
        preds = xp.predict_model(model, samples)
        va_rmse, va_corr, n_val = xp.metric_pair(preds, samples)
        payload = {"experiment": "evaluate", "year": args.year, "seed": args.seed,
                   "model_file": os.path.basename(args.model_file)}
        result = xp.ExperimentResult(
            experiment="evaluate", seed=args.seed,
            config_hash=xp.config_hash(payload), crop=dataset.crop,
            metrics={"val_rmse": va_rmse, "val_corr_pct": va_corr},
            predictions=xp.prediction_rows(preds, samples),
            extra={"validation_year": args.year, "n_val": n_val},
        )
        _write_result(result, args.out)
        print(_summary_line(result))
        return 0

    if args.command == "attribute":
        from .attribution import guided_attribute

        model = serialize.load_model(args.model_file)
        k = model.config.k if hasattr(model, "config") and hasattr(model.config, "k") \
            else args.k
        ay = compute_avg_yields(dataset.records, dataset.crop,
                                years=set(range(min(dataset.years), args.year)))
        samples, _ = assemble_sequences(
            dataset.records, k, [args.year], "test",
            crop=dataset.crop, avg_yields=ay,
        )
        report = guided_attribute(model, samples, from_head=args.from_head)
        atomic_write_text(os.path.join(args.out, "attribution.csv"), report.to_csv())
        top = report.top_weather_weeks(7)
        print(f"attribute year={args.year} samples={report.n_samples} "
              f"top_precip_weeks={top}")
        return 0

    if args.command == "summarize":
        stats = summarize_dataset(dataset.records)
        lines = ["crop,year,mean,sd,n"]
        for (crop, year), row in stats.items():
            lines.append(f"{crop},{year},{repr(row['mean'])},{repr(row['sd'])},{row['n']}")
        atomic_write_text(os.path.join(args.out, "summary.csv"), "\n".join(lines) + "\n")
        print(f"summarize rows={len(stats)} out={args.out}/summary.csv")
        return 0

    # experiment protocols
    if args.protocol == "holdout":
        result, model = xp.temporal_holdout(
            dataset, args.year, args.model, tc, k=args.k, lam=args.lam,
        )
        _write_result(result, args.out)
    elif args.protocol == "cv":
        result = xp.kfold_location_cv(
            dataset, args.year, model_kind=args.model, folds=args.folds,
            seed=args.seed, train_config=tc, k=args.k,
        )
        _write_result(result, args.out)
    elif args.protocol == "ablation":
        result, _ = xp.ablation_run(dataset, args.source, args.year, tc, k=args.k)
        _write_result(result, args.out)
    elif args.protocol == "subset":
        report, runs = xp.feature_subset_run(
            dataset, args.select_year, args.eval_year, fractions=args.fractions,
            train_config=tc, k=args.k,
        )
        files = [("attribution.csv", report.to_csv())]
        for fraction, (res, _) in sorted(runs.items()):
            files.append((f"metrics_{int(round(fraction * 100))}.json", res.metrics_json()))
            print(_summary_line(res))
        result = runs[max(runs)][0]
        _write_result(result, args.out, extra_files=files)
        return 0
    elif args.protocol == "weather-sweep":
        model = serialize.load_model(args.model_file) if args.model_file else None
        lo, hi = args.weeks
        result, rows = xp.weather_sweep_run(
            dataset, args.year, model=model, train_config=tc, k=args.k,
            substitution_weeks=tuple(range(lo, hi + 1)),
        )
        _write_result(result, args.out, extra_files=[("sweep.csv", xp.sweep_csv(rows))])
    else:  # pragma: no cover
        raise ContractViolation(f"unknown protocol {args.protocol!r}")
    print(_summary_line(result))
    return 0


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        args = _apply_config_file(args)
        return _run(args)
    except (ContractViolation, TrainingDiverged) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    except (DataFormatError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
