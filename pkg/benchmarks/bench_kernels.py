#!/usr/bin/env python3
"""Benchmark the compiled kernel lane against the pure-numpy fallback.

Two views:
  * per-kernel timings at the shapes the default network actually runs
    (batch 25, the W/S conv ladder), forward and backward;
  * an end-to-end training-iteration comparison on the synthetic fixture.

Run:  python benchmarks/bench_kernels.py [--iters 200]
"""

import argparse
import timeit

import numpy as np

from yieldnet import kernels

# (input shape, out channels): the conv calls of one unrolled step at the
# default corn config, batch 25
CONV_SHAPES = [
    ((25, 6, 52), 8),
    ((25, 8, 26), 12),
    ((25, 12, 13), 16),
    ((25, 16, 6), 20),
    ((25, 10, 9), 12),
    ((25, 12, 4), 16),
    ((25, 16, 2), 20),
    ((25, 20, 2), 24),
]
POOL_SHAPES = [(25, 8, 52), (25, 12, 26), (25, 16, 13), (25, 12, 9), (25, 16, 4)]


def time_callable(fn, repeat=2000):
    return timeit.timeit(fn, number=repeat) / repeat


def bench_kernels():
    lanes = kernels.available_backends()
    rng = np.random.default_rng(0)
    print(f"available lanes: {lanes} (active: {kernels.backend_name()})")
    print()
    header = f"{'kernel':<34}" + "".join(f"{lane:>12}" for lane in lanes)
    if len(lanes) > 1:
        header += f"{'speedup':>10}"
    print(header)
    print("-" * len(header))
    totals = {lane: 0.0 for lane in lanes}
    for shape, co in CONV_SHAPES:
        x = np.ascontiguousarray(rng.normal(size=shape))
        w = np.ascontiguousarray(rng.normal(size=(co, shape[1], 3)))
        b = rng.normal(size=co)
        gy = np.ascontiguousarray(rng.normal(size=(shape[0], co, shape[2])))
        for op, args in (("fwd", (x, w, b)), ("bwd", (x, w, gy))):
            row = f"conv1d {op} {str(shape):<22}"
            times = []
            for lane in lanes:
                be = kernels.get_backend(lane)
                fn = be.conv1d_forward if op == "fwd" else be.conv1d_backward
                t = time_callable(lambda f=fn, a=args: f(*a))
                times.append(t)
                totals[lane] += t
                row += f"{t * 1e6:>10.1f}us"
            if len(times) > 1:
                row += f"{times[1] / times[0]:>9.2f}x"
            print(row)
    for shape in POOL_SHAPES:
        x = np.ascontiguousarray(rng.normal(size=shape))
        gy = np.ascontiguousarray(rng.normal(size=(shape[0], shape[1], shape[2] // 2)))
        for op in ("fwd", "bwd"):
            row = f"avgpool {op} {str(shape):<21}"
            times = []
            for lane in lanes:
                be = kernels.get_backend(lane)
                if op == "fwd":
                    fn = lambda b=be, a=x: b.avgpool2_forward(a)
                else:
                    fn = lambda b=be, a=gy, L=shape[2]: b.avgpool2_backward(a, L)
                t = time_callable(fn)
                times.append(t)
                totals[lane] += t
                row += f"{t * 1e6:>10.1f}us"
            if len(times) > 1:
                row += f"{times[1] / times[0]:>9.2f}x"
            print(row)
    print("-" * len(header))
    row = f"{'total (one step, fwd+bwd)':<34}"
    for lane in lanes:
        row += f"{totals[lane] * 1e6:>10.1f}us"
    if len(lanes) > 1:
        row += f"{totals[lanes[1]] / totals[lanes[0]]:>9.2f}x"
    print(row)


def bench_training(iters):
    from yieldnet.data.io import Dataset
    from yieldnet.data.preprocess import assemble_sequences
    from yieldnet.data.synthetic import SyntheticConfig, gen_synthetic
    from yieldnet.model import CnnRnnConfig, build_cnn_rnn
    from yieldnet.training import TrainConfig, train

    recs, _ = gen_synthetic(SyntheticConfig())
    samples, _ = assemble_sequences(recs, 5, range(1985, 2000), "train")
    print()
    print(f"end-to-end: {iters} training iterations, batch 25, default config")
    saved = kernels._active
    try:
        for lane in kernels.available_backends():
            kernels._active = kernels.get_backend(lane)
            model = build_cnn_rnn(CnnRnnConfig(), 42)
            cfg = TrainConfig(max_iters=iters, seed=42, emit_every=max(iters, 1))
            start = timeit.default_timer()
            train(model, samples, cfg)
            elapsed = timeit.default_timer() - start
            per_iter = elapsed / max(iters, 1) * 1000
            print(f"  {lane:<8} {elapsed:7.2f}s  ({per_iter:.1f} ms/iter, "
                  f"20k iters ~ {per_iter * 20000 / 60000:.1f} min)")
    finally:
        kernels._active = saved


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--iters", type=int, default=200,
                        help="training iterations for the end-to-end comparison")
    parser.add_argument("--skip-training", action="store_true")
    args = parser.parse_args()
    bench_kernels()
    if not args.skip_training:
        bench_training(args.iters)


if __name__ == "__main__":
    main()
