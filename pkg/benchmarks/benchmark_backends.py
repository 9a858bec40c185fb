"""Benchmark the compiled stochastic kernels against the numpy fallback.

Runs the single-term stochastic solver and the diminishing-step baseline on
a synthetic hinge-loss instance under both backends, reporting steps/second
and the agreement between the two paths.

    python benchmarks/benchmark_backends.py --n 8192 --d 128 --epochs 5
"""

import argparse
import time

import numpy as np

from proxsplit import kernels
from proxsplit.baselines import DiminishingStep, stochastic_prox_iteration_run
from proxsplit.core import objective
from proxsplit.ppg import SolveOptions
from proxsplit.problems import SvmData, build_svm
from proxsplit.sppg import IndexSampler, sppg_run


def make_data(n, d, seed=0):
    rng = np.random.default_rng(seed)
    u = rng.standard_normal(d)
    u /= np.linalg.norm(u)
    labels = np.where(rng.random(n) < 0.5, 1.0, -1.0)
    feats = rng.standard_normal((n, d)) + labels[:, None] * u[None, :]
    feats /= np.linalg.norm(feats, axis=1, keepdims=True)
    return SvmData(feats, labels, lam=0.1)


def timed(fn):
    t0 = time.perf_counter()
    out = fn()
    return out, time.perf_counter() - t0


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=8192)
    parser.add_argument("--d", type=int, default=128)
    parser.add_argument("--epochs", type=int, default=5)
    parser.add_argument("--seed", type=int, default=0)
    args = parser.parse_args()

    data = make_data(args.n, args.d, args.seed)
    split_form = build_svm(data)
    folded_form = build_svm(data, fold_ridge=True)
    steps = args.epochs * args.n
    opts = SolveOptions(alpha=10.0, max_iters=steps, record_every=steps)

    results = {}
    for backend in ("numba", "numpy"):
        if backend == "numba" and not kernels.numba_available():
            print("numba not importable; skipping compiled backend")
            continue
        kernels.set_backend(backend)
        try:
            if backend == "numba":  # compile outside the timed region
                sppg_run(split_form, SolveOptions(alpha=10.0, max_iters=64,
                                                  record_every=64),
                         IndexSampler(args.seed, args.n))
            res, dt = timed(lambda: sppg_run(
                split_form, opts, IndexSampler(args.seed, args.n)))
            spi, dt_spi = timed(lambda: stochastic_prox_iteration_run(
                folded_form, DiminishingStep(16.0),
                IndexSampler(args.seed, args.n), opts))
        finally:
            kernels.set_backend(None)
        results[backend] = (res.x, dt, spi.x, dt_spi)
        print(f"{backend:>6}: stochastic solver {steps / dt:12.0f} steps/s "
              f"({dt:6.2f}s)   prox iteration {steps / dt_spi:12.0f} steps/s "
              f"({dt_spi:6.2f}s)   objective {objective(res.x, split_form):.8f}")

    if len(results) == 2:
        dx = np.linalg.norm(results["numba"][0] - results["numpy"][0])
        dspi = np.linalg.norm(results["numba"][2] - results["numpy"][2])
        speedup = results["numpy"][1] / results["numba"][1]
        print(f"agreement: |x_numba - x_numpy| = {dx:.2e} (solver), "
              f"{dspi:.2e} (prox iteration); solver speedup {speedup:.1f}x")


if __name__ == "__main__":
    main()
