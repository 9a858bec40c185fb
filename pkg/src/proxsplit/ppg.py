"""Deterministic three-step splitting solver with full per-iteration sweeps.

Each iteration evaluates the global prox at the averaged state, one prox and
one gradient per term, and advances every row of z; the average is then
rebuilt with the fixed-chunk reduction so logs are identical at any thread
count.  Only z is stored across iterations.
"""

import math
import os
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .core import (ProblemSpec, ResidualReport, SolverState, _require_finite,
                   _term_points, chunked_row_mean, initial_state, objective)
from .io import MetricsLog

__all__ = ["SolveOptions", "ErgodicState", "RunResult", "resolve_alpha",
           "ppg_step", "ppg_run"]


@dataclass
class SolveOptions:
    """Knobs shared by all solver runs.

    ``alpha=None`` selects 1/L from the problem's Lipschitz bound.  The run
    stops when the root-mean-square residual ||p(z)|| / sqrt(n*d) drops to
    ``tol`` (0 disables early stopping).  ``record_every=None`` uses the
    solver's natural cadence: every iteration for full sweeps, once per
    epoch for single-term sweeps.  ``threads=0`` reads PROXSPLIT_THREADS.
    """

    alpha: float | None = None
    max_iters: int = 1000
    tol: float = 0.0
    ergodic: bool = False
    record_every: int | None = None
    threads: int = 0


@dataclass
class ErgodicState:
    """Running sums for the averaged iterates (their objective gap decays
    at the faster 1/k rate)."""

    sum_x_half: np.ndarray
    sum_x: np.ndarray
    count: int = 0

    def accumulate(self, x_half, x_terms):
        self.sum_x_half += x_half
        self.sum_x += x_terms
        self.count += 1

    def average(self) -> np.ndarray:
        return self.sum_x_half / self.count

    def average_terms(self) -> np.ndarray:
        return self.sum_x / self.count


@dataclass
class RunResult:
    """Run output: the recovered point, its metrics, and the final state."""

    x: np.ndarray
    log: MetricsLog
    converged: bool
    state: SolverState
    ergodic: np.ndarray | None = None


def resolve_alpha(problem: ProblemSpec, alpha: float | None) -> float:
    """Validate or choose the step size against the gradient bound L.

    Defaults to 1/L.  Steps at or beyond 2/L are rejected; steps at or
    beyond 1.5/L only draw a warning (convergence is still guaranteed below
    2/L, the tighter constant is what the rate analysis uses).
    """
    lip = problem.lipschitz_bound()
    if alpha is None:
        if lip > 0:
            return 1.0 / lip
        warnings.warn("no Lipschitz bound available; defaulting alpha to 1.0")
        return 1.0
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    if lip > 0:
        if alpha >= 2.0 / lip:
            raise ValueError(
                f"alpha={alpha} is at or beyond 2/L={2.0 / lip}; divergent")
        if alpha >= 1.5 / lip:
            warnings.warn(
                f"alpha={alpha} exceeds 1.5/L={1.5 / lip}; outside the "
                "guaranteed step-size range")
    return float(alpha)


def resolve_threads(threads: int) -> int:
    if threads and threads > 0:
        return int(threads)
    env = os.environ.get("PROXSPLIT_THREADS", "")
    return max(1, int(env)) if env.isdigit() else 1


def _sweep(state: SolverState, problem: ProblemSpec, pool=None):
    """One full sweep: returns (x_half, x_terms) for the pre-step state and
    advances z and zbar in place.

    With a pool, rows are processed in the same fixed chunks used by the
    mean reduction and partial sums combine in chunk order, so the result
    is independent of the worker count.
    """
    alpha = state.alpha
    x_half = problem.r.prox(state.zbar, alpha)
    _require_finite(x_half, "prox of r")
    z = state.z
    n, d = z.shape
    if pool is None or problem.batched_g_prox is not None:
        x_terms = _term_points(x_half, z, problem, alpha)
        z += x_terms - x_half[None, :]
        state.zbar = chunked_row_mean(z, problem.reduce_chunks)
        state.k += 1
        return x_half, x_terms
    size = -(-n // problem.reduce_chunks)
    x_terms = np.empty_like(z)

    def run_chunk(c):
        lo, hi = c * size, min((c + 1) * size, n)
        for i in range(lo, hi):
            fi, gi = problem.f[i], problem.g[i]
            v = 2.0 * x_half - z[i]
            if not fi.is_zero:
                grad = fi.gradient(x_half)
                _require_finite(grad, "gradient of f", i)
                v -= alpha * grad
            xi = v if gi.is_zero else gi.prox(v, alpha)
            _require_finite(xi, "prox of g", i)
            x_terms[i] = xi
            z[i] += xi - x_half
        return z[lo:hi].sum(axis=0)

    chunks = range(problem.reduce_chunks)
    partials = list(pool.map(run_chunk, chunks))
    total = np.zeros(d)
    for part in partials:
        total += part
    state.zbar = total / n
    state.k += 1
    return x_half, x_terms


def _residual_from_sweep(x_half, x_terms, alpha) -> float:
    return float(np.linalg.norm(x_half[None, :] - x_terms)) / alpha


def ppg_step(state: SolverState, problem: ProblemSpec,
             opts: SolveOptions | None = None,
             x_ref: np.ndarray | None = None):
    """Advance one full iteration in place and report on the pre-step state.

    The report carries ||p(z^k)||_F, the objective at the prox-r point, and
    optionally the distance of that point to a reference solution.
    """
    threads = resolve_threads(opts.threads) if opts is not None else 1
    if threads > 1 and problem.batched_g_prox is None:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            x_half, x_terms = _sweep(state, problem, pool)
    else:
        x_half, x_terms = _sweep(state, problem)
    report = ResidualReport(
        k=state.k - 1,
        residual_norm=_residual_from_sweep(x_half, x_terms, state.alpha),
        objective=objective(x_half, problem),
        dist_to_ref=None if x_ref is None else float(
            np.linalg.norm(x_half - x_ref)),
        epoch=float(state.k - 1),
    )
    return state, report


def ppg_run(problem: ProblemSpec, opts: SolveOptions,
            warm_start: np.ndarray | None = None,
            x_ref: np.ndarray | None = None) -> RunResult:
    """Run the full-sweep solver until the tolerance or iteration budget.

    Returns the prox-r point of the final state, the metrics log, and (when
    requested) the ergodic average of the prox-r points.
    """
    alpha = resolve_alpha(problem, opts.alpha)
    state = initial_state(problem, alpha, warm_start)
    rec = opts.record_every if opts.record_every else 1
    threads = resolve_threads(opts.threads)
    erg = None
    if opts.ergodic:
        erg = ErgodicState(sum_x_half=np.zeros(problem.dim),
                           sum_x=np.zeros((problem.n, problem.dim)))
    rows = []
    converged = opts.tol <= 0
    scale = math.sqrt(problem.n * problem.dim)
    pool = None
    try:
        if threads > 1 and problem.batched_g_prox is None:
            pool = ThreadPoolExecutor(max_workers=threads)
        t0 = time.perf_counter()
        for _ in range(opts.max_iters):
            k = state.k
            x_half, x_terms = _sweep(state, problem, pool)
            resid = _residual_from_sweep(x_half, x_terms, alpha)
            if erg is not None:
                erg.accumulate(x_half, x_terms)
            stopping = opts.tol > 0 and resid / scale <= opts.tol
            if k % rec == 0 or stopping or state.k == opts.max_iters:
                rows.append(ResidualReport(
                    k=k,
                    residual_norm=resid,
                    objective=objective(x_half, problem),
                    dist_to_ref=None if x_ref is None else float(
                        np.linalg.norm(x_half - x_ref)),
                    wall_time_s=time.perf_counter() - t0,
                    epoch=float(k),
                ))
            if stopping:
                converged = True
                break
    finally:
        if pool is not None:
            pool.shutdown()
    x_out = problem.r.prox(state.zbar, alpha)
    log = MetricsLog(rows=rows, metadata={
        "solver": "ppg", "alpha": alpha, "problem_kind": problem.kind,
        "n": problem.n, "dim": problem.dim, "threads": threads,
    })
    return RunResult(x=x_out, log=log, converged=converged, state=state,
                     ergodic=None if erg is None else erg.average())
