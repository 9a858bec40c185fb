"""Reference solvers used for reduction tests and experiment comparisons.

Each baseline validates that the problem actually lies in its class and
emits the same metrics schema as the main solvers so curves overlay
directly.  Where a baseline coincides with a reduction of the splitting
iteration, the arithmetic is kept in the same order (notably the fixed
chunked row mean) so paired runs agree to rounding.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (NumericalError, ProblemSpec, ResidualReport, SolverState,
                   _require_finite, chunked_row_mean, objective, residual_map)
from .io import MetricsLog
from .ppg import RunResult, SolveOptions, resolve_alpha

__all__ = ["DiminishingStep", "proximal_gradient_run", "consensus_admm_run",
           "stochastic_prox_iteration_run", "finito_run"]


@dataclass(frozen=True)
class DiminishingStep:
    """Step-size rule a_k = c / k; strictly decreasing to zero."""

    c: float

    def __post_init__(self):
        if not self.c > 0:
            raise ValueError("c must be positive")

    def at(self, k: int) -> float:
        return self.c / k


def proximal_gradient_run(problem: ProblemSpec, opts: SolveOptions,
                          x0: np.ndarray | None = None,
                          x_ref: np.ndarray | None = None) -> RunResult:
    """Forward-backward iteration x <- prox_r(mean_i(x - alpha*grad f_i(x))).

    Only valid when every per-term nonsmooth function is zero.  The forward
    steps are averaged with the same fixed-chunk reduction as the splitting
    solver, so on its domain the two produce matching iterates.
    """
    if not problem.all_g_zero():
        raise ValueError("proximal-gradient requires every per-term "
                         "nonsmooth function to be zero")
    alpha = resolve_alpha(problem, opts.alpha)
    x = problem.r.prox(np.zeros(problem.dim), alpha) if x0 is None \
        else np.array(x0, dtype=float, copy=True)
    rec = opts.record_every if opts.record_every else 1
    rows_buf = np.empty((problem.n, problem.dim))
    rows = []
    converged = opts.tol <= 0
    scale = math.sqrt(problem.dim)
    t0 = time.perf_counter()
    for k in range(opts.max_iters):
        for i, fi in enumerate(problem.f):
            if fi.is_zero:
                rows_buf[i] = x
            else:
                grad = fi.gradient(x)
                _require_finite(grad, "gradient of f", i)
                rows_buf[i] = x - alpha * grad
        x_next = problem.r.prox(
            chunked_row_mean(rows_buf, problem.reduce_chunks), alpha)
        _require_finite(x_next, "prox of r")
        resid = float(np.linalg.norm(x - x_next)) / alpha
        stopping = opts.tol > 0 and resid / scale <= opts.tol
        if k % rec == 0 or stopping or k == opts.max_iters - 1:
            rows.append(ResidualReport(
                k=k, residual_norm=resid, objective=objective(x, problem),
                dist_to_ref=None if x_ref is None else float(
                    np.linalg.norm(x - x_ref)),
                wall_time_s=time.perf_counter() - t0, epoch=float(k)))
        x = x_next
        if stopping:
            converged = True
            break
    state = SolverState(z=x[None, :].copy(), zbar=x.copy(), alpha=alpha,
                        k=opts.max_iters)
    log = MetricsLog(rows=rows, metadata={
        "solver": "prox-grad", "alpha": alpha, "problem_kind": problem.kind})
    return RunResult(x=x, log=log, converged=converged, state=state)


def consensus_admm_run(problem: ProblemSpec, opts: SolveOptions,
                       x_ref: np.ndarray | None = None) -> RunResult:
    """Consensus ADMM over per-term copies with the global term handled as
    an extra prox block.

    Requires every smooth term to be zero.  The penalty is chosen so both
    prox evaluations use step ``alpha``, matching the per-iteration cost of
    the splitting solver.
    """
    if not problem.all_f_zero():
        raise ValueError("consensus ADMM requires every smooth term "
                         "to be zero")
    alpha = opts.alpha if opts.alpha is not None else 1.0
    if not alpha > 0:
        raise ValueError("alpha must be positive")
    n, d = problem.n, problem.dim
    x_blocks = np.zeros((n, d))
    u = np.zeros((n, d))
    zc = problem.r.prox(np.zeros(d), alpha)
    rec = opts.record_every if opts.record_every else 1
    rows = []
    converged = opts.tol <= 0
    scale = math.sqrt(n * d)
    t0 = time.perf_counter()
    for k in range(opts.max_iters):
        for i, gi in enumerate(problem.g):
            v = zc - u[i]
            x_blocks[i] = v if gi.is_zero else gi.prox(v, alpha)
            _require_finite(x_blocks[i], "prox of g", i)
        zc = problem.r.prox(
            chunked_row_mean(x_blocks + u, problem.reduce_chunks), alpha)
        _require_finite(zc, "prox of r")
        u += x_blocks - zc
        resid = float(np.linalg.norm(x_blocks - zc[None, :])) / alpha
        stopping = opts.tol > 0 and resid / scale <= opts.tol
        if k % rec == 0 or stopping or k == opts.max_iters - 1:
            rows.append(ResidualReport(
                k=k, residual_norm=resid, objective=objective(zc, problem),
                dist_to_ref=None if x_ref is None else float(
                    np.linalg.norm(zc - x_ref)),
                wall_time_s=time.perf_counter() - t0, epoch=float(k)))
        if stopping:
            converged = True
            break
    state = SolverState(z=x_blocks + u, zbar=zc.copy(), alpha=alpha, k=opts.max_iters)
    log = MetricsLog(rows=rows, metadata={
        "solver": "admm", "alpha": alpha, "problem_kind": problem.kind})
    return RunResult(x=zc, log=log, converged=converged, state=state)


def stochastic_prox_iteration_run(problem: ProblemSpec, step: DiminishingStep,
                                  sampler, opts: SolveOptions,
                                  x0: np.ndarray | None = None,
                                  x_ref: np.ndarray | None = None) -> RunResult:
    """One prox of a sampled term per step with step sizes c/k.

    Requires a prox-only problem (every smooth term and the global term
    zero); the diminishing schedule is the defining feature, so a constant
    step configuration is rejected by type.
    """
    if not isinstance(step, DiminishingStep):
        raise TypeError("step must be a DiminishingStep (the diminishing "
                        "schedule is required; constant steps are the "
                        "splitting solvers' regime)")
    if not problem.all_f_zero():
        raise ValueError("stochastic proximal iteration requires every "
                         "smooth term to be zero")
    if not problem.r.is_zero:
        raise ValueError("stochastic proximal iteration requires the "
                         "global term to be zero")
    x = np.zeros(problem.dim) if x0 is None else np.array(x0, dtype=float,
                                                          copy=True)
    rec = opts.record_every if opts.record_every else problem.n
    total = opts.max_iters
    indices = sampler.take(total)
    s = problem.structure
    fast = isinstance(s, kernels.HingeStructure) and s.folded
    rows = []
    t0 = time.perf_counter()
    k = 0
    while True:
        if k % rec == 0 or k == total:
            ak = step.at(max(k, 1))
            rows.append(ResidualReport(
                k=k, residual_norm=_spi_residual(x, problem, ak),
                objective=objective(x, problem),
                dist_to_ref=None if x_ref is None else float(
                    np.linalg.norm(x - x_ref)),
                wall_time_s=time.perf_counter() - t0, epoch=k / problem.n))
        if k == total:
            break
        nxt = min(k + (rec - k % rec), total)
        block = indices[k:nxt]
        if fast:
            bad = kernels.hinge_spi_block(x, s, step.c, k, block)
            if bad >= 0:
                raise NumericalError(
                    f"non-finite values from prox of g (term {bad})")
        else:
            for t, i in enumerate(block):
                ak = step.at(k + t + 1)
                x = problem.g[int(i)].prox(x, ak)
                _require_finite(x, "prox of g", int(i))
        k = nxt
    state = SolverState(z=x[None, :].copy(), zbar=x.copy(), alpha=step.c, k=total)
    log = MetricsLog(rows=rows, metadata={
        "solver": "spi", "c": step.c, "seed": getattr(sampler, "seed", None),
        "problem_kind": problem.kind})
    return RunResult(x=x, log=log, converged=True, state=state)


def _spi_residual(x, problem, ak) -> float:
    """Mean prox-step displacement at the current point, scaled by the
    step; the natural stationarity surrogate for a prox-only problem."""
    s = problem.structure
    if isinstance(s, kernels.HingeStructure) and s.folded:
        shr = 1.0 / (1.0 + ak * s.ridge)
        tau = ak * shr
        xs = x * shr
        m = (1.0 - s.labels * (s.features @ xs)) / s.sqnorms
        beta = np.clip(m, 0.0, tau) * s.labels
        moved = xs[None, :] + beta[:, None] * s.features - x[None, :]
        return float(np.linalg.norm(moved)) / (ak * math.sqrt(problem.n))
    acc = 0.0
    for gi in problem.g:
        acc += float(np.linalg.norm(x - gi.prox(x, ak))) ** 2
    return math.sqrt(acc / problem.n) / ak


def finito_run(problem: ProblemSpec, sampler, opts: SolveOptions,
               x_ref: np.ndarray | None = None) -> RunResult:
    """Variance-reduced incremental gradient method with a constant step.

    Requires a smooth-only problem (every nonsmooth term zero).  Keeps one
    d-vector per term; each step refreshes the sampled term's vector at the
    current table average.  Serves as the independent oracle for the
    stochastic splitting solver's smooth-only reduction.
    """
    if not problem.all_g_zero():
        raise ValueError("finito requires every per-term nonsmooth "
                         "function to be zero")
    if not problem.r.is_zero:
        raise ValueError("finito requires the global term to be zero")
    alpha = resolve_alpha(problem, opts.alpha)
    n = problem.n
    z = np.zeros((n, problem.dim))
    w = chunked_row_mean(z, problem.reduce_chunks)
    rec = opts.record_every if opts.record_every else n
    total = opts.max_iters
    indices = sampler.take(total)
    rows = []
    t0 = time.perf_counter()
    for k in range(total + 1):
        if k % rec == 0 or k == total:
            state = SolverState(z=z, zbar=w, alpha=alpha, k=k)
            p, x_half, _ = residual_map(state, problem)
            rows.append(ResidualReport(
                k=k, residual_norm=float(np.linalg.norm(p)),
                objective=objective(x_half, problem),
                dist_to_ref=None if x_ref is None else float(
                    np.linalg.norm(x_half - x_ref)),
                wall_time_s=time.perf_counter() - t0, epoch=k / n))
        if k == total:
            break
        i = int(indices[k])
        phi = w.copy()
        grad = problem.f[i].gradient(phi)
        _require_finite(grad, "gradient of f", i)
        z_new = phi - alpha * grad
        w += (z_new - z[i]) * (1.0 / n)
        z[i] = z_new
    state = SolverState(z=z, zbar=w, alpha=alpha, k=total)
    log = MetricsLog(rows=rows, metadata={
        "solver": "finito", "alpha": alpha,
        "seed": getattr(sampler, "seed", None),
        "problem_kind": problem.kind})
    return RunResult(x=w.copy(), log=log, converged=True, state=state)
