"""Single-term stochastic variant: one uniformly sampled row per iteration.

Each step touches only row i(k) of z and refreshes the cached average with
an O(d) incremental update, so a full epoch of n steps costs what one
deterministic sweep does.  The step size stays constant; no decay schedule
is needed.  Runs re-validate the cached average against the exact chunked
reduction at every epoch boundary and count how often it had drifted.

Index streams come from the Philox 4x64 counter-based generator so they are
reproducible from the seed alone and portable: draw k is the k-th raw
64-bit word u_k of Philox keyed by the seed, and i(k) = u_k mod n.
"""

import math
import time
from dataclasses import dataclass

import numpy as np

from . import kernels
from .core import (NumericalError, ProblemSpec, ResidualReport, SolverState,
                   _require_finite, chunked_row_mean, initial_state,
                   objective, residual_map)
from .io import MetricsLog
from .ppg import RunResult, SolveOptions, resolve_alpha

__all__ = ["SamplerConfig", "IndexSampler", "SequenceSampler",
           "sppg_step", "sppg_run"]

DRIFT_TOL = 1e-9


@dataclass(frozen=True)
class SamplerConfig:
    """Seed plus sampling scheme; uniform i.i.d. is the only scheme."""

    seed: int
    scheme: str = "uniform-iid"

    def __post_init__(self):
        if self.scheme != "uniform-iid":
            raise ValueError("only the uniform-iid scheme is supported")

    def make(self, n: int) -> "IndexSampler":
        return IndexSampler(self.seed, n)


class IndexSampler:
    """Uniform i.i.d. stream over {0, ..., n-1}; same seed, same stream."""

    def __init__(self, seed: int, n: int):
        if n < 1:
            raise ValueError("n must be positive")
        self.seed = int(seed)
        self.n = int(n)
        self._bitgen = np.random.Philox(key=self.seed)

    def take(self, count: int) -> np.ndarray:
        """Next ``count`` indices; consecutive calls continue the stream."""
        raw = self._bitgen.random_raw(count)
        return (raw % np.uint64(self.n)).astype(np.int64)


class SequenceSampler:
    """Replays a fixed index sequence (paired-run and exhaustive tests)."""

    def __init__(self, indices):
        self._indices = np.asarray(indices, dtype=np.int64)
        self._pos = 0

    def take(self, count: int) -> np.ndarray:
        if self._pos + count > self._indices.size:
            raise ValueError("sampler sequence exhausted")
        out = self._indices[self._pos:self._pos + count]
        self._pos += count
        return out


def _advance_one(state: SolverState, problem: ProblemSpec, i: int):
    """Update row i and the cached average in place; O(d) plus one prox and
    one gradient.  Returns the prox-r point of the pre-step state."""
    alpha = state.alpha
    x_half = problem.r.prox(state.zbar, alpha)
    _require_finite(x_half, "prox of r")
    fi, gi = problem.f[i], problem.g[i]
    v = 2.0 * x_half - state.z[i]
    if not fi.is_zero:
        grad = fi.gradient(x_half)
        _require_finite(grad, "gradient of f", i)
        v -= alpha * grad
    xi = v if gi.is_zero else gi.prox(v, alpha)
    _require_finite(xi, "prox of g", i)
    delta = xi - x_half
    state.z[i] += delta
    state.zbar += delta * (1.0 / problem.n)
    state.k += 1
    return x_half


def sppg_step(state: SolverState, problem: ProblemSpec, sampler,
              compute_residual: bool = False):
    """Draw one index, advance in place, optionally report the residual.

    The residual needs a full O(nd) evaluation, so by default the report is
    None and runs only request it on their recording cadence.
    """
    report = None
    if compute_residual:
        p, x_half, _ = residual_map(state, problem)
        report = ResidualReport(
            k=state.k,
            residual_norm=float(np.linalg.norm(p)),
            objective=objective(x_half, problem),
            epoch=state.k / problem.n,
        )
    i = int(sampler.take(1)[0])
    _advance_one(state, problem, i)
    return state, report


def _record(state, problem, x_ref, t0) -> ResidualReport:
    p, x_half, _ = residual_map(state, problem)
    return ResidualReport(
        k=state.k,
        residual_norm=float(np.linalg.norm(p)),
        objective=objective(x_half, problem),
        dist_to_ref=None if x_ref is None else float(
            np.linalg.norm(x_half - x_ref)),
        wall_time_s=time.perf_counter() - t0,
        epoch=state.k / problem.n,
    )


def _resync(state: SolverState, problem: ProblemSpec) -> int:
    """Epoch-boundary cache validation; returns 1 when drift forced a
    rebuild."""
    exact = chunked_row_mean(state.z, problem.reduce_chunks)
    drift = float(np.linalg.norm(state.zbar - exact))
    if drift > DRIFT_TOL * (1.0 + float(np.linalg.norm(exact))):
        state.zbar = exact
        return 1
    return 0


def _hinge_fast_path(problem: ProblemSpec, opts: SolveOptions) -> bool:
    s = problem.structure
    return (isinstance(s, kernels.HingeStructure) and not s.folded
            and not opts.ergodic and problem.all_f_zero())


def sppg_run(problem: ProblemSpec, opts: SolveOptions, sampler,
             x_ref: np.ndarray | None = None,
             warm_start: np.ndarray | None = None) -> RunResult:
    """Run the stochastic solver for ``opts.max_iters`` single-term steps.

    One epoch is n steps.  The recording cadence defaults to once per
    epoch, which keeps the amortized per-step cost at O(d).  Problems
    carrying a hinge structure hint run through the compiled kernel when
    the numba backend is active; the update rule is identical.  With
    ``opts.ergodic`` the run also returns the running average of the
    prox-r points (accumulated per step, so the kernel path is skipped).
    """
    alpha = resolve_alpha(problem, opts.alpha)
    state = initial_state(problem, alpha, warm_start)
    rec = opts.record_every if opts.record_every else problem.n
    n = problem.n
    total = opts.max_iters
    indices = sampler.take(total)
    fast = _hinge_fast_path(problem, opts)
    resyncs = 0
    rows = []
    erg_sum = np.zeros(problem.dim) if opts.ergodic else None
    erg_count = 0
    converged = opts.tol <= 0
    scale = math.sqrt(problem.n * problem.dim)
    t0 = time.perf_counter()
    k = 0
    while True:
        if k % rec == 0 or k == total:
            report = _record(state, problem, x_ref, t0)
            rows.append(report)
            if opts.tol > 0 and report.residual_norm / scale <= opts.tol:
                converged = True
                break
        if k == total:
            break
        nxt = min(k + (rec - k % rec), k + (n - k % n) if k % n else k + n,
                  total)
        block = indices[k:nxt]
        if fast:
            bad = kernels.hinge_sppg_block(
                state.z, state.zbar, problem.structure, alpha, block)
            if bad >= 0:
                raise NumericalError(
                    f"non-finite values from prox of g (term {bad})")
            state.k += block.size
        else:
            for i in block:
                x_half = _advance_one(state, problem, int(i))
                if erg_sum is not None:
                    erg_sum += x_half
                    erg_count += 1
        k = nxt
        if k % n == 0:
            resyncs += _resync(state, problem)
    x_out = problem.r.prox(state.zbar, alpha)
    log = MetricsLog(rows=rows, metadata={
        "solver": "sppg", "alpha": alpha, "seed": getattr(sampler, "seed", None),
        "problem_kind": problem.kind, "n": problem.n, "dim": problem.dim,
        "resyncs": resyncs,
        "backend": kernels.resolved_backend() if fast else "numpy",
    })
    ergodic = None if erg_count == 0 else erg_sum / erg_count
    return RunResult(x=x_out, log=log, converged=converged, state=state,
                     ergodic=ergodic)
