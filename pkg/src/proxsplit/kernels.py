"""Accelerated inner loops for structured problems.

The stochastic solvers advance one term per step at O(d) cost, so runs at
realistic sizes execute hundreds of thousands of tiny updates; for problems
carrying a recognized structure hint these loops are compiled with numba.
The pure-numpy generic path remains the reference implementation and the
fallback.

Backend selection:
    PROXSPLIT_BACKEND=auto    use numba when importable (default)
    PROXSPLIT_BACKEND=numba   require numba, error if missing
    PROXSPLIT_BACKEND=numpy   force the generic numpy path

``set_backend`` overrides the environment for the current process (used by
tests and the benchmark).  Each backend is individually deterministic; the
two backends agree to floating-point rounding, not bitwise, because vector
dot products associate differently.
"""

import math
import os
from dataclasses import dataclass

import numpy as np

__all__ = ["HingeStructure", "resolved_backend", "set_backend", "numba_available"]

_VALID = ("auto", "numba", "numpy")
_override = None

try:
    from numba import njit

    _HAS_NUMBA = True
except ImportError:  # pragma: no cover - exercised only without numba
    _HAS_NUMBA = False

    def njit(*args, **kwargs):
        def wrap(fn):
            return fn
        return wrap if not (args and callable(args[0])) else args[0]


def numba_available() -> bool:
    return _HAS_NUMBA


def set_backend(name: str | None):
    """Process-wide backend override; None restores the environment choice."""
    global _override
    if name is not None and name not in _VALID:
        raise ValueError(f"backend must be one of {_VALID}")
    _override = name


def resolved_backend() -> str:
    """The backend in effect: 'numba' or 'numpy'."""
    choice = _override if _override is not None else os.environ.get(
        "PROXSPLIT_BACKEND", "auto")
    if choice not in _VALID:
        raise ValueError(
            f"PROXSPLIT_BACKEND must be one of {_VALID}, got {choice!r}")
    if choice == "numpy":
        return "numpy"
    if choice == "numba" and not _HAS_NUMBA:
        raise RuntimeError("PROXSPLIT_BACKEND=numba but numba is not importable")
    return "numba" if _HAS_NUMBA else "numpy"


@dataclass(frozen=True)
class HingeStructure:
    """Marks a problem as hinge-loss rows plus a ridge term.

    ``folded=False``: the ridge sits in the global term r (splitting-solver
    form).  ``folded=True``: the ridge is folded into each per-term function
    (prox-only form used by the stochastic proximal iteration baseline).
    ``sqnorms`` caches the squared row norms of ``features``.
    """

    features: np.ndarray
    labels: np.ndarray
    sqnorms: np.ndarray
    ridge: float
    folded: bool = False


@njit(cache=True)
def _hinge_sppg_block(z, zbar, feats, labels, sqnorms, ridge, alpha, idx):
    """Advance the single-term stochastic sweep over the given index block.

    Mutates z and zbar in place; returns the offending term index on a
    non-finite update, else -1.
    """
    n, d = z.shape
    inv_n = 1.0 / n
    shrink = 1.0 / (1.0 + alpha * ridge)
    for t in range(idx.shape[0]):
        i = idx[t]
        dot = 0.0
        for j in range(d):
            dot += feats[i, j] * (2.0 * (zbar[j] * shrink) - z[i, j])
        m = (1.0 - labels[i] * dot) / sqnorms[i]
        if not math.isfinite(m):
            return i
        if m < 0.0:
            m = 0.0
        elif m > alpha:
            m = alpha
        beta = m * labels[i]
        for j in range(d):
            x_half = zbar[j] * shrink
            delta = (2.0 * x_half - z[i, j] + beta * feats[i, j]) - x_half
            z[i, j] += delta
            zbar[j] += delta * inv_n
    return -1


def _hinge_sppg_block_numpy(z, zbar, feats, labels, sqnorms, ridge, alpha, idx):
    """Numpy twin of the compiled block; same update, vector ops per step."""
    n = z.shape[0]
    inv_n = 1.0 / n
    shrink = 1.0 / (1.0 + alpha * ridge)
    for i in idx:
        x_half = zbar * shrink
        u = 2.0 * x_half - z[i]
        m = (1.0 - labels[i] * float(feats[i] @ u)) / sqnorms[i]
        if not math.isfinite(m):
            return i
        beta = min(max(m, 0.0), alpha) * labels[i]
        delta = (u + beta * feats[i]) - x_half
        z[i] += delta
        zbar += delta * inv_n
    return -1


@njit(cache=True)
def _hinge_spi_block(x, feats, labels, sqnorms, ridge, c, k0, idx):
    """Diminishing-step proximal iteration on hinge-plus-ridge terms.

    Step sizes follow c/k with k continuing from k0; mutates x in place.
    """
    d = x.shape[0]
    for t in range(idx.shape[0]):
        i = idx[t]
        ak = c / (k0 + t + 1.0)
        shr = 1.0 / (1.0 + ak * ridge)
        tau = ak * shr
        dot = 0.0
        for j in range(d):
            dot += feats[i, j] * (x[j] * shr)
        m = (1.0 - labels[i] * dot) / sqnorms[i]
        if not math.isfinite(m):
            return i
        if m < 0.0:
            m = 0.0
        elif m > tau:
            m = tau
        beta = m * labels[i]
        for j in range(d):
            x[j] = x[j] * shr + beta * feats[i, j]
    return -1


def _hinge_spi_block_numpy(x, feats, labels, sqnorms, ridge, c, k0, idx):
    for t, i in enumerate(idx):
        ak = c / (k0 + t + 1.0)
        shr = 1.0 / (1.0 + ak * ridge)
        tau = ak * shr
        xs = x * shr
        m = (1.0 - labels[i] * float(feats[i] @ xs)) / sqnorms[i]
        if not math.isfinite(m):
            return i
        beta = min(max(m, 0.0), tau) * labels[i]
        x[:] = xs + beta * feats[i]
    return -1


def hinge_sppg_block(z, zbar, struct: HingeStructure, alpha, idx):
    fn = (_hinge_sppg_block if resolved_backend() == "numba"
          else _hinge_sppg_block_numpy)
    return fn(z, zbar, struct.features, struct.labels, struct.sqnorms,
              struct.ridge, alpha, idx)


def hinge_spi_block(x, struct: HingeStructure, c, k0, idx):
    fn = (_hinge_spi_block if resolved_backend() == "numba"
          else _hinge_spi_block_numpy)
    return fn(x, struct.features, struct.labels, struct.sqnorms,
              struct.ridge, c, k0, idx)
