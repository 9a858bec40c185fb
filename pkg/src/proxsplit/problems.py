"""Builders that recast applications into the composite-sum problem form.

Every builder returns an immutable :class:`~proxsplit.core.ProblemSpec`
whose handles pass the core invariant suite, plus whatever sum-recasting
utilities the application needs (term duplication for unequal counts, edge
coloring to decompose pairwise penalties into matchings).
"""

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import ProblemSpec, ProxFn, SmoothFn, scale_prox, scale_smooth, \
    zero_prox, zero_smooth
from .kernels import HingeStructure
from .prox import (CachedQuadraticProx, ScalarFn, prox_glm_1d, prox_hinge,
                   prox_quadratic, soft_threshold_scalar,
                   soft_threshold_vector)

__all__ = [
    "GroupPartition",
    "EdgeColoring",
    "SvmData",
    "staggered_partition",
    "recast_symmetric",
    "recast_weighted",
    "build_group_lasso",
    "build_svm",
    "build_fused_lasso",
    "greedy_edge_coloring",
    "build_network_lasso",
    "build_glm",
    "glm_family",
]

RECAST_CAP = 10 ** 6


# -- sum recasting ------------------------------------------------------------

def recast_symmetric(r: ProxFn, fs: Sequence[SmoothFn], gs: Sequence[ProxFn],
                     dim: int, cap: int = RECAST_CAP) -> ProblemSpec:
    """Pair every smooth term with every nonsmooth term: n*m terms.

    Term (i, j) carries (f_i, g_j), which preserves the objective exactly
    since each f_i appears m times out of n*m and vice versa.  Best when
    one of the counts is small; refuses to build more than ``cap`` terms.
    """
    n, m = len(fs), len(gs)
    if n * m > cap:
        raise ValueError(f"recast would create {n * m} terms (cap {cap})")
    f_terms = tuple(fs[i] for i in range(n) for _ in range(m))
    g_terms = tuple(gs[j] for _ in range(n) for j in range(m))
    return ProblemSpec(dim=dim, n=n * m, r=r, f=f_terms, g=g_terms,
                       kind="recast-symmetric")


def recast_weighted(r: ProxFn, fs: Sequence[SmoothFn], gs: Sequence[ProxFn],
                    dim: int) -> ProblemSpec:
    """Concatenate the two sums into n+m terms with compensating weights.

    Smooth terms are scaled by (m+n)/n and nonsmooth ones by (m+n)/m so the
    averaged objective is unchanged; Lipschitz bounds rescale linearly.
    """
    n, m = len(fs), len(gs)
    if n == 0 or m == 0:
        raise ValueError("both term lists must be nonempty")
    cf = (m + n) / n
    cg = (m + n) / m
    f_terms = tuple(scale_smooth(fn, cf) for fn in fs) + tuple(
        zero_smooth() for _ in range(m))
    g_terms = tuple(zero_prox() for _ in range(n)) + tuple(
        scale_prox(fn, cg) for fn in gs)
    return ProblemSpec(dim=dim, n=n + m, r=r, f=f_terms, g=g_terms,
                       kind="recast-weighted")


# -- overlapping group lasso ---------------------------------------------------

@dataclass(frozen=True)
class GroupPartition:
    """Index groups split into collections that are internally disjoint.

    ``collections[i]`` is a tuple of groups (tuples of 0-based indices);
    groups from different collections may overlap, groups within one
    collection may not.
    """

    collections: tuple

    def __post_init__(self):
        object.__setattr__(self, "collections", tuple(
            tuple(tuple(int(j) for j in grp) for grp in coll)
            for coll in self.collections))
        if not self.collections:
            raise ValueError("at least one collection required")
        for coll in self.collections:
            seen = set()
            for grp in coll:
                if not grp:
                    raise ValueError("empty group")
                gset = set(grp)
                if len(gset) != len(grp):
                    raise ValueError("duplicate index inside a group")
                if seen & gset:
                    raise ValueError("groups overlap within a collection")
                seen |= gset

    def validate_dim(self, dim: int):
        for coll in self.collections:
            for grp in coll:
                for j in grp:
                    if not 0 <= j < dim:
                        raise ValueError(f"group index {j} out of range")

    def complement(self, i: int, dim: int) -> tuple:
        """Indices of {0..dim-1} not covered by collection i."""
        covered = {j for grp in self.collections[i] for j in grp}
        return tuple(j for j in range(dim) if j not in covered)

    def all_groups(self) -> tuple:
        return tuple(grp for coll in self.collections for grp in coll)


def staggered_partition(dim: int, n_collections: int, group_size: int = 9,
                        stagger: int = 3) -> GroupPartition:
    """Overlapping runs of ``group_size`` indices; collection i shifts the
    grid by i*stagger, so groups within one collection stay disjoint."""
    colls = []
    for i in range(n_collections):
        start = i * stagger
        groups = []
        while start + group_size <= dim:
            groups.append(tuple(range(start, start + group_size)))
            start += group_size
        if not groups:
            raise ValueError("dim too small for the requested grouping")
        colls.append(tuple(groups))
    return GroupPartition(collections=tuple(colls))


class _LeastSquaresProx:
    """Prox of 0.5*||Ax - b||^2 via a cached factorization of the shifted
    normal matrix; rebuilt whenever the step size changes."""

    def __init__(self, a_mat, b, alpha=None):
        self.a_mat = np.asarray(a_mat, dtype=float)
        self.b = np.asarray(b, dtype=float)
        self._cache = None
        if alpha is not None:
            self._cache = CachedQuadraticProx.from_data(self.a_mat, self.b,
                                                        alpha)

    def __call__(self, x0, alpha):
        cache = self._cache
        if cache is None or cache.alpha != alpha:
            cache = CachedQuadraticProx.from_data(self.a_mat, self.b, alpha)
            self._cache = cache
        return prox_quadratic(cache, x0)


def build_group_lasso(a_mat: np.ndarray, b: np.ndarray, lambda1: float,
                      partition: GroupPartition,
                      alpha: float | None = None) -> ProblemSpec:
    """Overlapping group lasso 0.5*||Ax-b||^2 + lambda1 * sum_G ||x_G||_2.

    The quadratic becomes the global term (prox by cached factorization,
    pre-warmed for ``alpha`` when given), and collection i becomes one
    nonsmooth term applying blockwise norm shrinkage with weight
    n*lambda1 on its groups and the identity elsewhere.
    """
    a_mat = np.asarray(a_mat, dtype=float)
    b = np.asarray(b, dtype=float)
    m, d = a_mat.shape
    if b.shape != (m,):
        raise ValueError("b must have one entry per row of A")
    if lambda1 < 0:
        raise ValueError("lambda1 must be nonnegative")
    partition.validate_dim(d)
    n = len(partition.collections)
    lam2 = n * lambda1
    solve = _LeastSquaresProx(a_mat, b, alpha)
    r = ProxFn(prox=lambda x0, a: solve(x0, a),
               value=lambda x: 0.5 * float(np.sum((a_mat @ x - b) ** 2)))

    def make_g(groups):
        idx = [np.array(grp, dtype=int) for grp in groups]

        def prox(x0, a):
            out = np.array(x0, dtype=float, copy=True)
            for g in idx:
                out[g] = soft_threshold_vector(x0[g], a * lam2)
            return out

        def value(x):
            return lam2 * sum(float(np.linalg.norm(x[g])) for g in idx)

        return ProxFn(prox=prox, value=value)

    g_terms = tuple(make_g(coll) for coll in partition.collections)
    f_terms = tuple(zero_smooth() for _ in range(n))
    return ProblemSpec(dim=d, n=n, r=r, f=f_terms, g=g_terms,
                       kind="group-lasso")


# -- support vector machine ----------------------------------------------------

@dataclass(frozen=True)
class SvmData:
    """Feature rows, +/-1 labels, and the ridge weight."""

    features: np.ndarray
    labels: np.ndarray
    lam: float

    def __post_init__(self):
        feats = np.asarray(self.features, dtype=float)
        labels = np.asarray(self.labels, dtype=float)
        object.__setattr__(self, "features", feats)
        object.__setattr__(self, "labels", labels)
        if feats.ndim != 2 or labels.shape != (feats.shape[0],):
            raise ValueError("features must be (n, d) with one label per row")
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not np.all(np.abs(labels) == 1.0):
            raise ValueError("labels must be +1 or -1")
        if np.any(np.einsum("ij,ij->i", feats, feats) == 0.0):
            raise ValueError("zero feature row")


def build_svm(data: SvmData, fold_ridge: bool = False) -> ProblemSpec:
    """Hinge-loss classifier (lam/2)*||x||^2 + mean_i max(1 - y_i a_i'x, 0).

    Default form: the ridge is the global term (its prox is a uniform
    shrink) and each hinge row is one nonsmooth term with a closed-form
    prox.  ``fold_ridge=True`` instead folds the ridge into every term and
    leaves the global term zero, which is the prox-only form required by
    the diminishing-step baseline; both forms have identical objectives.
    """
    feats = data.features
    labels = data.labels
    lam = data.lam
    n, d = feats.shape
    sqnorms = np.einsum("ij,ij->i", feats, feats)

    def batched_objective(x):
        margins = np.maximum(1.0 - labels * (feats @ x), 0.0)
        return 0.5 * lam * float(x @ x) + float(margins.mean())

    if fold_ridge:
        def make_g(i):
            ai = feats[i]
            yi = labels[i]

            def prox(x0, a):
                shr = 1.0 / (1.0 + a * lam)
                return prox_hinge(x0 * shr, ai, yi, a * shr)

            def value(x):
                return (max(1.0 - yi * float(ai @ x), 0.0)
                        + 0.5 * lam * float(x @ x))

            return ProxFn(prox=prox, value=value)

        structure = HingeStructure(features=feats, labels=labels,
                                   sqnorms=sqnorms, ridge=lam, folded=True)
        return ProblemSpec(
            dim=d, n=n, r=zero_prox(),
            f=tuple(zero_smooth() for _ in range(n)),
            g=tuple(make_g(i) for i in range(n)),
            kind="svm", structure=structure,
            batched_objective=batched_objective)

    r = ProxFn(prox=lambda x0, a: np.asarray(x0, dtype=float)
               / (1.0 + a * lam),
               value=lambda x: 0.5 * lam * float(x @ x))

    def make_g(i):
        ai = feats[i]
        yi = labels[i]
        return ProxFn(prox=lambda x0, a: prox_hinge(x0, ai, yi, a),
                      value=lambda x: max(1.0 - yi * float(ai @ x), 0.0))

    def batched_g_prox(v, a):
        m = (1.0 - labels * np.einsum("ij,ij->i", feats, v)) / sqnorms
        beta = np.clip(m, 0.0, a) * labels
        return v + beta[:, None] * feats

    structure = HingeStructure(features=feats, labels=labels,
                               sqnorms=sqnorms, ridge=lam, folded=False)
    return ProblemSpec(
        dim=d, n=n, r=r,
        f=tuple(zero_smooth() for _ in range(n)),
        g=tuple(make_g(i) for i in range(n)),
        kind="svm", structure=structure, batched_g_prox=batched_g_prox,
        batched_objective=batched_objective)


# -- fused lasso ----------------------------------------------------------------

def _pair_constraint_prox(eps: float, start: int):
    """Prox of the indicator of |x_{j+1} - x_j| <= eps over the disjoint
    pairs starting at ``start``: project each pair's difference, keep its
    sum."""

    def prox(x0, a):
        out = np.array(x0, dtype=float, copy=True)
        d = out.shape[0]
        u = x0[start:d - 1:2]
        v = x0[start + 1:d:2]
        w = np.clip(v - u, -eps, eps)
        out[start:d - 1:2] = 0.5 * (u + v - w)
        out[start + 1:d:2] = 0.5 * (u + v + w)
        return out

    return prox


def _pair_constraint_value(eps: float, start: int, slack: float):
    def value(x):
        d = x.shape[0]
        diffs = x[start + 1:d:2] - x[start:d - 1:2]
        if np.all(np.abs(diffs) <= eps + slack):
            return 0.0
        return float("inf")

    return value


def build_fused_lasso(a_mat: np.ndarray, y: np.ndarray, lam: float,
                      eps: float) -> ProblemSpec:
    """Sparse regression with bounded jumps between neighboring coordinates.

    minimize lam*||x||_1 + mean_i 0.5*(a_i'x - y_i)^2
    subject to |x_{j+1} - x_j| <= eps for every j.

    The chain of difference constraints is not proximable as a whole, so it
    splits into the odd-pair and even-pair indicators, each a product of
    disjoint two-coordinate constraints with an exact prox.  Every data row
    appears in two terms (once with each indicator), which keeps the
    averaged loss equal to the original.  The indicator admits a relative
    slack of 1e-9 when reporting values so that prox outputs at the
    boundary do not read as infeasible.
    """
    a_mat = np.asarray(a_mat, dtype=float)
    y = np.asarray(y, dtype=float)
    n, d = a_mat.shape
    if eps < 0:
        raise ValueError("eps must be nonnegative")
    if lam < 0:
        raise ValueError("lam must be nonnegative")
    r = ProxFn(prox=lambda x0, a: soft_threshold_scalar(x0, a * lam),
               value=lambda x: lam * float(np.abs(x).sum()))

    def make_f(i):
        ai = a_mat[i]
        yi = y[i]
        return SmoothFn(
            value=lambda x: 0.5 * float(ai @ x - yi) ** 2,
            gradient=lambda x: (float(ai @ x) - yi) * ai,
            lipschitz=float(ai @ ai))

    slack = 1e-9 * (1.0 + (eps if np.isfinite(eps) else 0.0))
    g_odd = ProxFn(prox=_pair_constraint_prox(eps, 0),
                   value=_pair_constraint_value(eps, 0, slack))
    g_even = ProxFn(prox=_pair_constraint_prox(eps, 1),
                    value=_pair_constraint_value(eps, 1, slack))
    f_terms = tuple(make_f(i) for i in range(n)) * 2
    g_terms = (g_odd,) * n + (g_even,) * n
    return ProblemSpec(dim=d, n=2 * n, r=r, f=f_terms, g=g_terms,
                       kind="fused-lasso")


# -- network lasso ---------------------------------------------------------------

@dataclass(frozen=True)
class EdgeColoring:
    """Edge sets forming matchings: no two edges in a class share a vertex."""

    classes: tuple

    def __post_init__(self):
        object.__setattr__(self, "classes", tuple(
            tuple((int(u), int(v)) for (u, v) in cls) for cls in self.classes))
        for cls in self.classes:
            touched = set()
            for (u, v) in cls:
                if u == v:
                    raise ValueError("self-loop in coloring")
                if u in touched or v in touched:
                    raise ValueError("two edges of one color share a vertex")
                touched.update((u, v))

    def verify_partition(self, edges):
        """Check the classes partition the given edge set exactly."""
        norm = lambda e: (min(e), max(e))
        all_colored = [norm(e) for cls in self.classes for e in cls]
        if len(all_colored) != len(set(all_colored)):
            raise ValueError("an edge appears in two color classes")
        if set(all_colored) != {norm(e) for e in edges}:
            raise ValueError("color classes do not cover the edge set")


def greedy_edge_coloring(n_vertices: int, edges) -> EdgeColoring:
    """First-fit edge coloring: each edge takes the smallest color unused
    at both endpoints.  Uses at most 2*max_degree - 1 colors and is
    deterministic in the input edge order.  Self-loops are rejected."""
    incident = [set() for _ in range(n_vertices)]
    classes = []
    for (u, v) in edges:
        u, v = int(u), int(v)
        if u == v:
            raise ValueError(f"self-loop at vertex {u}")
        if not (0 <= u < n_vertices and 0 <= v < n_vertices):
            raise ValueError(f"edge ({u}, {v}) out of range")
        taken = incident[u] | incident[v]
        c = 0
        while c in taken:
            c += 1
        if c == len(classes):
            classes.append([])
        classes[c].append((u, v))
        incident[u].add(c)
        incident[v].add(c)
    return EdgeColoring(classes=tuple(tuple(cls) for cls in classes))


def build_network_lasso(n_vertices: int, edges, losses: Sequence[SmoothFn],
                        lambda1: float, lambda2: float, block_dim: int,
                        coloring: EdgeColoring | None = None) -> ProblemSpec:
    """Per-vertex estimation with sparsity and edgewise agreement penalties.

    minimize sum_v [lambda1*||x_v||_1 + loss_v(x_v)]
             + lambda2 * sum_{(u,v) in E} ||x_u - x_v||_2

    The variable is the stacked (|V|*block_dim)-vector.  Edges are split
    into matchings by color; color c contributes one term whose nonsmooth
    part couples disjoint vertex pairs (so its prox is exact: shrink each
    pair's difference, keep the sum) with weight C*lambda2, and whose
    smooth part is the full loss sum, so the 1/C average restores the
    original objective.
    """
    edges = [(int(u), int(v)) for (u, v) in edges]
    if coloring is None:
        coloring = greedy_edge_coloring(n_vertices, edges)
    coloring.verify_partition(edges)
    if len(losses) != n_vertices:
        raise ValueError("one loss per vertex required")
    n_colors = len(coloring.classes)
    lam3 = n_colors * lambda2
    dim = n_vertices * block_dim

    def blk(v):
        return slice(v * block_dim, (v + 1) * block_dim)

    total_loss = SmoothFn(
        value=lambda x: sum(losses[v].value(x[blk(v)])
                            for v in range(n_vertices)),
        gradient=lambda x: np.concatenate(
            [losses[v].gradient(x[blk(v)]) for v in range(n_vertices)]),
        lipschitz=max(l.lipschitz for l in losses))

    def make_g(cls):
        def prox(x0, a):
            out = np.array(x0, dtype=float, copy=True)
            for (u, v) in cls:
                xu, xv = x0[blk(u)], x0[blk(v)]
                w = soft_threshold_vector(xu - xv, 2.0 * a * lam3)
                out[blk(u)] = 0.5 * (xu + xv + w)
                out[blk(v)] = 0.5 * (xu + xv - w)
            return out

        def value(x):
            return lam3 * sum(
                float(np.linalg.norm(x[blk(u)] - x[blk(v)])) for (u, v) in cls)

        return ProxFn(prox=prox, value=value)

    r = ProxFn(prox=lambda x0, a: soft_threshold_scalar(x0, a * lambda1),
               value=lambda x: lambda1 * float(np.abs(x).sum()))
    return ProblemSpec(
        dim=dim, n=n_colors, r=r,
        f=tuple(total_loss for _ in range(n_colors)),
        g=tuple(make_g(cls) for cls in coloring.classes),
        kind="network-lasso")


# -- generalized linear models ----------------------------------------------------

def glm_family(name: str) -> ScalarFn:
    """Cumulant function of a one-parameter exponential family."""
    if name == "gaussian":
        return ScalarFn(value=lambda t: 0.5 * t * t, deriv=lambda t: t)
    if name == "logistic":
        return ScalarFn(value=lambda t: float(np.logaddexp(0.0, t)),
                        deriv=lambda t: 0.5 * (1.0 + np.tanh(0.5 * t)))
    if name == "poisson":
        return ScalarFn(value=lambda t: float(np.exp(t)),
                        deriv=lambda t: float(np.exp(t)))
    raise ValueError(f"unknown family {name!r}")


def build_glm(x_mat: np.ndarray, t_vec: np.ndarray,
              a1d: ScalarFn) -> ProblemSpec:
    """Maximum-likelihood fitting of a generalized linear model.

    minimize mean_i [A(x_i'b) - t_i * x_i'b] for the convex cumulant A.
    Every term is handled through its prox (the one-dimensional reduction
    along its own data row); there is no smooth or global part.
    """
    x_mat = np.asarray(x_mat, dtype=float)
    t_vec = np.asarray(t_vec, dtype=float)
    n, d = x_mat.shape
    if t_vec.shape != (n,):
        raise ValueError("one response per data row required")
    if a1d.deriv is None:
        raise ValueError("the cumulant must supply a derivative handle")

    def make_g(i):
        xi = x_mat[i]
        ti = t_vec[i]
        return ProxFn(
            prox=lambda x0, a: prox_glm_1d(x0, xi, ti, a1d, a),
            value=lambda beta: a1d.value(float(xi @ beta))
            - ti * float(xi @ beta))

    return ProblemSpec(
        dim=d, n=n, r=zero_prox(),
        f=tuple(zero_smooth() for _ in range(n)),
        g=tuple(make_g(i) for i in range(n)),
        kind="glm")
