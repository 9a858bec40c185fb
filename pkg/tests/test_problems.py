"""Application builders: recast identities, validation, and agreement with
independent references on each application."""

import numpy as np
import pytest

from conftest import make_quadratic_term
from proxsplit.core import SmoothFn, objective, verify_problem, zero_prox
from proxsplit.ppg import SolveOptions, ppg_run
from proxsplit.problems import (EdgeColoring, GroupPartition, SvmData,
                                build_fused_lasso, build_glm,
                                build_group_lasso, build_network_lasso,
                                build_svm, glm_family, greedy_edge_coloring,
                                recast_symmetric, recast_weighted,
                                staggered_partition)
from proxsplit.prox import soft_threshold_scalar


def _terms(rng, n_smooth, n_prox, d):
    from conftest import abs_prox_fn
    fs = [make_quadratic_term(rng.standard_normal(d),
                              float(rng.standard_normal()))
          for _ in range(n_smooth)]
    gs = [abs_prox_fn(float(rng.standard_normal())) for _ in range(n_prox)]
    return fs, gs


def _original_objective(r, fs, gs, x):
    val = r.value(x) if r.value else 0.0
    val += sum(f.value(x) for f in fs) / len(fs)
    val += sum(g.value(x) for g in gs) / len(gs)
    return val


class TestRecasts:
    def test_symmetric_counts(self, rng):
        fs, gs = _terms(rng, 1, 3, 2)
        assert recast_symmetric(zero_prox(), fs, gs, 2).n == 3
        fs, gs = _terms(rng, 2, 2, 2)
        assert recast_symmetric(zero_prox(), fs, gs, 2).n == 4

    def test_symmetric_preserves_objective(self, rng):
        fs, gs = _terms(rng, 3, 2, 4)
        problem = recast_symmetric(zero_prox(), fs, gs, 4)
        for _ in range(100):
            x = rng.standard_normal(4)
            want = _original_objective(zero_prox(), fs, gs, x)
            got = objective(x, problem)
            assert abs(got - want) <= 1e-10 * (1.0 + abs(want))

    def test_symmetric_cap(self, rng):
        fs, gs = _terms(rng, 2, 2, 1)
        with pytest.raises(ValueError, match="cap"):
            recast_symmetric(zero_prox(), fs, gs, 1, cap=3)

    def test_weighted_preserves_objective(self, rng):
        fs, gs = _terms(rng, 3, 2, 4)
        problem = recast_weighted(zero_prox(), fs, gs, 4)
        assert problem.n == 5
        for _ in range(100):
            x = rng.standard_normal(4)
            want = _original_objective(zero_prox(), fs, gs, x)
            got = objective(x, problem)
            assert abs(got - want) <= 1e-10 * (1.0 + abs(want))

    def test_weighted_equal_counts_weight_two(self, rng):
        fs, gs = _terms(rng, 2, 2, 3)
        problem = recast_weighted(zero_prox(), fs, gs, 3)
        x = rng.standard_normal(3)
        assert problem.f[0].value(x) == pytest.approx(2.0 * fs[0].value(x))

    def test_weighted_rescales_lipschitz(self, rng):
        fs, gs = _terms(rng, 2, 4, 3)
        problem = recast_weighted(zero_prox(), fs, gs, 3)
        assert problem.f[0].lipschitz == pytest.approx(3.0 * fs[0].lipschitz)

    def test_recast_solutions_agree(self, rng):
        fs, gs = _terms(rng, 2, 3, 2)
        sym = recast_symmetric(zero_prox(), fs, gs, 2)
        wgt = recast_weighted(zero_prox(), fs, gs, 2)
        opts = SolveOptions(max_iters=3000, record_every=3000)
        x_sym = ppg_run(sym, opts).x
        x_wgt = ppg_run(wgt, opts).x
        assert np.allclose(x_sym, x_wgt, atol=1e-4)


class TestGroupPartition:
    def test_staggered_matches_expected_shape(self):
        part = staggered_partition(42, 3)
        assert len(part.collections) == 3
        assert all(len(c) == 4 for c in part.collections)
        assert part.collections[0][0] == tuple(range(0, 9))
        assert part.collections[1][0] == tuple(range(3, 12))
        assert part.collections[2][3] == tuple(range(33, 42))
        # complement of the middle collection: three indices at each end
        assert part.complement(1, 42) == (0, 1, 2, 39, 40, 41)

    def test_overlap_within_collection_rejected(self):
        with pytest.raises(ValueError, match="overlap"):
            GroupPartition(collections=(((0, 1), (1, 2)),))

    def test_out_of_range_rejected(self):
        part = GroupPartition(collections=(((0, 5),),))
        with pytest.raises(ValueError, match="range"):
            part.validate_dim(3)


class TestGroupLasso:
    def test_lambda_zero_is_least_squares(self, rng):
        a_mat = rng.standard_normal((30, 8))
        b = rng.standard_normal(30)
        part = GroupPartition(collections=(((0, 1, 2), (3, 4)),))
        problem = build_group_lasso(a_mat, b, 0.0, part)
        res = ppg_run(problem, SolveOptions(alpha=1.0, max_iters=600,
                                            record_every=600))
        want = np.linalg.solve(a_mat.T @ a_mat, a_mat.T @ b)
        assert np.linalg.norm(res.x - want) <= 1e-8

    def test_single_group_matches_forward_backward_reference(self, rng):
        a_mat = rng.standard_normal((20, 5))
        b = rng.standard_normal(20)
        lam = 0.3
        part = GroupPartition(collections=((tuple(range(5)),),))
        problem = build_group_lasso(a_mat, b, lam, part)
        res = ppg_run(problem, SolveOptions(alpha=0.5, max_iters=4000,
                                            record_every=4000))
        # independent reference: forward-backward on the same objective
        lip = float(np.linalg.norm(a_mat.T @ a_mat, 2))
        step = 1.0 / lip
        x = np.zeros(5)
        for _ in range(20000):
            v = x - step * (a_mat.T @ (a_mat @ x - b))
            nrm = np.linalg.norm(v)
            x = np.maximum(1.0 - step * lam / nrm, 0.0) * v if nrm > 0 else v * 0
        assert np.linalg.norm(res.x - x) <= 1e-6

    def test_objective_at_solver_output_vs_reference(self, rng):
        from proxsplit.baselines import consensus_admm_run
        a_mat = rng.standard_normal((40, 12))
        b = rng.standard_normal(40)
        problem = build_group_lasso(a_mat, b, 0.05,
                                    staggered_partition(12, 2, group_size=4,
                                                        stagger=2))
        opts = SolveOptions(alpha=1.0, max_iters=1500, record_every=1500)
        x_split = ppg_run(problem, opts).x
        ref = consensus_admm_run(problem, SolveOptions(
            alpha=1.0, max_iters=15000, record_every=15000)).x
        num = objective(x_split, problem)
        den = objective(ref, problem)
        assert abs(num - den) <= 1e-6 * (1.0 + abs(den))

    def test_invariant_suite(self, rng):
        a_mat = rng.standard_normal((10, 6))
        b = rng.standard_normal(10)
        problem = build_group_lasso(a_mat, b, 0.2,
                                    staggered_partition(6, 2, group_size=2,
                                                        stagger=1))
        verify_problem(problem, rng, n_pairs=150)

    def test_cached_factorization_tracks_alpha(self, rng):
        # the quadratic prox cache is keyed by the step size: calling with a
        # new alpha must rebuild rather than reuse the stale factor
        from proxsplit.prox import CachedQuadraticProx, prox_quadratic
        a_mat = rng.standard_normal((9, 4))
        b = rng.standard_normal(9)
        problem = build_group_lasso(a_mat, b, 0.1,
                                    GroupPartition(collections=(((0, 1),),)),
                                    alpha=0.5)
        v = rng.standard_normal(4)
        for alpha in (0.5, 1.25, 0.5):
            got = problem.r.prox(v, alpha)
            want = prox_quadratic(
                CachedQuadraticProx.from_data(a_mat, b, alpha), v)
            assert np.allclose(got, want, atol=1e-12)


class TestSvm:
    def test_two_point_max_margin(self):
        data = SvmData(features=np.array([[2.0, 0.0], [-2.0, 0.0]]),
                       labels=np.array([1.0, -1.0]), lam=0.1)
        problem = build_svm(data)
        res = ppg_run(problem, SolveOptions(alpha=1.0, max_iters=3000,
                                            record_every=3000))
        margins = data.labels * (data.features @ res.x)
        assert np.all(margins >= 1.0 - 1e-3)
        assert np.allclose(res.x, [0.5, 0.0], atol=1e-3)

    def test_heavy_regularization_drives_to_zero(self, rng):
        feats = rng.standard_normal((20, 4))
        labels = np.sign(feats[:, 0])
        labels[labels == 0] = 1.0
        problem = build_svm(SvmData(feats, labels, lam=1e6))
        res = ppg_run(problem, SolveOptions(alpha=1e-6, max_iters=400,
                                            record_every=400))
        assert np.linalg.norm(res.x) <= 1e-3
        assert objective(res.x, problem) == pytest.approx(1.0, abs=1e-3)

    def test_paper_scale_shape_accepted(self):
        n, d = 2 ** 17, 512
        feats = np.ones((n, d))
        labels = np.ones(n)
        labels[::2] = -1.0
        problem = build_svm(SvmData(feats, labels, lam=0.1))
        assert problem.n == n and problem.dim == d
        del problem, feats

    def test_zero_row_rejected(self):
        feats = np.array([[1.0, 0.0], [0.0, 0.0]])
        with pytest.raises(ValueError, match="zero"):
            SvmData(feats, np.array([1.0, -1.0]), lam=0.1)

    def test_bad_labels_rejected(self):
        with pytest.raises(ValueError, match="labels"):
            SvmData(np.ones((2, 2)), np.array([1.0, 2.0]), lam=0.1)

    def test_batched_prox_matches_rowwise(self, rng):
        from conftest import tiny_svm
        problem = tiny_svm(rng, n=9, d=4)
        v = rng.standard_normal((9, 4))
        batched = problem.batched_g_prox(v, 0.7)
        for i, gi in enumerate(problem.g):
            assert np.allclose(batched[i], gi.prox(v[i], 0.7), atol=1e-13)

    def test_folded_form_same_objective(self, rng):
        from conftest import tiny_svm
        split_form = tiny_svm(rng, n=8, d=3)
        folded = build_svm(SvmData(split_form.structure.features,
                                   split_form.structure.labels, lam=0.1),
                           fold_ridge=True)
        assert folded.r.is_zero and folded.all_f_zero()
        for _ in range(20):
            x = rng.standard_normal(3)
            assert objective(x, folded) == pytest.approx(
                objective(x, split_form), rel=1e-12)

    def test_invariant_suite(self, rng):
        from conftest import tiny_svm
        verify_problem(tiny_svm(rng, n=5, d=3), rng, n_pairs=150)


class TestFusedLasso:
    def test_unbounded_eps_matches_plain_lasso(self, rng):
        a_mat = rng.standard_normal((15, 6))
        y = rng.standard_normal(15)
        lam = 0.1
        problem = build_fused_lasso(a_mat, y, lam, np.inf)
        res = ppg_run(problem, SolveOptions(max_iters=4000,
                                            record_every=4000))
        # reference: forward-backward on lam*||x||_1 + mean of the rows
        lip = float(np.linalg.norm(a_mat.T @ a_mat, 2)) / 15
        step = 1.0 / lip
        x = np.zeros(6)
        for _ in range(20000):
            grad = a_mat.T @ (a_mat @ x - y) / 15
            x = soft_threshold_scalar(x - step * grad, step * lam)
        assert np.linalg.norm(res.x - x) <= 1e-6

    def test_eps_zero_forces_equal_coordinates(self, rng):
        a_mat = rng.standard_normal((12, 5))
        y = rng.standard_normal(12)
        problem = build_fused_lasso(a_mat, y, 0.01, 0.0)
        res = ppg_run(problem, SolveOptions(max_iters=6000,
                                            record_every=6000))
        assert np.max(res.x) - np.min(res.x) <= 1e-6

    def test_pair_prox_matches_coupling_lemma(self, rng):
        from proxsplit.prox import prox_sum_coupling
        from proxsplit.core import ProxFn
        from proxsplit.prox import project_interval, Interval
        eps = 0.1
        problem = build_fused_lasso(np.ones((2, 4)), np.zeros(2), 0.0, eps)
        g_odd = problem.g[0]
        x0 = rng.standard_normal(4)
        got = g_odd.prox(x0, 0.8)
        proj = ProxFn(prox=lambda v, t: np.asarray(
            project_interval(v, Interval(-eps, eps))))
        for pair in ((0, 1), (2, 3)):
            block = np.stack([x0[pair[1]], x0[pair[0]]])[:, None]
            out = prox_sum_coupling(np.array([1.0, -1.0]), proj, block, 0.8)
            assert got[pair[1]] == pytest.approx(out[0, 0], abs=1e-12)
            assert got[pair[0]] == pytest.approx(out[1, 0], abs=1e-12)

    def test_term_layout(self, rng):
        problem = build_fused_lasso(rng.standard_normal((3, 4)),
                                    rng.standard_normal(3), 0.1, 0.2)
        assert problem.n == 6
        x = rng.standard_normal(4)
        assert problem.f[0].value(x) == problem.f[3].value(x)

    def test_invariant_suite(self, rng):
        problem = build_fused_lasso(rng.standard_normal((4, 5)),
                                    rng.standard_normal(4), 0.1, 0.3)
        verify_problem(problem, rng, n_pairs=150)


def _hypercube_q3():
    edges = []
    for u in range(8):
        for bit in range(3):
            v = u ^ (1 << bit)
            if u < v:
                edges.append((u, v))
    return edges


class TestEdgeColoring:
    def test_hypercube(self):
        edges = _hypercube_q3()
        coloring = greedy_edge_coloring(8, edges)
        coloring.verify_partition(edges)
        assert len(coloring.classes) <= 5

    def test_single_edge(self):
        coloring = greedy_edge_coloring(2, [(0, 1)])
        assert len(coloring.classes) == 1

    def test_star_needs_hub_degree_colors(self):
        k = 6
        edges = [(0, i) for i in range(1, k + 1)]
        coloring = greedy_edge_coloring(k + 1, edges)
        coloring.verify_partition(edges)
        assert len(coloring.classes) == k

    def test_self_loop_rejected(self):
        with pytest.raises(ValueError, match="self-loop"):
            greedy_edge_coloring(3, [(1, 1)])

    def test_shared_vertex_within_class_rejected(self):
        with pytest.raises(ValueError, match="share"):
            EdgeColoring(classes=(((0, 1), (1, 2)),))

    def test_partition_check_catches_missing_edge(self):
        coloring = greedy_edge_coloring(3, [(0, 1)])
        with pytest.raises(ValueError, match="cover"):
            coloring.verify_partition([(0, 1), (1, 2)])

    def test_color_count_bound(self, rng):
        # first-fit never needs more than 2*max_degree - 1 colors
        for trial in range(5):
            n_v = 20
            edges = [(u, v) for u in range(n_v) for v in range(u + 1, n_v)
                     if rng.random() < 0.3]
            if not edges:
                continue
            deg = np.zeros(n_v, dtype=int)
            for (u, v) in edges:
                deg[u] += 1
                deg[v] += 1
            coloring = greedy_edge_coloring(n_v, edges)
            coloring.verify_partition(edges)
            assert len(coloring.classes) <= 2 * deg.max() - 1

    def test_builder_rejects_stale_coloring(self, rng):
        losses = [_pull(rng.standard_normal(1)) for _ in range(3)]
        stale = greedy_edge_coloring(3, [(0, 1)])
        with pytest.raises(ValueError, match="cover"):
            build_network_lasso(3, [(0, 1), (1, 2)], losses, lambda1=0.1,
                                lambda2=0.1, block_dim=1, coloring=stale)


def _pull(target):
    target = np.asarray(target, dtype=float)
    return SmoothFn(value=lambda x: 0.5 * float(np.sum((x - target) ** 2)),
                    gradient=lambda x: x - target, lipschitz=1.0)


class TestNetworkLasso:
    def test_zero_coupling_decouples(self, rng):
        targets = rng.standard_normal((3, 2))
        losses = [_pull(t) for t in targets]
        problem = build_network_lasso(3, [(0, 1), (1, 2)], losses,
                                      lambda1=0.1, lambda2=0.0, block_dim=2)
        res = ppg_run(problem, SolveOptions(max_iters=2000,
                                            record_every=2000))
        for v in range(3):
            # per-vertex reference: soft threshold of the pull target
            want = soft_threshold_scalar(targets[v], 0.1)
            assert np.allclose(res.x[2 * v:2 * v + 2], want, atol=1e-6)

    def test_two_vertices_strong_coupling_agree(self):
        losses = [_pull([0.0]), _pull([1.0])]
        problem = build_network_lasso(2, [(0, 1)], losses, lambda1=0.01,
                                      lambda2=5.0, block_dim=1)
        res = ppg_run(problem, SolveOptions(max_iters=4000,
                                            record_every=4000))
        assert abs(res.x[0] - res.x[1]) <= 1e-4
        # brute-force grid over the two scalars
        grid = np.linspace(-0.5, 1.5, 801)
        xu, xv = np.meshgrid(grid, grid, indexing="ij")
        vals = (0.01 * (np.abs(xu) + np.abs(xv)) + 0.5 * xu ** 2
                + 0.5 * (xv - 1.0) ** 2 + 5.0 * np.abs(xu - xv))
        j = np.unravel_index(np.argmin(vals), vals.shape)
        best = np.array([grid[j[0]], grid[j[1]]])
        assert np.allclose(res.x, best, atol=5e-3)

    def test_identical_losses_all_equal(self, rng):
        target = rng.standard_normal(2)
        losses = [_pull(target) for _ in range(4)]
        problem = build_network_lasso(4, [(0, 1), (1, 2), (2, 3), (3, 0)],
                                      losses, lambda1=0.05, lambda2=0.7,
                                      block_dim=2)
        res = ppg_run(problem, SolveOptions(max_iters=3000,
                                            record_every=3000))
        blocks = res.x.reshape(4, 2)
        assert np.allclose(blocks, blocks[0][None, :], atol=1e-6)

    def test_invariant_suite(self, rng):
        losses = [_pull(rng.standard_normal(2)) for _ in range(3)]
        problem = build_network_lasso(3, [(0, 1), (1, 2)], losses,
                                      lambda1=0.1, lambda2=0.3, block_dim=2)
        verify_problem(problem, rng, n_pairs=100)


class TestGlm:
    def test_gaussian_full_rank_matches_least_squares(self, rng):
        x_mat = rng.standard_normal((40, 4))
        beta_true = rng.standard_normal(4)
        t_vec = x_mat @ beta_true + 0.05 * rng.standard_normal(40)
        problem = build_glm(x_mat, t_vec, glm_family("gaussian"))
        res = ppg_run(problem, SolveOptions(alpha=0.5, max_iters=4000,
                                            record_every=4000))
        want = np.linalg.solve(x_mat.T @ x_mat, x_mat.T @ t_vec)
        assert np.linalg.norm(res.x - want) <= 1e-6

    def test_single_term_minimizes_it(self, rng):
        x_mat = np.array([[1.0, 2.0]])
        t_vec = np.array([0.7])
        problem = build_glm(x_mat, t_vec, glm_family("gaussian"))
        res = ppg_run(problem, SolveOptions(alpha=1.0, max_iters=2000,
                                            record_every=2000))
        # any beta with x'beta = t minimizes the single Gaussian term
        assert float(x_mat[0] @ res.x) == pytest.approx(0.7, abs=1e-6)

    def test_logistic_separable_objective_decreases(self, rng):
        x_mat = np.array([[1.0], [2.0], [-1.0], [-2.0]])
        t_vec = np.array([1.0, 1.0, 0.0, 0.0])
        problem = build_glm(x_mat, t_vec, glm_family("logistic"))
        res = ppg_run(problem, SolveOptions(alpha=1.0, max_iters=60))
        objs = [r.objective for r in res.log.rows]
        assert all(b <= a + 1e-12 for a, b in zip(objs, objs[1:]))

    def test_invariant_suite(self, rng):
        x_mat = rng.standard_normal((5, 3))
        t_vec = rng.standard_normal(5)
        problem = build_glm(x_mat, t_vec, glm_family("gaussian"))
        verify_problem(problem, rng, n_pairs=100)

    def test_poisson_matches_smooth_reference(self, rng):
        import scipy.optimize
        x_mat = rng.standard_normal((30, 3)) / np.sqrt(3)
        beta_true = rng.standard_normal(3) * 0.5
        t_vec = rng.poisson(np.exp(x_mat @ beta_true)).astype(float)
        fam = glm_family("poisson")
        problem = build_glm(x_mat, t_vec, fam)
        res = ppg_run(problem, SolveOptions(alpha=0.5, max_iters=4000,
                                            record_every=4000))

        def smooth_obj(beta):
            eta = x_mat @ beta
            return float(np.mean(np.exp(eta) - t_vec * eta))

        ref = scipy.optimize.minimize(smooth_obj, np.zeros(3),
                                      method="BFGS", tol=1e-12)
        assert np.linalg.norm(res.x - ref.x) <= 1e-5

    def test_poisson_prox_survives_steep_inputs(self, rng):
        # exponential cumulants overflow above the root; the bracket walk
        # must still land on the solution
        from proxsplit.prox import prox_glm_1d
        from conftest import prox_objective
        fam = glm_family("poisson")
        xi = np.array([20.0, -5.0])
        x0 = np.array([40.0, 1.0])  # s0 = 795: exp overflows immediately
        out = prox_glm_1d(x0, xi, 2.0, fam, 1.0)
        assert np.all(np.isfinite(out))

        def g_val(beta):
            s = float(xi @ beta)
            return fam.value(s) - 2.0 * s

        base = prox_objective(g_val, out, x0, 1.0)
        direction = xi / np.linalg.norm(xi)
        for step in (-1e-5, 1e-5):
            assert base <= prox_objective(g_val, out + step * direction,
                                          x0, 1.0) + 1e-9
