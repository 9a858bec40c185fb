"""Command-line front end: generate datasets, solve, compare solvers.

Subcommands
-----------
gen      write a synthetic dataset and its problem description JSON
solve    run one solver on a problem description and emit a metrics CSV
compare  run several configurations on the same problem and merge curves

A problem description is a JSON object ``{"kind", "dim", "params", "files"}``
with data file paths relative to the JSON's directory.  A run configuration
is a JSON object with the same field names as the solve flags; flags given
on the command line override the file.  Exit codes: 0 success, 1 error,
2 iteration budget exhausted before the tolerance.

Every run is reproducible from (config, seed): metrics files are written
without wall-clock columns unless --timing is given, and all reductions are
deterministic at any --threads setting (default thread count comes from
PROXSPLIT_THREADS).
"""

import argparse
import json
import os
import sys
from dataclasses import dataclass, fields

import numpy as np

from . import baselines, io, ppg, problems, sppg
from .core import ProblemSpec, SmoothFn, objective

GEN_KINDS = ("group-lasso", "svm", "fused-lasso", "network-lasso", "glm")
ALGOS = ("ppg", "sppg", "prox-grad", "admm", "spi", "finito")


@dataclass
class RunConfig:
    """One solver invocation; JSON-serializable, flags override fields."""

    problem: str = ""
    algo: str = "ppg"
    alpha: float | None = None
    tol: float = 0.0
    max_iters: int = 1000
    seed: int = 0
    threads: int = 0
    record_every: int | None = None
    ergodic: bool = False
    timing: bool = False
    spi_c: float | None = None
    metrics_out: str = "metrics.csv"
    seeds: list | None = None  # compare-only: aggregate these seeds


def _config_from(path: str | None, args) -> RunConfig:
    cfg = RunConfig()
    if path:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
        known = {f.name for f in fields(RunConfig)}
        for key, val in raw.items():
            if key not in known:
                raise ValueError(f"unknown config field {key!r}")
            setattr(cfg, key, val)
    for f in fields(RunConfig):
        val = getattr(args, f.name.replace("-", "_"), None)
        if val is not None:
            setattr(cfg, f.name, val)
    if cfg.algo not in ALGOS:
        raise ValueError(f"algo must be one of {ALGOS}")
    if not cfg.problem:
        raise ValueError("a problem description file is required")
    return cfg


# -- problem descriptions ------------------------------------------------------

def load_problem(path: str, algo: str = "ppg") -> ProblemSpec:
    """Build the ProblemSpec a description file denotes.

    The SVM kind is built in its prox-only form (ridge folded into every
    term) when the target algorithm requires a zero global term.
    """
    with open(path, "r", encoding="utf-8") as fh:
        desc = json.load(fh)
    base = os.path.dirname(os.path.abspath(path))
    files = {k: os.path.join(base, v) for k, v in desc.get("files", {}).items()}
    params = desc.get("params", {})
    kind = desc.get("kind")
    if kind == "group-lasso":
        a_mat = io.read_dense_csv(files["A"])
        b = io.read_dense_csv(files["b"]).ravel()
        part = problems.GroupPartition(collections=tuple(
            tuple(tuple(g) for g in coll) for coll in params["groups"]))
        return problems.build_group_lasso(a_mat, b, params["lambda1"], part)
    if kind == "svm":
        feats, labels = io.read_libsvm(files["data"], dim=params.get("dim"))
        data = problems.SvmData(features=feats, labels=labels,
                                lam=params["lam"])
        return problems.build_svm(data, fold_ridge=(algo == "spi"))
    if kind == "fused-lasso":
        a_mat = io.read_dense_csv(files["A"])
        y = io.read_dense_csv(files["y"]).ravel()
        return problems.build_fused_lasso(a_mat, y, params["lam"],
                                          params["eps"])
    if kind == "network-lasso":
        theta = np.asarray(params["theta"], dtype=float)
        block = theta.shape[1]
        losses = tuple(_quadratic_pull(theta[v]) for v in range(theta.shape[0]))
        return problems.build_network_lasso(
            n_vertices=theta.shape[0], edges=params["edges"], losses=losses,
            lambda1=params["lambda1"], lambda2=params["lambda2"],
            block_dim=block)
    if kind == "glm":
        x_mat = io.read_dense_csv(files["X"])
        t_vec = io.read_dense_csv(files["T"]).ravel()
        return problems.build_glm(x_mat, t_vec,
                                  problems.glm_family(params["family"]))
    raise ValueError(f"unknown problem kind {kind!r}")


def _quadratic_pull(target: np.ndarray) -> SmoothFn:
    target = np.asarray(target, dtype=float)
    return SmoothFn(value=lambda x: 0.5 * float(np.sum((x - target) ** 2)),
                    gradient=lambda x: x - target, lipschitz=1.0)


def _check_compat(problem: ProblemSpec, algo: str):
    if algo == "prox-grad" and not problem.all_g_zero():
        raise ValueError("prox-grad cannot run: the problem carries "
                         "per-term nonsmooth functions")
    if algo == "admm" and not problem.all_f_zero():
        raise ValueError("admm cannot run: the problem carries smooth terms")
    if algo == "spi":
        if not problem.all_f_zero():
            raise ValueError("spi cannot run: the problem carries smooth "
                             "terms")
        if not problem.r.is_zero:
            raise ValueError("spi cannot run: the problem carries a global "
                             "term")
    if algo == "finito":
        if not problem.all_g_zero():
            raise ValueError("finito cannot run: the problem carries "
                             "per-term nonsmooth functions")
        if not problem.r.is_zero:
            raise ValueError("finito cannot run: the problem carries a "
                             "global term")


def _run(cfg: RunConfig, problem: ProblemSpec, seed: int | None = None,
         x_ref: np.ndarray | None = None) -> ppg.RunResult:
    opts = ppg.SolveOptions(alpha=cfg.alpha, max_iters=cfg.max_iters,
                            tol=cfg.tol, ergodic=cfg.ergodic,
                            record_every=cfg.record_every,
                            threads=cfg.threads)
    seed = cfg.seed if seed is None else seed
    if cfg.algo == "ppg":
        return ppg.ppg_run(problem, opts, x_ref=x_ref)
    if cfg.algo == "sppg":
        sampler = sppg.IndexSampler(seed, problem.n)
        return sppg.sppg_run(problem, opts, sampler, x_ref=x_ref)
    if cfg.algo == "prox-grad":
        return baselines.proximal_gradient_run(problem, opts, x_ref=x_ref)
    if cfg.algo == "admm":
        return baselines.consensus_admm_run(problem, opts, x_ref=x_ref)
    if cfg.algo == "spi":
        lip = problem.lipschitz_bound()
        c = cfg.spi_c if cfg.spi_c is not None else (
            1.0 / lip if lip > 0 else 1.0)
        sampler = sppg.IndexSampler(seed, problem.n)
        return baselines.stochastic_prox_iteration_run(
            problem, baselines.DiminishingStep(c), sampler, opts, x_ref=x_ref)
    if cfg.algo == "finito":
        sampler = sppg.IndexSampler(seed, problem.n)
        return baselines.finito_run(problem, sampler, opts, x_ref=x_ref)
    raise ValueError(f"unknown algo {cfg.algo!r}")


def _strip_timing(log: io.MetricsLog):
    for row in log.rows:
        row.wall_time_s = None


def _write_outputs(cfg: RunConfig, result: ppg.RunResult):
    if not cfg.timing:
        _strip_timing(result.log)
    io.write_metrics_csv(result.log, cfg.metrics_out)
    meta = {
        "solver": cfg.algo,
        "seed": cfg.seed,
        "alpha": result.log.metadata.get("alpha", cfg.alpha),
        "problem_kind": result.log.metadata.get("problem_kind", ""),
        "revision": io.git_describe(),
        "resyncs": result.log.metadata.get("resyncs"),
    }
    with open(cfg.metrics_out + ".meta.json", "w", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_solve(args) -> int:
    cfg = _config_from(args.config, args)
    problem = load_problem(cfg.problem, cfg.algo)
    _check_compat(problem, cfg.algo)
    result = _run(cfg, problem)
    _write_outputs(cfg, result)
    final = result.log.rows[-1]
    obj = objective(result.x, problem)
    line = (f"algo={cfg.algo} iters={final.k} "
            f"objective={'n/a' if obj is None else format(obj, '.12g')} "
            f"residual={format(final.residual_norm, '.12g')} "
            f"converged={result.converged}")
    if result.ergodic is not None:
        erg_obj = objective(result.ergodic, problem)
        if erg_obj is not None:
            line += f" ergodic_objective={format(erg_obj, '.12g')}"
    print(line)
    return 0 if result.converged else 2


# -- compare -------------------------------------------------------------------

MERGED_HEADER = ("algo,k,epoch,residual_norm,objective,dist_to_ref,"
                 "residual_norm_sd,objective_sd,dist_to_ref_sd")


def _aggregate(logs):
    """Align multi-seed logs on k and average each numeric column."""
    ks = [r.k for r in logs[0].rows]
    for log in logs[1:]:
        if [r.k for r in log.rows] != ks:
            raise ValueError("seed runs recorded at different iterations")
    out = []
    for j, k in enumerate(ks):
        cols = {}
        for name in ("residual_norm", "objective", "dist_to_ref"):
            vals = [getattr(log.rows[j], name) for log in logs]
            if any(v is None for v in vals):
                cols[name] = (None, None)
            else:
                arr = np.asarray(vals, dtype=float)
                sd = float(arr.std(ddof=1)) if len(vals) > 1 else None
                cols[name] = (float(arr.mean()), sd)
        out.append((k, logs[0].rows[j].epoch, cols))
    return out


def _fmt_cell(v):
    return "" if v is None else format(float(v), ".17g")


def cmd_compare(args) -> int:
    cfgs = []
    for path in args.configs:
        ns = argparse.Namespace(**{f.name: None for f in fields(RunConfig)})
        cfgs.append(_config_from(path, ns))
    if len(cfgs) < 2:
        raise ValueError("compare needs at least two configurations")
    prob_paths = {os.path.realpath(c.problem) for c in cfgs}
    if len(prob_paths) != 1:
        raise ValueError("all configurations must reference the same "
                         "problem file")
    budget = max(c.max_iters for c in cfgs)
    ref_iters = args.ref_iters if args.ref_iters else 10 * budget
    ref_problem = load_problem(cfgs[0].problem, "ppg")
    ref = ppg.ppg_run(ref_problem, ppg.SolveOptions(max_iters=ref_iters,
                                                    record_every=ref_iters))
    x_star = ref.x
    lines = [MERGED_HEADER]
    seen = {}
    for cfg in cfgs:
        problem = load_problem(cfg.problem, cfg.algo)
        _check_compat(problem, cfg.algo)
        label = cfg.algo
        seen[label] = seen.get(label, 0) + 1
        if seen[label] > 1:
            label = f"{label}#{seen[label]}"
        seeds = cfg.seeds if cfg.seeds else [cfg.seed]
        logs = []
        for s in seeds:
            res = _run(cfg, problem, seed=s, x_ref=x_star)
            _strip_timing(res.log)
            logs.append(res.log)
        for k, epoch, cols in _aggregate(logs):
            (rn, rn_sd) = cols["residual_norm"]
            (ob, ob_sd) = cols["objective"]
            (dr, dr_sd) = cols["dist_to_ref"]
            lines.append(",".join([
                label, str(k), _fmt_cell(epoch), _fmt_cell(rn),
                _fmt_cell(ob), _fmt_cell(dr), _fmt_cell(rn_sd),
                _fmt_cell(ob_sd), _fmt_cell(dr_sd)]))
    with open(args.out, "w", encoding="utf-8", newline="") as fh:
        fh.write("\n".join(lines) + "\n")
    print(f"wrote {args.out} ({len(lines) - 1} rows, reference from "
          f"{ref_iters} iterations)")
    return 0


# -- dataset generation ---------------------------------------------------------
#
# Recipes (all deterministic in --seed):
#   group-lasso    A ~ N(0,1)^(m x d); planted x with a sparse support of
#                  ~10% coordinates, N(0,1) values; b = A x + 0.1 N(0,1);
#                  staggered overlapping groups of 9 shifted by 3.
#   svm            rows a_i = N(0,1)^d + margin*y_i*u shifted along a unit
#                  separator u, then normalized to unit length; labels
#                  flipped w.p. --flip afterwards.
#   fused-lasso    x alternates zero stretches and plateaus reached by
#                  +/- eps ramps; A ~ N(0,1)^(n x d); y = A x + 0.05 N(0,1).
#   network-lasso  G(V, p) random graph; two vertex communities with
#                  distinct d-vector targets; quadratic pull losses.
#   glm            X ~ N(0,1)/sqrt(d); responses drawn from the family's
#                  model at a planted coefficient vector.


def _write_csv_matrix(path, mat):
    mat = np.atleast_2d(np.asarray(mat, dtype=float))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row in mat:
            fh.write(",".join(format(v, ".17g") for v in row) + "\n")


def _write_libsvm(path, feats, labels):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        for row, lab in zip(feats, labels):
            cells = [format(lab, ".0f" if lab == int(lab) else ".17g")]
            cells += [f"{j + 1}:{format(v, '.17g')}"
                      for j, v in enumerate(row) if v != 0.0]
            fh.write(" ".join(cells) + "\n")


def _write_problem_json(out_dir, desc):
    path = os.path.join(out_dir, "problem.json")
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(desc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    return path


def cmd_gen(args) -> int:
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    kind = args.kind
    if kind == "group-lasso":
        m, d, n = args.m, args.d, args.n
        a_mat = rng.standard_normal((m, d))
        support = rng.permutation(d)[:max(1, d // 10)]
        x_true = np.zeros(d)
        x_true[support] = rng.standard_normal(support.size)
        b = a_mat @ x_true + 0.1 * rng.standard_normal(m)
        part = problems.staggered_partition(d, n)
        _write_csv_matrix(os.path.join(args.out, "A.csv"), a_mat)
        _write_csv_matrix(os.path.join(args.out, "b.csv"), b[:, None])
        _write_problem_json(args.out, {
            "kind": kind, "dim": d,
            "files": {"A": "A.csv", "b": "b.csv"},
            "params": {"lambda1": args.lambda1,
                       "groups": [[list(g) for g in coll]
                                  for coll in part.collections]},
            "seed": args.seed})
    elif kind == "svm":
        n, d = args.n, args.d
        u = rng.standard_normal(d)
        u /= np.linalg.norm(u)
        labels = np.where(rng.random(n) < 0.5, 1.0, -1.0)
        feats = rng.standard_normal((n, d)) \
            + args.margin * labels[:, None] * u[None, :]
        feats /= np.linalg.norm(feats, axis=1, keepdims=True)
        flips = rng.random(n) < args.flip
        labels[flips] *= -1.0
        _write_libsvm(os.path.join(args.out, "data.libsvm"), feats, labels)
        _write_problem_json(args.out, {
            "kind": kind, "dim": d,
            "files": {"data": "data.libsvm"},
            "params": {"lam": args.lam, "dim": d},
            "seed": args.seed})
    elif kind == "fused-lasso":
        n, d = args.n, args.d
        eps = args.eps
        x_true = np.zeros(d)
        level = 0.0
        j = 0
        while j < d:
            stretch = int(rng.integers(3, max(4, d // 4)))
            target = float(rng.choice([0.0, 0.5, 1.0, -0.5]))
            for _ in range(stretch):
                if j >= d:
                    break
                level += np.clip(target - level, -eps, eps)
                x_true[j] = level
                j += 1
        a_mat = rng.standard_normal((n, d))
        y = a_mat @ x_true + 0.05 * rng.standard_normal(n)
        _write_csv_matrix(os.path.join(args.out, "A.csv"), a_mat)
        _write_csv_matrix(os.path.join(args.out, "y.csv"), y[:, None])
        _write_problem_json(args.out, {
            "kind": kind, "dim": d,
            "files": {"A": "A.csv", "y": "y.csv"},
            "params": {"lam": args.lam, "eps": eps},
            "seed": args.seed})
    elif kind == "network-lasso":
        v, block = args.vertices, args.d
        edges = [(u, w) for u in range(v) for w in range(u + 1, v)
                 if rng.random() < args.edge_prob]
        if not edges:
            edges = [(0, 1 % v)]
        centers = np.stack([rng.standard_normal(block),
                            rng.standard_normal(block) + 2.0])
        theta = np.array([centers[0] if u < v // 2 else centers[1]
                          for u in range(v)])
        theta += 0.1 * rng.standard_normal(theta.shape)
        _write_problem_json(args.out, {
            "kind": kind, "dim": v * block,
            "files": {},
            "params": {"lambda1": args.lambda1, "lambda2": args.lambda2,
                       "edges": [list(e) for e in edges],
                       "theta": theta.tolist()},
            "seed": args.seed})
    elif kind == "glm":
        n, d = args.n, args.d
        x_mat = rng.standard_normal((n, d)) / np.sqrt(d)
        beta = rng.standard_normal(d)
        eta = x_mat @ beta
        if args.family == "gaussian":
            t_vec = eta + 0.1 * rng.standard_normal(n)
        elif args.family == "logistic":
            t_vec = (rng.random(n) < 1.0 / (1.0 + np.exp(-eta))).astype(float)
        elif args.family == "poisson":
            t_vec = rng.poisson(np.exp(np.clip(eta, -10, 3))).astype(float)
        else:
            raise ValueError(f"unknown family {args.family!r}")
        _write_csv_matrix(os.path.join(args.out, "X.csv"), x_mat)
        _write_csv_matrix(os.path.join(args.out, "T.csv"), t_vec[:, None])
        _write_problem_json(args.out, {
            "kind": kind, "dim": d,
            "files": {"X": "X.csv", "T": "T.csv"},
            "params": {"family": args.family},
            "seed": args.seed})
    else:
        raise ValueError(f"unknown kind {kind!r}")
    print(f"wrote {args.out}/problem.json")
    return 0


# -- argument parsing -----------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="proxsplit",
        description="Composite-sum convex solvers with prox-based splitting")
    sub = parser.add_subparsers(dest="command", required=True)

    g = sub.add_parser("gen", help="generate a synthetic problem")
    g.add_argument("kind", choices=GEN_KINDS)
    g.add_argument("--out", required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--m", type=int, default=300)
    g.add_argument("--n", type=int, default=3)
    g.add_argument("--d", type=int, default=42)
    g.add_argument("--lambda1", type=float, default=0.1)
    g.add_argument("--lambda2", type=float, default=0.5)
    g.add_argument("--lam", type=float, default=0.1)
    g.add_argument("--eps", type=float, default=0.1)
    g.add_argument("--flip", type=float, default=0.0)
    g.add_argument("--margin", type=float, default=1.0)
    g.add_argument("--vertices", type=int, default=8)
    g.add_argument("--edge-prob", dest="edge_prob", type=float, default=0.4)
    g.add_argument("--family", default="gaussian")
    g.set_defaults(func=cmd_gen)

    s = sub.add_parser("solve", help="run one solver")
    s.add_argument("--config", default=None,
                   help="run-configuration JSON; flags override its fields")
    s.add_argument("--problem", default=None)
    s.add_argument("--algo", default=None, choices=ALGOS)
    s.add_argument("--alpha", type=float, default=None)
    s.add_argument("--tol", type=float, default=None)
    s.add_argument("--max-iters", dest="max_iters", type=int, default=None)
    s.add_argument("--seed", type=int, default=None)
    s.add_argument("--threads", type=int, default=None)
    s.add_argument("--record-every", dest="record_every", type=int,
                   default=None)
    s.add_argument("--ergodic", action="store_const", const=True,
                   default=None)
    s.add_argument("--timing", action="store_const", const=True, default=None)
    s.add_argument("--spi-c", dest="spi_c", type=float, default=None)
    s.add_argument("--metrics", dest="metrics_out", default=None)
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("compare", help="run several configs, merge curves")
    c.add_argument("configs", nargs="+")
    c.add_argument("--out", required=True)
    c.add_argument("--ref-iters", dest="ref_iters", type=int, default=None)
    c.set_defaults(func=cmd_compare)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, TypeError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
