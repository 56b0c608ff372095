"""One function per CLI task. Each returns a Report; cli.py writes it out."""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from ..constraints import GroupKnapsack, GroupStructure, PartitionMatroid, UniformMatroid
from ..gaussian import GaussianDensity, GaussianObjective
from ..models import (
    PccaModel,
    PpcaModel,
    RegressionModel,
    pcca_fit,
    ppca_em,
    project,
    select_groups_regression,
    truncate_fit,
)
from ..solvers import brute_force_max, greedy_matroid, greedy_multiview, greedy_partial_enum, solve
from .config import ConfigError, ExperimentConfig
from .matio import parse_groups, read_matrix, read_vector, write_groups, write_matrix
from .metrics import (
    build_spatial_precision,
    estimate_k_bayes_factor,
    metric_cross_variance,
    metric_r2,
    metric_support_auc,
    metric_variance_explained,
)
from .synth import TEST, TRAIN, VAL, gen_synthetic_regression, random_density, rng_stream

APPROX_UNIFORM = 1.0 - 1.0 / math.e
APPROX_PARTITION = 0.5
APPROX_KNAPSACK = 1.0 - 1.0 / math.e
RATIO_SLACK = 1e-9


@dataclass
class Report:
    result: dict = field(default_factory=dict)
    metrics: dict = field(default_factory=dict)
    curves_header: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    support_rows: list | None = None


def _trace_rows(sel):
    return [[i + 1, t.element, t.gain, t.value] for i, t in enumerate(sel.trace)]


def _trace_json(sel):
    return [{"element": t.element, "gain": t.gain, "objective": t.value} for t in sel.trace]


def _need(cfg: ExperimentConfig, key: str) -> str:
    if key not in cfg.inputs:
        raise ConfigError(f"task {cfg.task!r} needs inputs.{key}")
    return cfg.inputs[key]


def _prior_precision(cfg: ExperimentConfig, d: int):
    if "prior_precision" in cfg.inputs:
        return read_matrix(cfg.inputs["prior_precision"])
    if "adjacency" in cfg.inputs:
        edges = read_matrix(cfg.inputs["adjacency"]).astype(int)
        return build_spatial_precision([tuple(e) for e in edges], d, jitter=0.1)
    return None


# ------------------------------------------------------------------ project


def task_project(cfg: ExperimentConfig) -> Report:
    inp = cfg.inputs
    if "precision" in inp:
        density = GaussianDensity(read_matrix(inp["precision"]), read_vector(_need(cfg, "potential")))
    elif "mean" in inp and "covariance" in inp:
        density = GaussianDensity.from_moments(read_vector(inp["mean"]), read_matrix(inp["covariance"]))
    else:
        raise ConfigError("project needs inputs.precision + inputs.potential "
                          "or inputs.mean + inputs.covariance")
    d = density.dim
    groups = parse_groups(cfg.groups, d) if cfg.groups else None
    if cfg.caps is not None:
        if groups is None:
            raise ConfigError("--caps needs --groups to define the views")
        constraint = PartitionMatroid(groups.groups, cfg.caps)
        objective = GaussianObjective(density)
        kind = "partition"
    else:
        if cfg.budget is None:
            raise ConfigError("project needs --budget (or --caps)")
        if groups is not None:
            constraint = GroupKnapsack(groups, cfg.budget)
            objective = GaussianObjective(density, groups)
            kind = "knapsack"
        else:
            constraint = UniformMatroid(int(cfg.budget), d)
            objective = GaussianObjective(density)
            kind = "uniform"
    sel = solve(objective, constraint, m=cfg.m, lazy=cfg.lazy,
                compat_budget=cfg.compat_budget, workers=cfg.workers)
    support = objective.expand(list(sel.selected))
    _, mean = project(density, support)
    return Report(
        result={"constraint": kind, "selected": list(sel.selected),
                "support": support.tolist(), "objective": sel.objective_value,
                "trace": _trace_json(sel), "evaluations": sel.evaluations,
                "projected_mean": mean.tolist()},
        metrics={"objective": sel.objective_value, "support_size": int(support.size)},
        curves_header=["step", "element", "gain", "objective"],
        curves=_trace_rows(sel),
        support_rows=[[int(i), float(mean[i])] for i in support],
    )


# ------------------------------------------------------------------ synth


def task_synth(cfg: ExperimentConfig, out: Path) -> Report:
    ext = ".bin" if cfg.format == "bin" else ".csv"
    manifest = []
    rows = []
    for snr in sorted(cfg.snr_list, reverse=True):
        for rep in range(cfg.reps):
            data = gen_synthetic_regression(cfg.d, cfg.n, cfg.n_true_groups, snr, cfg.seed,
                                            group_size=cfg.group_size, rep=rep)
            rel = Path(f"snr_{snr:g}") / f"rep_{rep:02d}"
            write_dataset(out / rel, data, ext)
            manifest.append({"snr": snr, "rep": rep, "path": rel.as_posix()})
            rows.append([snr, rep, data.sigma2, float(data.beta @ data.beta)])
    with open(out / "manifest.json", "w") as fh:
        json.dump({"datasets": manifest, "format": cfg.format}, fh, indent=2, sort_keys=True)
    rows.sort(key=lambda r: (r[0], r[1]))
    return Report(result={"datasets": manifest},
                  metrics={"n_datasets": len(manifest)},
                  curves_header=["snr", "rep", "sigma2", "signal_variance"], curves=rows)


def write_dataset(path: Path, data, ext: str = ".csv") -> None:
    path.mkdir(parents=True, exist_ok=True)
    write_matrix(path / f"Z{ext}", data.Z)
    write_matrix(path / f"y{ext}", data.y)
    write_matrix(path / f"beta{ext}", data.beta)
    write_matrix(path / f"split{ext}", data.split.astype(float))
    write_groups(path / "groups.json", data.groups)
    with open(path / "meta.json", "w") as fh:
        json.dump({"sigma2": data.sigma2, "snr": data.snr, "true_groups": list(data.true_groups),
                   "ext": ext}, fh, indent=2, sort_keys=True)


def load_dataset(path: Path) -> dict:
    with open(path / "meta.json") as fh:
        meta = json.load(fh)
    ext = meta.get("ext", ".csv")
    return {
        "Z": read_matrix(path / f"Z{ext}"),
        "y": read_vector(path / f"y{ext}"),
        "beta": read_vector(path / f"beta{ext}"),
        "split": read_vector(path / f"split{ext}").astype(np.int64),
        "groups_path": str(path / "groups.json"),
        "meta": meta,
    }


# ------------------------------------------------------------------ regress


def _auto_sigma2(Z, y) -> float:
    n, d = Z.shape
    beta = np.linalg.solve(Z.T @ Z + np.eye(d), Z.T @ y)
    return max(float(np.sum((y - Z @ beta) ** 2)) / n, 1e-12)


def regression_pipeline(Z, y, split, groups: GroupStructure, budget, sigma2, beta=None,
                        enum_depth=3, compat_budget=False, bf_threshold=math.log(10.0),
                        workers=1, prior_precision=None) -> dict:
    """Fit on the training rows, truncate by Bayes factor, score on the test rows."""
    train = split == TRAIN
    test = split == TEST if np.any(split == TEST) else train
    val = split == VAL
    model = RegressionModel(Z[train], y[train], sigma2, groups, budget,
                            prior_precision=prior_precision)
    fit = select_groups_regression(model, enum_depth=enum_depth, compat_budget=compat_budget,
                                   workers=workers)
    k_hat = estimate_k_bayes_factor(fit.selection.gains, bf_threshold) if fit.selection.trace else 0
    final = truncate_fit(fit, groups, k_hat)
    out = {
        "selected_groups": list(final.selection.selected),
        "greedy_groups": list(fit.selection.selected),
        "order": list(fit.selection.order),
        "gains": [t.gain for t in fit.selection.trace],
        "k_groups": k_hat,
        "support": final.support.tolist(),
        "r2_test": metric_r2(y[test], final.predict(Z[test])),
        "r2_val": metric_r2(y[val], final.predict(Z[val])) if val.sum() > 1 else None,
        "sigma2": float(sigma2),
    }
    if beta is not None:
        truth = beta != 0
        scores = np.zeros(Z.shape[1])
        order = final.selection.order
        for pos, gid in enumerate(order):
            scores[list(groups.groups[gid])] = len(order) - pos
        out["support_auc"] = (metric_support_auc(truth, scores)
                              if 0 < truth.sum() < truth.size else None)
    # R^2 along the selection path, for the k-curve
    path = []
    for k in range(len(fit.selection.trace) + 1):
        part = truncate_fit(fit, groups, k)
        path.append(metric_r2(y[test], part.predict(Z[test])))
    out["r2_path"] = path
    return out


def _resolve_sigma2(cfg, meta, Z, y):
    if isinstance(cfg.sigma2, (int, float)):
        return float(cfg.sigma2)
    if cfg.sigma2 == "meta" and meta is not None and "sigma2" in meta:
        return float(meta["sigma2"])
    return _auto_sigma2(Z, y)


def task_regress(cfg: ExperimentConfig) -> Report:
    inp = cfg.inputs
    data_dir = Path(inp["data"]) if "data" in inp else None
    if data_dir is not None and (data_dir / "manifest.json").exists():
        with open(data_dir / "manifest.json") as fh:
            entries = json.load(fh)["datasets"]
        per = []
        for e in entries:
            ds = load_dataset(data_dir / e["path"])
            per.append({"snr": e["snr"], "rep": e["rep"], **_regress_one(cfg, ds)})
        by_snr: dict[float, list] = {}
        for p in per:
            by_snr.setdefault(p["snr"], []).append(p)
        rows = []
        for snr in sorted(by_snr):
            ps = by_snr[snr]
            auc = [p["support_auc"] for p in ps if p.get("support_auc") is not None]
            r2 = [p["r2_test"] for p in ps]
            rows.append([snr, float(np.mean(auc)) if auc else float("nan"),
                         float(np.std(auc)) if auc else float("nan"),
                         float(np.mean(r2)), float(np.std(r2)), len(ps)])
        summary = {f"{r[0]:g}": {"support_auc": r[1], "r2_test": r[3], "n": r[5]} for r in rows}
        return Report(result={"datasets": per}, metrics={"by_snr": summary},
                      curves_header=["snr", "support_auc_mean", "support_auc_std",
                                     "r2_test_mean", "r2_test_std", "n_datasets"],
                      curves=rows)
    if data_dir is not None:
        ds = load_dataset(data_dir)
    else:
        Z = read_matrix(_need(cfg, "Z"))
        y = read_vector(_need(cfg, "y"))
        ds = {"Z": Z, "y": y, "beta": None, "split": np.zeros(y.size, dtype=np.int64),
              "groups_path": None, "meta": None}
    one = _regress_one(cfg, ds)
    rows = [[k, one["r2_path"][k]] for k in range(len(one["r2_path"]))]
    metrics = {"r2_test": one["r2_test"], "k_groups": one["k_groups"]}
    if one.get("support_auc") is not None:
        metrics["support_auc"] = one["support_auc"]
    return Report(result=one, metrics=metrics, curves_header=["k_groups", "r2_test"],
                  curves=rows,
                  support_rows=[[i] for i in one["support"]])


def _regress_one(cfg, ds) -> dict:
    Z, y, split, meta = ds["Z"], ds["y"], ds["split"], ds["meta"]
    d = Z.shape[1]
    if cfg.groups:
        groups = parse_groups(cfg.groups, d)
    elif ds["groups_path"]:
        groups = parse_groups(ds["groups_path"], d)
    else:
        raise ConfigError("regress needs --groups")
    budget = cfg.budget
    if budget is None:
        if meta is None:
            raise ConfigError("regress needs --budget")
        budget = sum(groups.costs[g] for g in meta["true_groups"])
    train = split == TRAIN
    sigma2 = _resolve_sigma2(cfg, meta, Z[train], y[train])
    return regression_pipeline(Z, y, split, groups, budget, sigma2, beta=ds["beta"],
                               enum_depth=cfg.m, compat_budget=cfg.compat_budget,
                               bf_threshold=cfg.bf_threshold, workers=cfg.workers,
                               prior_precision=_prior_precision(cfg, d))


# ------------------------------------------------------------------ pca / cca


def pca_budget_curve(T, groups, budgets, prior_precision=None, enum_depth=3, lazy=False,
                     compat_budget=False, workers=1, max_iters=200, tol=1e-7) -> list:
    """Variance explained against budget for one centered data matrix, one fit per budget."""
    rows = []
    for k in sorted(budgets):
        fit = ppca_em(PpcaModel(T, groups, k, prior_precision=prior_precision,
                                enum_depth=enum_depth, compat_budget=compat_budget, lazy=lazy,
                                workers=workers), max_iters, tol)
        w = fit.factor
        ve = metric_variance_explained(T, w) if w is not None and np.any(w) else 0.0
        rows.append({"budget": k, "variance_explained": ve,
                     "support": [] if fit.q is None else fit.q.support.tolist(),
                     "free_energy": fit.trace[-1] if fit.trace else None,
                     "n_iter": fit.n_iter, "converged": fit.converged})
    return rows


def task_pca(cfg: ExperimentConfig) -> Report:
    T = read_matrix(_need(cfg, "T"))
    T = T - T.mean(axis=0)
    d = T.shape[1]
    groups = parse_groups(cfg.groups, d) if cfg.groups else None
    budgets = cfg.budgets if cfg.budgets else ([cfg.budget] if cfg.budget is not None else None)
    if budgets is None:
        raise ConfigError("pca needs --budget or budgets")
    rows = pca_budget_curve(T, groups, budgets, _prior_precision(cfg, d), cfg.m, cfg.lazy,
                            cfg.compat_budget, cfg.workers, cfg.max_iters, cfg.tol)
    return Report(result={"curve": rows},
                  metrics={"variance_explained": rows[-1]["variance_explained"]},
                  curves_header=["budget", "variance_explained", "support_size",
                                 "free_energy"],
                  curves=[[r["budget"], r["variance_explained"], len(r["support"]),
                           r["free_energy"]] for r in rows],
                  support_rows=[[i] for i in rows[-1]["support"]])


def task_cca(cfg: ExperimentConfig) -> Report:
    views = [read_matrix(p) for p in _need(cfg, "views")]
    views = [v - v.mean(axis=0) for v in views]
    if cfg.caps is None or len(cfg.caps) != len(views):
        raise ConfigError("cca needs one --caps entry per view")
    model = PccaModel(views, cfg.caps, per_view_noise=cfg.per_view_noise, lazy=cfg.lazy,
                      workers=cfg.workers)
    fit = pcca_fit(model, cfg.max_iters, cfg.tol)
    metrics = {"free_energy": fit.trace[-1] if fit.trace else None}
    if len(views) >= 2 and np.any(fit.weights[0]) and np.any(fit.weights[1]):
        X, Y, u, v = views[0], views[1], fit.weights[0], fit.weights[1]
        metrics["cross_variance"] = metric_cross_variance(X, Y, u, v)
        if cfg.paper_literal_metric:
            square = X.shape[0] == X.shape[1] and Y.shape[0] == Y.shape[1]
            metrics["cross_variance_literal"] = (
                metric_cross_variance(X, Y, u, v, paper_literal=True) if square else None)
    s2 = fit.fit.theta.sigma2
    result = {
        "supports": [s.tolist() for s in fit.supports],
        "weights": [w.tolist() for w in fit.weights],
        "x": fit.x.tolist(),
        "sigma2": s2 if isinstance(s2, float) else np.asarray(s2).tolist(),
        "n_iter": fit.fit.n_iter,
        "converged": fit.fit.converged,
    }
    support_rows = [[v, int(i)] for v, s in enumerate(fit.supports) for i in s]
    return Report(result=result, metrics=metrics,
                  curves_header=["half_step", "free_energy"],
                  curves=[[i, f] for i, f in enumerate(fit.trace)],
                  support_rows=support_rows)


# ------------------------------------------------------------------ bench


def _random_groups(rng, d):
    cuts = np.sort(rng.choice(np.arange(1, d), size=min(5, d - 1), replace=False))
    bounds = [0, *cuts.tolist(), d]
    return GroupStructure(d, tuple(tuple(range(a, b)) for a, b in zip(bounds, bounds[1:])))


def bench_instance(seed: int, i: int, d: int, lazy=False, m=3, compat_budget=False, workers=1):
    """Greedy against brute force on one random instance, all three constraint kinds."""
    rng = rng_stream(seed, i)
    density = random_density(rng, d)
    obj = GaussianObjective(density)
    rows = []

    k = int(rng.integers(1, d))
    c = UniformMatroid(k, d)
    g = greedy_matroid(obj, obj.ground, c, lazy=lazy, workers=workers)
    opt = brute_force_max(obj, obj.ground, c)
    rows.append(("uniform", g.objective_value, opt.objective_value, APPROX_UNIFORM))

    half = d // 2
    views = [tuple(range(half)), tuple(range(half, d))]
    caps = [int(rng.integers(0, half + 1)), int(rng.integers(0, d - half + 1))]
    c = PartitionMatroid(views, caps)
    g1 = greedy_matroid(obj, obj.ground, c, lazy=lazy, workers=workers)
    g2 = greedy_multiview(obj, views, caps, lazy=lazy, workers=workers)
    if g1.selected != g2.selected:
        raise RuntimeError(f"instance {i}: matroid and multiview greedy disagree")
    opt = brute_force_max(obj, obj.ground, c)
    rows.append(("partition", g1.objective_value, opt.objective_value, APPROX_PARTITION))

    groups = _random_groups(rng, d)
    budget = int(rng.integers(1, d))
    gobj = GaussianObjective(density, groups)
    c = GroupKnapsack(groups, budget)
    g = greedy_partial_enum(gobj, groups, budget, m=m, compat_budget=compat_budget,
                            workers=workers)
    opt = brute_force_max(gobj, gobj.ground, c)
    rows.append(("knapsack", g.objective_value, opt.objective_value, APPROX_KNAPSACK))
    return rows


def task_bench(cfg: ExperimentConfig) -> Report:
    rows = []
    for i in range(cfg.bench_instances):
        for kind, gv, ov, bound in bench_instance(cfg.seed, i, cfg.bench_d, cfg.lazy, cfg.m,
                                                  cfg.compat_budget, cfg.workers):
            ratio = gv / ov if ov > 0 else 1.0
            rows.append([i, kind, gv, ov, ratio, bound, int(ratio >= bound - RATIO_SLACK)])
    summary = {}
    for kind in ("uniform", "partition", "knapsack"):
        rs = [r for r in rows if r[1] == kind]
        summary[kind] = {"min_ratio": min(r[4] for r in rs),
                         "mean_ratio": float(np.mean([r[4] for r in rs])),
                         "violations": sum(1 - r[6] for r in rs), "n": len(rs)}
    return Report(result={"instances": cfg.bench_instances, "d": cfg.bench_d},
                  metrics=summary,
                  curves_header=["instance", "constraint", "greedy", "optimum", "ratio",
                                 "bound", "meets_bound"],
                  curves=rows)


TASK_FUNCS = {
    "project": lambda cfg, out: task_project(cfg),
    "regress": lambda cfg, out: task_regress(cfg),
    "pca": lambda cfg, out: task_pca(cfg),
    "cca": lambda cfg, out: task_cca(cfg),
    "synth": task_synth,
    "bench": lambda cfg, out: task_bench(cfg),
}


def write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([format(v, ".17g") if isinstance(v, float) else v for v in r])
