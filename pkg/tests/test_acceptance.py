"""End-to-end acceptance checks. Each test prints one PASS/FAIL line."""
import json
import math
import time
import warnings

import numpy as np

from infoproj.constraints import GroupStructure, UniformMatroid
from infoproj.gaussian import (
    GaussianObjective,
    log_mass_at_zero,
    objective_jtilde,
)
from infoproj.harness.cli import main
from infoproj.harness.matio import write_matrix
from infoproj.harness.metrics import metric_variance_explained
from infoproj.harness.synth import planted_factor_data, random_density, rng_stream
from infoproj.harness.tasks import bench_instance, pca_budget_curve
from infoproj.models import (
    DegeneratePosteriorWarning,
    PccaModel,
    PpcaModel,
    Theta,
    expected_complete_loglik,
    factor_estep,
    factor_mstep,
    pcca_fit,
    ppca_em,
)
from infoproj.solvers import greedy_matroid, greedy_partial_enum

LOG_2PI = math.log(2 * math.pi)


def _kl_projection_covariance_form(p, s):
    """KL(q* || p) on the subspace x_{S^c} = 0, from moments only."""
    d = p.dim
    cov = np.linalg.inv(p.precision)
    cov = 0.5 * (cov + cov.T)
    mu = cov @ p.potential
    c = np.setdiff1d(np.arange(d), s)
    if c.size:
        k = cov[np.ix_(s, c)] @ np.linalg.inv(cov[np.ix_(c, c)])
        mq = mu[s] - k @ mu[c]
        sq = cov[np.ix_(s, s)] - k @ cov[np.ix_(c, s)]
    else:
        mq, sq = mu[s], cov[np.ix_(s, s)]
    prec = np.linalg.inv(cov)
    x = np.zeros(d)
    x[s] = mq
    quad = (x - mu) @ prec @ (x - mu) + np.sum(prec[np.ix_(s, s)] * sq)
    e_logp = -0.5 * (d * LOG_2PI + np.linalg.slogdet(cov)[1] + quad)
    entropy = 0.5 * (s.size * (1 + LOG_2PI) + np.linalg.slogdet(sq)[1])
    return -entropy - e_logp


def test_criterion_1_closed_form_identity(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)
    worst_j, worst_kl = 0.0, 0.0
    for i in range(500):
        d = int(rng.integers(1, 11))
        p = random_density(rng_stream(1, i), d)
        s = np.sort(rng.choice(d, size=int(rng.integers(0, d + 1)), replace=False))
        ref = log_mass_at_zero(p, s) - log_mass_at_zero(p, [])
        worst_j = max(worst_j, abs(objective_jtilde(p, s) - ref))
        if s.size:
            kl = _kl_projection_covariance_form(p, s)
            worst_kl = max(worst_kl, abs(kl + log_mass_at_zero(p, s)))
    elapsed = time.perf_counter() - t0
    ok = worst_j <= 1e-8 and worst_kl <= 1e-8 and elapsed < 10
    acceptance(1, ok, f"max |Jt - logmass diff| = {worst_j:.2e}, max |KL + J| = {worst_kl:.2e} "
                      f"(tol 1e-8), {elapsed:.1f}s")
    assert ok


def test_criterion_2_normalized_monotone_submodular(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    norm_bad = mono_bad = sub_bad = 0
    worst_sub = 0.0
    for i in range(200):
        d = int(rng.integers(2, 11))
        p = random_density(rng_stream(2, i), d)
        norm_bad += objective_jtilde(p, []) != 0.0
        t = np.sort(rng.choice(d, size=int(rng.integers(1, d + 1)), replace=False))
        s = np.sort(rng.choice(t, size=int(rng.integers(0, t.size)), replace=False))
        mono_bad += objective_jtilde(p, s) > objective_jtilde(p, t) + 1e-9
        a = np.sort(rng.choice(d, size=int(rng.integers(0, d + 1)), replace=False))
        b = np.sort(rng.choice(d, size=int(rng.integers(0, d + 1)), replace=False))
        lhs = objective_jtilde(p, np.union1d(a, b)) + objective_jtilde(p, np.intersect1d(a, b))
        rhs = objective_jtilde(p, a) + objective_jtilde(p, b)
        sub_bad += lhs > rhs + 1e-9
        worst_sub = max(worst_sub, lhs - rhs)
    elapsed = time.perf_counter() - t0
    ok = norm_bad == 0 and mono_bad == 0 and sub_bad == 0 and elapsed < 30
    acceptance(2, ok, f"normalization violations {norm_bad}, monotonicity violations "
                      f"{mono_bad}, submodularity violations {sub_bad}/200 "
                      f"(worst excess {worst_sub:.3g}, slack 1e-9), {elapsed:.1f}s")
    assert ok


def test_criterion_3_approximation_ratios(acceptance):
    t0 = time.perf_counter()
    viol = {"uniform": 0, "partition": 0, "knapsack": 0}
    worst = {k: 1.0 for k in viol}
    for i in range(200):
        # bench_instance also asserts matroid greedy and multiview greedy agree
        for kind, gv, ov, bound in bench_instance(0, i, 10):
            ratio = gv / ov if ov > 0 else 1.0
            worst[kind] = min(worst[kind], ratio)
            viol[kind] += ratio < bound - 1e-9
    elapsed = time.perf_counter() - t0
    ok = sum(viol.values()) == 0 and elapsed < 300
    detail = ", ".join(f"{k} min ratio {worst[k]:.4f} ({viol[k]} violations)" for k in viol)
    acceptance(3, ok, f"{detail} over 200 instances, {elapsed:.1f}s")
    assert ok


def test_criterion_4_incremental_gains(acceptance):
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)
    worst = 0.0
    for i in range(100):
        d = int(rng.integers(2, 51))
        p = random_density(rng_stream(4, i), d)
        if i % 2 == 0:
            obj = GaussianObjective(p)
            sel = greedy_matroid(obj, obj.ground, UniformMatroid(int(rng.integers(1, d + 1)), d))
        else:
            g = GroupStructure.uniform_blocks(d, int(rng.integers(1, 5)))
            obj = GaussianObjective(p, g)
            sel = greedy_partial_enum(obj, g, int(rng.integers(1, d + 1)), m=1)
        for k, step in enumerate(sel.trace):
            naive = objective_jtilde(p, obj.expand(list(sel.order[:k + 1])))
            worst = max(worst, abs(step.value - naive) / max(1.0, abs(naive)))
    elapsed = time.perf_counter() - t0
    ok = worst <= 1e-7 and elapsed < 60
    acceptance(4, ok, f"max relative path error {worst:.2e} (tol 1e-7) over 100 runs, "
                      f"{elapsed:.1f}s")
    assert ok


def _fd_grad(f, params, h=1e-5):
    g = np.zeros_like(params)
    for i in range(params.size):
        e = np.zeros_like(params)
        e[i] = h * max(1.0, abs(params[i]))
        g[i] = (f(params + e) - f(params - e)) / (2 * e[i])
    return g


def _mstep_grad_norm(model, theta):
    q = factor_estep(model, theta).q
    th = factor_mstep(model, q, theta)
    n, d = model.T.shape
    ng = model.n_noise_groups
    cols = th.column_variances(d)
    s = np.array([cols[model.noise_groups == k][0] for k in range(ng)])

    def f(params):
        return expected_complete_loglik(model.T, model.prior_precision, q,
                                        Theta(params[:n], params[n:][model.noise_groups]))

    return float(np.max(np.abs(_fd_grad(f, np.concatenate([th.x, s])))))


def test_criterion_5_em_monotone_and_gradient(acceptance):
    t0 = time.perf_counter()
    worst_drop, worst_grad = 0.0, 0.0
    groups = GroupStructure.uniform_blocks(12, 3)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegeneratePosteriorWarning)
        for seed in range(50):
            rng = rng_stream(5, seed)
            T, _, _ = planted_factor_data(rng, 30, 12, [0, 1, 2, 7], noise=0.5)
            ppca = PpcaModel(T, groups, budget=6)
            fit = ppca_em(ppca, max_iters=40, tol=0)
            worst_drop = max(worst_drop, float(np.max(-np.diff(fit.trace), initial=0.0)))
            views = [T[:, :7], 2.0 * T[:, 7:]]
            pcca = PccaModel(views, (2, 2), per_view_noise=bool(seed % 2))
            cfit = pcca_fit(pcca, max_iters=40, tol=0)
            worst_drop = max(worst_drop, float(np.max(-np.diff(cfit.trace), initial=0.0)))
            if seed % 5 == 0:
                worst_grad = max(worst_grad, _mstep_grad_norm(ppca, ppca.theta0),
                                 _mstep_grad_norm(pcca, pcca.theta0),
                                 _mstep_grad_norm(ppca, fit.theta))
    elapsed = time.perf_counter() - t0
    ok = worst_drop <= 1e-9 and worst_grad <= 1e-5 and elapsed < 120
    acceptance(5, ok, f"largest free-energy drop {worst_drop:.2e} (slack 1e-9) over 50 PPCA + "
                      f"50 PCCA fits, M-step gradient max-norm {worst_grad:.2e} (tol 1e-5), "
                      f"{elapsed:.1f}s")
    assert ok


def test_criterion_6_planted_regression_protocol(acceptance, tmp_path):
    t0 = time.perf_counter()
    snrs = "10000,1000,100,10,1,0.1"
    assert main(["synth", "--out", str(tmp_path / "syn"), "--d", "100", "--n", "200",
                 "--reps", "10", "--snr-list", snrs, "--n-true-groups", "5",
                 "--group-size", "4", "--format", "bin"]) == 0
    assert main(["regress", "--data", str(tmp_path / "syn"), "--out", str(tmp_path / "reg"),
                 "--groups", "uniform:4", "--budget", "20"]) == 0
    doc = json.loads((tmp_path / "reg" / "result.json").read_text())
    by = {float(k): v for k, v in doc["metrics"]["by_snr"].items()}
    order = sorted(by, reverse=True)
    auc = [by[s]["support_auc"] for s in order]
    r2_top = [r["r2_test"] for r in doc["result"]["datasets"] if r["snr"] == 10000.0]
    elapsed = time.perf_counter() - t0
    high = all(by[s]["support_auc"] >= 0.99 for s in order if s >= 1000)
    mono = all(b <= a + 0.03 for a, b in zip(auc, auc[1:]))
    ok = high and mono and min(r2_top) >= 0.99 and elapsed < 600
    curve = ", ".join(f"{s:g}:{a:.3f}" for s, a in zip(order, auc))
    acceptance(6, ok, f"mean AUC by SNR {{{curve}}}, min test R^2 at SNR 1e4 = {min(r2_top):.5f}, "
                      f"{elapsed:.0f}s")
    assert ok


def test_criterion_7_pca_sanity(acceptance):
    t0 = time.perf_counter()
    full_err = 0.0
    nonmono = 0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegeneratePosteriorWarning)
        for seed in range(3):
            rng = rng_stream(7, seed)
            T = rng.standard_normal((50, 24)) @ np.diag(np.linspace(0.5, 2.0, 24))
            T -= T.mean(axis=0)
            one = GroupStructure(24, (tuple(range(24)),))
            fit = ppca_em(PpcaModel(T, one, budget=24), max_iters=2000, tol=1e-14)
            dense = np.linalg.eigvalsh(T.T @ T)[-1] / np.sum(T * T)
            full_err = max(full_err, abs(metric_variance_explained(T, fit.factor) - dense))
            rows = pca_budget_curve(T, GroupStructure.uniform_blocks(24, 4), range(0, 25, 4),
                                    max_iters=300, tol=1e-10)
            ve = [r["variance_explained"] for r in rows]
            nonmono += any(b < a - 1e-9 for a, b in zip(ve, ve[1:]))
    elapsed = time.perf_counter() - t0
    ok = full_err <= 1e-6 and nonmono == 0 and elapsed < 60
    acceptance(7, ok, f"k=d error vs dense eigenvector {full_err:.2e} (tol 1e-6), "
                      f"{nonmono}/3 datasets non-monotone in k, {elapsed:.1f}s")
    assert ok


def test_criterion_8_cli_determinism(acceptance, tmp_path):
    root = tmp_path / "in"
    root.mkdir()
    p = random_density(rng_stream(8), 8)
    write_matrix(root / "P.csv", p.precision)
    write_matrix(root / "r.csv", p.potential)
    T, _, _ = planted_factor_data(rng_stream(9), 40, 12, [0, 1, 5], noise=0.2)
    write_matrix(root / "T.csv", T)
    write_matrix(root / "X.csv", T[:, :6])
    write_matrix(root / "Y.csv", T[:, 6:])
    assert main(["synth", "--out", str(root / "syn"), "--d", "40", "--n", "80", "--reps", "2",
                 "--snr-list", "100,1", "--n-true-groups", "2"]) == 0
    tasks = {
        "project": ["--precision", str(root / "P.csv"), "--potential", str(root / "r.csv"),
                    "--groups", "uniform:2", "--budget", "4"],
        "regress": ["--data", str(root / "syn")],
        "pca": ["--T", str(root / "T.csv"), "--budgets", "2,4,8"],
        "cca": ["--views", str(root / "X.csv"), str(root / "Y.csv"), "--caps", "2,2"],
        "synth": ["--d", "20", "--n", "30", "--reps", "1", "--snr-list", "10",
                  "--n-true-groups", "1"],
        "bench": ["--bench-instances", "3", "--bench-d", "8"],
    }
    mismatches = []
    runs = 0
    for task, args in tasks.items():
        for lazy in ("false", "true"):
            for workers in ("1", "4"):
                docs = []
                for rep in range(2):
                    out = tmp_path / f"{task}-{lazy}-{workers}-{rep}"
                    code = main([task, "--seed", "17", "--lazy", lazy, "--workers", workers,
                                 "--out", str(out), *args])
                    runs += 1
                    if code != 0:
                        mismatches.append(f"{task} exit {code}")
                        break
                    doc = json.loads((out / "result.json").read_text())
                    doc.pop("timings")
                    docs.append(doc)
                if len(docs) == 2 and docs[0] != docs[1]:
                    mismatches.append(f"{task} lazy={lazy} workers={workers}")
    ok = not mismatches
    acceptance(8, ok, f"{runs} CLI runs over 6 tasks x lazy on/off x 1/4 workers; "
                      f"mismatches: {mismatches or 'none'}")
    assert ok
