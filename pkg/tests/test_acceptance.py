"""Acceptance suite: one test per release criterion, each printing a
pass/fail line with its headline number.

Run with ``pytest tests/test_acceptance.py -v -s`` to see the lines as the
criteria execute.
"""

import math
import time

import numpy as np
import pytest
from scipy import sparse

from mmo import solver, verify
from mmo.data import Dataset, random_discrete, save_mlsvm, load_mlsvm, single_point_dist, synth_linear
from mmo.metrics import empirical_metric, preset
from mmo.solver import SearchConfig, TrainConfig

SEED = 20260810


def _report(num, name, ok, detail=""):
    status = "PASS" if ok else "FAIL"
    print(f"[criterion {num:02d}] {name}: {status} {detail}")
    assert ok, f"criterion {num} ({name}) failed: {detail}"


def _verification_instances():
    """The canonical single-point instance plus 50 random small ones."""
    instances = [(single_point_dist([0.8]), preset("f1", 1, "micro"), 8 / 9)]
    rng = np.random.default_rng(SEED)
    for i in range(50):
        support = int(rng.integers(1, 4))
        l = int(rng.integers(1, 3))
        name = "f1" if i % 2 == 0 else "jaccard"
        dist = random_discrete(support, l, seed=(SEED, i))
        instances.append((dist, preset(name, l, "micro"), None))
    return instances


def test_criterion_01_factorization_exactness():
    t0 = time.time()
    rep = verify.check_factorization(l_max=8, trials=200, seed=SEED, tolerance=1e-9)
    elapsed = time.time() - t0
    _report(
        1,
        "factorization exactness",
        rep.passed and elapsed < 30.0,
        f"(max rel err {rep.max_violation:.2e} over {rep.trials} cases, {elapsed:.1f}s)",
    )


def test_criterion_02_linear_scaling():
    t0 = time.time()
    rep = verify.check_runtime_scaling(l_list=(64, 256, 1024, 4096), repeats=9)
    elapsed = time.time() - t0
    detail = ", ".join(f"{k}: {v:.2f}" for k, v in rep.info["ratios"].items())
    _report(
        2,
        "O(l) evaluation scaling",
        rep.passed and elapsed < 60.0,
        f"(quadrupling ratios {detail}; limit 8; {elapsed:.1f}s)",
    )


def test_criterion_03_gradient_correctness():
    t0 = time.time()
    rep = verify.check_gradient(
        trials=1000, seed=SEED, taus=(0.0, 0.5, 1.0), step=1e-4, tolerance=1e-5
    )
    elapsed = time.time() - t0
    _report(
        3,
        "analytic gradient vs finite differences",
        rep.passed and elapsed < 60.0,
        f"(max rel err {rep.max_violation:.2e}, {elapsed:.1f}s)",
    )


def test_criterion_04_optimality_characterization():
    t0 = time.time()
    worst = 0.0
    for dist, spec, lam_expected in _verification_instances():
        lam_star, _ = verify.lambda_star_exhaustive(dist, spec)
        if lam_expected is not None:
            assert abs(lam_star - lam_expected) <= 1e-12
        eq = verify.check_equivalence(dist, spec, tolerance=1e-9)
        sg = verify.check_sign_agreement(dist, spec, n_grid=21, tolerance=1e-9)
        worst = max(worst, eq.max_violation, sg.max_violation)
        assert eq.passed and sg.passed
    elapsed = time.time() - t0
    _report(
        4,
        "zero risk at the optimum and sign agreement",
        worst <= 1e-9 and elapsed < 30.0,
        f"(51 instances, max violation {worst:.2e}, {elapsed:.1f}s)",
    )


def test_criterion_05_oracle_bisection_rate():
    eps = 1e-3
    bound = math.ceil(math.log2(1.0 / eps))
    worst_err, worst_iters = 0.0, 0
    for dist, spec, _ in _verification_instances():
        lam_star, _ = verify.lambda_star_exhaustive(dist, spec)
        lam, report = solver.lambda_oracle_bisect(
            dist, spec, SearchConfig(lambda_min=0.0, lambda_max=1.0, epsilon=eps)
        )
        worst_err = max(worst_err, abs(lam - lam_star))
        worst_iters = max(worst_iters, report.iterations)
    _report(
        5,
        "oracle bisection accuracy and iteration bound",
        worst_err <= eps and worst_iters <= bound,
        f"(max |lambda error| {worst_err:.2e} <= {eps}, iterations {worst_iters} <= {bound})",
    )


def test_criterion_06_regret_bound_exact_branch():
    t0 = time.time()
    worst = -np.inf
    for tau in (0.0, 0.5, 1.0):
        rep = verify.check_regret_bound(1, tau, trials=10000, seed=SEED, tolerance=1e-9)
        worst = max(worst, rep.max_violation)
        assert rep.passed
    elapsed = time.time() - t0
    _report(
        6,
        "regret transfer bound, exact single-label branch",
        worst <= 1e-9 and elapsed < 60.0,
        f"(30000 trials, max violation {worst:.2e}, {elapsed:.1f}s)",
    )


def test_criterion_07_regret_bound_numeric_branch():
    worst = -np.inf
    for l in (2, 3):
        rep = verify.check_regret_bound(l, 0.0, trials=500, seed=SEED, slack=1e-3)
        worst = max(worst, rep.max_violation)
        assert rep.passed
    _report(
        7,
        "regret transfer bound, multi-label numeric branch",
        worst <= 1e-3,
        f"(1000 trials, max violation {worst:.2e}, slack 1e-3)",
    )


def test_criterion_08_end_to_end_metric_optimization():
    t0 = time.time()
    spec = preset("f1", 10, "micro")
    mmo_scores, bce_scores = [], []
    for seed in range(101, 106):
        ds, _ = synth_linear(l=10, d=50, m=20000, positive_rate=0.05, noise=1.0, seed=seed)
        train = ds.subset(np.arange(16000))
        test = ds.subset(np.arange(16000, 20000))
        cfg = TrainConfig(epochs=20, learning_rate=1e-3, batch_size=128, seed=seed)
        model_mmo, _ = solver.train_ema(
            train, spec, cfg, SearchConfig(ema_gamma=0.7, ema_lambda0=0.5)
        )
        model_bce = solver.train_logistic(train, cfg)
        mmo_scores.append(empirical_metric(test.Y, model_mmo.predict_matrix(test.X), spec))
        bce_scores.append(empirical_metric(test.Y, model_bce.predict_matrix(test.X), spec))
    elapsed = time.time() - t0
    diffs = np.array(mmo_scores) - np.array(bce_scores)
    wins = int((diffs >= 0).sum())
    _report(
        8,
        "metric-aware training beats the logistic baseline",
        np.mean(mmo_scores) >= np.mean(bce_scores) and wins >= 4 and elapsed < 300.0,
        f"(mean micro-F1 {np.mean(mmo_scores):.4f} vs {np.mean(bce_scores):.4f}, "
        f"wins {wins}/5, {elapsed:.1f}s)",
    )


def test_criterion_09_cv_grid_contract():
    ds, _ = synth_linear(l=3, d=8, m=500, positive_rate=0.3, noise=0.5, seed=SEED)
    train = ds.subset(np.arange(400))
    val = ds.subset(np.arange(400, 500))
    spec = preset("f1", 3, "micro")
    search = SearchConfig(lambda_min=0.0, lambda_max=1.0, epsilon=0.1)
    _, report = solver.lambda_cv_grid(train, val, spec, TrainConfig(epochs=2, seed=3), search)
    expected = math.floor(1.0 / 0.1) + 1
    recorded = [c.val_metric for c in report.candidates if c.val_metric is not None]
    best_ok = all(report.details["best_val_metric"] >= v for v in recorded)
    _report(
        9,
        "cv grid candidate count and best-of contract",
        report.iterations == expected and best_ok,
        f"(candidates {report.iterations} == {expected}, best >= all {best_ok})",
    )


def test_criterion_10_ema_recurrence():
    m, gamma_ema, lam0 = 50, 0.7, 0.5
    ds = Dataset(
        l=2,
        d=1,
        X=sparse.csr_matrix(np.ones((m, 1))),
        Y=np.ones((m, 2), dtype=np.int8),
    )
    _, report = solver.train_ema(
        ds,
        preset("f1", 2, "micro"),
        TrainConfig(epochs=1, batch_size=1, seed=0),
        SearchConfig(ema_gamma=gamma_ema, ema_lambda0=lam0),
    )
    worst = 0.0
    for t, entry in enumerate(report.lambda_trace, start=1):
        # constant batch metric c = 1.0 under frozen all-positive predictions
        worst = max(worst, abs(abs(entry["lambda"] - 1.0) - gamma_ema**t * abs(lam0 - 1.0)))
    _report(
        10,
        "moving-average lambda follows the geometric recurrence",
        worst <= 1e-12,
        f"(50 steps, max |deviation| {worst:.2e})",
    )


def test_criterion_11_data_round_trip(tmp_path):
    rng = np.random.default_rng(SEED)
    exact = True
    for i in range(100):
        m = int(rng.integers(0, 25))
        l = int(rng.integers(1, 6))
        d = int(rng.integers(1, 12))
        rows, cols, vals = [], [], []
        for r in range(m):
            nnz = int(rng.integers(0, d + 1))
            for c in np.sort(rng.choice(d, size=nnz, replace=False)):
                rows.append(r)
                cols.append(int(c))
                vals.append(float(rng.normal()) * 10.0 ** int(rng.integers(-12, 12)))
        ds = Dataset(
            l=l,
            d=d,
            X=sparse.csr_matrix((vals, (rows, cols)), shape=(m, d)),
            Y=rng.choice([-1, 1], size=(m, l)).astype(np.int8),
        )
        path = tmp_path / f"rt{i}.mlsvm"
        save_mlsvm(ds, path)
        back = load_mlsvm(path)
        a, b = ds.X.tocsr(), back.X.tocsr()
        a.sort_indices()
        b.sort_indices()
        exact = (
            exact
            and (back.l, back.d, back.m) == (ds.l, ds.d, ds.m)
            and np.array_equal(back.Y, ds.Y)
            and np.array_equal(a.indptr, b.indptr)
            and np.array_equal(a.indices, b.indices)
            and np.array_equal(a.data, b.data)
        )
    _report(11, "dataset save/load bit-exact round-trip", exact, "(100 random datasets)")
