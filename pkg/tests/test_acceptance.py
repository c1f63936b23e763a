"""Acceptance suite: one verdict line per criterion, printed in the terminal summary.

The synthetic end-to-end criteria share one session-scoped set of
10 x 5-fold runs on the default table1 preset (overlap 0.6, noise 0.05).
"""

import time
from collections import Counter

import numpy as np
import pytest

from acceptance_log import record
from adulterant.boosting import train_adaboost_mh, training_error
from adulterant.experiments import (GridSpec, _seed, powerset_keys, run_protocol,
                                    stratified_folds, stratified_kfold)
from adulterant.metrics import detect_rate_by_ratio, main_ingredient_check
from adulterant.synthgen import generate, table1_config
from lvq_checks import gradient_check
from test_boosting import check_bound_run, random_problem
from test_metrics import (EXHAUSTIVE, bipartition_cases, check_bipartition, check_ranking,
                          ranking_cases)

SEED = 0
RUNS, FOLDS = 10, 5
BUDGET_S = 15 * 60
LOW_BIN, MID_BIN = (0.05, 0.15), (0.40, 0.60)


@pytest.fixture(scope="session")
def table1():
    return generate(table1_config(seed=SEED))


@pytest.fixture(scope="session")
def synthetic(table1):
    out, times = {}, {}
    for name, method, grid in (("binary", "binary-boost", GridSpec()),
                               ("ml-boost", "ml-boost", GridSpec()),
                               ("ml-lvq", "ml-lvq", GridSpec()),
                               ("binary-pca", "binary-boost", GridSpec(pca_rule=0.99))):
        start = time.perf_counter()
        out[name] = run_protocol(table1, grid, method, runs=RUNS, k=FOLDS, seed=SEED)
        times[name] = time.perf_counter() - start
    return out, times


def test_criterion_1_metric_oracle():
    start = time.perf_counter()
    failure = None
    try:
        for L, N in EXHAUSTIVE:
            for rows in bipartition_cases(L, N):
                check_bipartition(rows, L)
            for rows in ranking_cases(L, N):
                check_ranking(rows)
    except AssertionError as exc:
        failure = str(exc) or "mismatch"
    elapsed = time.perf_counter() - start
    ok = failure is None and elapsed < 60
    record(1, ok, f"exhaustive oracle match={failure is None}, {elapsed:.1f}s (< 60s)")
    assert ok, failure


def test_criterion_2_boosting_bound():
    start = time.perf_counter()
    failure = None
    for seed in range(50):
        X, Y = random_problem(1000 + seed)
        try:
            check_bound_run(X, Y, 40)
        except AssertionError as exc:
            failure = f"dataset {seed}: {exc}"
            break
    elapsed = time.perf_counter() - start
    ok = failure is None and elapsed < 120
    record(2, ok, f"50 datasets, error <= prod Z, weights sum 1, prod Z non-increasing; "
                  f"{elapsed:.1f}s (< 120s)" + (f"; {failure}" if failure else ""))
    assert ok, failure


def test_criterion_3_xor_and_separable():
    X = np.array([[0.0, 0.0], [0.0, 1.0], [1.0, 0.0], [1.0, 1.0]])
    y = np.array([[-1], [1], [1], [-1]])
    staged = train_adaboost_mh(X, y, 200).staged_scores(X)[:, :, 0]
    errs = np.mean(np.sign(staged) != y, axis=0)
    line = np.array([[-2.0], [-1.0], [1.0], [2.0]])
    sep = np.array([[-1], [-1], [1], [1]])
    sep_err = training_error(train_adaboost_mh(line, sep, 1), line, sep)
    ok = errs.min() >= 0.25 and sep_err == 0.0
    record(3, ok, f"XOR min error over T=1..200 = {errs.min():.2f} (>= 0.25); "
                  f"separable 1-D error at T=1 = {sep_err}")
    assert ok


def test_criterion_4_gradient_check():
    grad_err, step_err = gradient_check(n_points=100, seed=SEED)
    ok = grad_err <= 1e-4 and step_err <= 1e-4
    record(4, ok, f"100 points, h=1e-5: worst relative error gradient {grad_err:.2e}, "
                  f"update {step_err:.2e} (<= 1e-4)")
    assert ok


def test_criterion_5_synthetic_end_to_end(synthetic):
    reports, times = synthetic
    mean = {k: r.summary() for k, r in reports.items()}
    bin_acc = mean["binary"]["accuracy"]["mean"]
    lvq, mb = mean["ml-lvq"], mean["ml-boost"]
    elapsed = times["binary"] + times["ml-boost"] + times["ml-lvq"]
    rate, failures, _ = main_ingredient_check(reports["ml-lvq"].records, missed_only=True)
    checks = {
        "binary accuracy >= 0.90": bin_acc >= 0.90,
        "lvq accuracy >= ml-boost": lvq["accuracy"]["mean"] >= mb["accuracy"]["mean"],
        "lvq mac-F1 >= ml-boost": lvq["mac_f1"]["mean"] >= mb["mac_f1"]["mean"],
        "lvq detect >= 0.85": lvq["detect_rate"]["mean"] >= 0.85,
        "runtime <= 15 min": elapsed <= BUDGET_S,
    }
    failed = [k for k, v in checks.items() if not v]
    detail = (f"binary acc {bin_acc:.4f}; accuracy lvq {lvq['accuracy']['mean']:.4f} vs "
              f"boost {mb['accuracy']['mean']:.4f}; mac-F1 lvq {lvq['mac_f1']['mean']:.4f} vs "
              f"boost {mb['mac_f1']['mean']:.4f}; lvq detect {lvq['detect_rate']['mean']:.4f}; "
              f"main ingredient on mis-set mixtures {rate:.4f} ({len(failures)} failures listed "
              f"below); {elapsed:.0f}s")
    if failed:
        detail += "; failed: " + ", ".join(failed)
    record(5, not failed, detail)
    names = reports["ml-lvq"].manifest["labels"]
    for r in failures:
        truth = ", ".join(f"{names[l]}:{v:.2f}" for l, v in sorted(r.truth_ratios.items()))
        print(f"  main-ingredient failure {r.id}: truth {truth}; ranked "
              f"{[names[l] for l in r.ranked]}")
    assert not failed


def test_criterion_6_ratio_curve_shape(synthetic):
    reports, _ = synthetic
    low, mid = detect_rate_by_ratio(reports["ml-lvq"].records, edges=[LOW_BIN, MID_BIN])
    ok = mid.detect_rate >= low.detect_rate and low.support >= 10 and mid.support >= 10
    record(6, ok, f"detect [0.40,0.60] = {mid.detect_rate:.4f} (n={mid.support}) vs "
                  f"[0.05,0.15] = {low.detect_rate:.4f} (n={low.support})")
    assert ok


def test_criterion_7_pca_direction(synthetic):
    reports, _ = synthetic
    full = reports["binary"].summary()["accuracy"]["mean"]
    pca = reports["binary-pca"].summary()["accuracy"]["mean"]
    dims = [f.pca_dims for f in reports["binary-pca"].folds]
    ok = full >= pca
    record(7, ok, f"binary accuracy all features {full:.4f} vs PCA 0.99 {pca:.4f} "
                  f"(mean {np.mean(dims):.1f} components)")
    assert ok


def test_criterion_8_determinism_and_leakage(table1):
    grid_lvq = GridSpec(S=(1, 3), lvq_epochs=5, meta_stumps=20)
    grid_pca = GridSpec(T_binary=(20, 40), pca_rule=0.99)
    a = run_protocol(table1, grid_lvq, "ml-lvq", runs=1, k=FOLDS, seed=SEED)
    b = run_protocol(table1, grid_lvq, "ml-lvq", runs=1, k=FOLDS, seed=SEED)
    identical = a.to_json() == b.to_json() and a.manifest == b.manifest
    base_pca = run_protocol(table1, grid_pca, "binary-boost", runs=1, k=FOLDS, seed=SEED)
    rng = np.random.default_rng(1)
    leaks = 0
    for assignment in stratified_kfold(table1, FOLDS, _seed(SEED, 0), run=0):
        X = table1.X.copy()
        X[assignment.test_idx] *= rng.uniform(0.5, 2.0, size=(len(assignment.test_idx), table1.d))
        changed = table1.with_features(X)
        f = assignment.fold
        other_pca = run_protocol(changed, grid_pca, "binary-boost", runs=1, k=FOLDS, seed=SEED)
        p, q = base_pca.folds[f].artifacts["pca"], other_pca.folds[f].artifacts["pca"]
        same_pca = (np.array_equal(p.mean, q.mean) and np.array_equal(p.components, q.components)
                    and np.array_equal(p.eigenvalues, q.eigenvalues))
        other_lvq = run_protocol(changed, grid_lvq, "ml-lvq", runs=1, k=FOLDS, seed=SEED)
        same_scaling = np.array_equal(a.folds[f].artifacts["scaling"],
                                      other_lvq.folds[f].artifacts["scaling"])
        leaks += (not same_pca) + (not same_scaling)
    ok = identical and leaks == 0
    record(8, ok, f"byte-identical reports={identical}; folds whose scaling or PCA changed "
                  f"after perturbing test rows: {leaks}")
    assert ok


def test_criterion_9_stratification(table1):
    keys = powerset_keys(table1)
    rare = [k for k, c in Counter(keys).items() if c == 2]
    worst = 0
    rare_split = True
    for run in range(RUNS):
        folds = stratified_folds(keys, FOLDS, _seed(SEED, run))
        for key in set(keys):
            counts = [sum(1 for i in f if keys[i] == key) for f in folds]
            worst = max(worst, max(counts) - min(counts))
        for key in rare:
            where = {fi for fi, f in enumerate(folds) for i in f if keys[i] == key}
            rare_split &= len(where) == 2
    ok = worst <= 1 and bool(rare) and rare_split
    record(9, ok, f"max per-class fold count spread {worst} (<= 1); 2-member classes "
                  f"{len(rare)} split across distinct folds in every run: {rare_split}")
    assert ok
