"""Acceptance checks, one per criterion, each printing a PASS/FAIL line.

Run with ``pytest tests/test_acceptance.py`` or ``python3 tests/test_acceptance.py``.
The MovieLens-100K check looks for ``u.data`` under ``$LLORMA_ML100K`` (a
directory or the file itself) or ``data/ml-100k/`` and is skipped otherwise.
"""
from __future__ import annotations

import math
import os
import sys
import tempfile
import time
from pathlib import Path

import numpy as np
import pytest

from llorma.data import MOVIELENS_SCALE, UNBOUNDED_SCALE, ObservedMatrix, read_ratings, split_train_test
from llorma.ensemble import EMPTY, OK, UNSEEN, evaluate, evaluate_global, fit_ensemble, nw_weights
from llorma.experiment import ExperimentConfig, run_experiment
from llorma.factor import TrainConfig, objective_and_gradient, predict_entry, train_global, weighted_loss_and_gradient
from llorma.kernels import DistanceModel, KernelConfig, anchor_weight_vectors, epanechnikov, product_kernel
from llorma.local import train_local
from llorma.nuclear import svt_complete, svt_local
from llorma.synthetic import make_local_low_rank, observe

# tolerances and budgets
RANK1_TARGET, RANK1_TOL, RANK1_SECONDS = 4.0, 0.05, 1.0
GRAD_INSTANCES, GRAD_STEP, GRAD_TOL = 20, 1e-5, 1e-5
KERNEL_DRAWS, KERNEL_GRID = 1000, 10
NW_QUERIES, NW_TOL = 1000, 1e-12
SVT_TOL, SVT_ITERS, SVT_SECONDS = 1e-2, 500, 10.0
SYNTH_SEEDS, SYNTH_RANKS, SYNTH_SECONDS = 5, (1, 2, 5, 10), 120.0
ML_BAND, ML_SECONDS = (0.85, 1.05), 600.0


# lines are also echoed in the pytest terminal summary (see conftest.py)
REPORT_LINES: list[str] = []


def report(number, passed, detail, status=None):
    line = f"[criterion {number:2d}] {status or ('PASS' if passed else 'FAIL')}: {detail}"
    REPORT_LINES.append(line)
    print(line, flush=True)
    return passed


def rel_err(a, b):
    return float(np.linalg.norm(a - b) / max(np.linalg.norm(a), np.linalg.norm(b), 1e-300))


# -- 1 -----------------------------------------------------------------------


def check_rank1_oracle():
    t0 = time.perf_counter()
    obs = ObservedMatrix([0, 0, 1], [0, 1, 0], [1.0, 2.0, 2.0], 2, 2)
    f = train_global(obs, TrainConfig(rank=1, lam=0.0, max_epochs=200, tolerance=1e-12))
    value = predict_entry(f, 1, 1, MOVIELENS_SCALE)
    secs = time.perf_counter() - t0
    ok = abs(value - RANK1_TARGET) <= RANK1_TOL and secs < RANK1_SECONDS
    return report(1, ok, f"missing entry {value:.6f} (target 4 +/- {RANK1_TOL}), {secs:.3f}s")


# -- 2 -----------------------------------------------------------------------


def _central(f, X):
    g = np.zeros_like(X)
    for idx in np.ndindex(X.shape):
        Xp, Xm = X.copy(), X.copy()
        Xp[idx] += GRAD_STEP
        Xm[idx] -= GRAD_STEP
        g[idx] = (f(Xp) - f(Xm)) / (2 * GRAD_STEP)
    return g


def check_gradients():
    worst = 0.0
    for seed in range(GRAD_INSTANCES):
        rng = np.random.default_rng(seed)
        M = rng.standard_normal((4, 2)) @ rng.standard_normal((4, 2)).T
        obs = ObservedMatrix.from_dense(M, rng.random((4, 4)) < 0.75, scale=UNBOUNDED_SCALE)
        U, V = rng.standard_normal((4, 2)), rng.standard_normal((4, 2))
        lam = float(rng.uniform(0, 0.5))
        w = rng.random(obs.nnz)
        plain = lambda A, B: objective_and_gradient(A, B, obs, lam)
        weighted = lambda A, B: weighted_loss_and_gradient(A, B, obs, w, lam)
        for fn in (plain, weighted):
            _, gU, gV = fn(U, V)
            worst = max(worst,
                        rel_err(gU, _central(lambda X: fn(X, V)[0], U)),
                        rel_err(gV, _central(lambda X: fn(U, X)[0], V)))
    return report(2, worst < GRAD_TOL,
                  f"{GRAD_INSTANCES} instances x 2 objectives, worst relative error {worst:.2e} (< {GRAD_TOL})")


# -- 3 -----------------------------------------------------------------------


def check_kernels():
    at_zero = epanechnikov(0.0, 0.8)
    rng = np.random.default_rng(0)
    h = rng.uniform(0.01, 1.0, KERNEL_DRAWS)
    d = h + rng.uniform(0.0, 3.0, KERNEL_DRAWS)
    d[:10] = h[:10]
    outside_zero = all(epanechnikov(di, hi) == 0.0 for di, hi in zip(d, h))

    n = KERNEL_GRID
    feats = rng.standard_normal((n, 3))
    feats[[2, 5]] = feats[[1, 4]] * 2.0  # exact duplicates in direction
    dm = DistanceModel(feats, rng.standard_normal((n, 3)))
    grid_ok = True
    for cfg in (KernelConfig(), KernelConfig(1.0, 0.6), KernelConfig(1.5, 1.5, normalized=True),
                KernelConfig(1.2, 1.2, "uniform")):
        for a in range(n):
            for b in range(n):
                row_w, col_w = anchor_weight_vectors((a, b), dm, cfg)
                dense = np.array([[product_kernel((a, b), (i, j), dm, cfg) for j in range(n)] for i in range(n)])
                grid_ok &= bool(np.array_equal(np.outer(row_w, col_w), dense))
    ok = at_zero == 0.75 and outside_zero and grid_ok
    return report(3, ok, f"K(0, 0.8) = {at_zero!r}; zero beyond h on {KERNEL_DRAWS} draws: {outside_zero}; "
                         f"factored == dense on 4 configs x {n}x{n} anchors x {n}x{n} grid: {grid_ok}")


# -- shared fitted ensemble ----------------------------------------------------


def _small_ensemble(seed=0, q=12):
    """Rank-2 ensemble on a 60x50 locally low-rank matrix."""
    data = make_local_low_rank(60, 50, n_clusters=3, spread=0.2, seed=seed)
    train, test = observe(data.dense, 0.3, seed=seed)
    glob = train_global(train, TrainConfig(rank=5, seed=seed))
    dm = DistanceModel.from_factors(glob)
    ens, _ = fit_ensemble(train, glob, dm, KernelConfig(), TrainConfig(rank=2, seed=seed), q, seed=seed)
    return ens, train, test


# -- 4 -----------------------------------------------------------------------


def check_nw_normalization():
    ens, train, _ = _small_ensemble()
    rng = np.random.default_rng(1)
    found = 0
    worst_sum = 0.0
    nonneg = hull = True
    while found < NW_QUERIES:
        r, c = int(rng.integers(train.n_rows)), int(rng.integers(train.n_cols))
        k = ens.kernel_values(np.array([r]), np.array([c]))[:, 0]
        if k.sum() <= 0:
            continue
        found += 1
        w = nw_weights(ens, (r, c))
        nonneg &= bool(np.all(w >= 0))
        worst_sum = max(worst_sum, abs(w.sum() - 1.0))
        local = ens.local_raw(np.array([r]), np.array([c]))[:, 0]
        raw = float(np.dot(w, local))
        live = local[w > 0]
        span = max(1.0, np.abs(live).max())
        hull &= bool(live.min() - 1e-12 * span <= raw <= live.max() + 1e-12 * span)
    ok = nonneg and worst_sum <= NW_TOL and hull
    return report(4, ok, f"{NW_QUERIES} queries: weights >= 0 {nonneg}, max |sum - 1| = {worst_sum:.1e}, "
                         f"inside local hull {hull}")


# -- 5 -----------------------------------------------------------------------


def check_degeneracy():
    rng = np.random.default_rng(5)
    M = rng.standard_normal((15, 2)) @ rng.standard_normal((12, 2)).T
    obs = ObservedMatrix.from_dense(M, rng.random(M.shape) < 0.6, scale=UNBOUNDED_SCALE)
    dm = DistanceModel(rng.standard_normal((15, 4)), rng.standard_normal((12, 4)))
    everywhere = KernelConfig(4.0, 4.0, "uniform")
    cfg = TrainConfig(rank=2, seed=11)
    anchor = (int(obs.rows[0]), int(obs.cols[0]))
    same_factors = train_local(obs, anchor, dm, everywhere, cfg).factors.same_as(train_global(obs, cfg))
    a = svt_local(obs, anchor, dm, everywhere)
    b = svt_complete(obs)
    same_iterates = (np.array_equal(a.X, b.X) and a.iterations == b.iterations
                     and a.history == b.history)
    return report(5, same_factors and same_iterates,
                  f"unit-weight local factors identical: {same_factors}; "
                  f"unit-weight SVT iterates identical ({b.iterations} iterations): {same_iterates}")


# -- 6 -----------------------------------------------------------------------


def rank2_completion_instance(seed):
    rng = np.random.default_rng(seed)
    M = rng.standard_normal((20, 2)) @ rng.standard_normal((20, 2)).T
    mask = np.zeros(400, dtype=bool)
    mask[rng.choice(400, 240, replace=False)] = True
    return M, ObservedMatrix.from_dense(M, mask.reshape(20, 20), scale=UNBOUNDED_SCALE)


def check_svt_recovery():
    t0 = time.perf_counter()
    M, obs = rank2_completion_instance(0)
    res = svt_complete(obs)
    secs = time.perf_counter() - t0
    err = rel_err(res.X, M)
    ok = err < SVT_TOL and res.iterations <= SVT_ITERS and secs < SVT_SECONDS
    # context only: how often 60% sampling is enough for this generator
    hits = sum(rel_err(svt_complete(o).X, m) < SVT_TOL
               for m, o in (rank2_completion_instance(s) for s in range(1, 21)))
    return report(6, ok, f"seed 0: relative error {err:.2e} in {res.iterations} iterations, {secs:.2f}s "
                         f"(seeds 1-20 recovered: {hits}/20)")


# -- 7 -----------------------------------------------------------------------


def synthetic_trial(seed):
    data = make_local_low_rank(200, 200, n_models=4, n_clusters=3, rank=2, spread=0.15, seed=seed)
    train, test = observe(data.dense, 0.2, seed=seed)
    cfg = lambda r: TrainConfig(rank=r, lam=0.01, max_epochs=300, tolerance=1e-6, seed=seed)
    globals_ = {r: train_global(train, cfg(r)) for r in SYNTH_RANKS}
    dm = DistanceModel.from_factors(globals_[10])
    ens, _ = fit_ensemble(train, globals_[10], dm, KernelConfig(0.8, 0.8), cfg(2), 20, seed=seed)
    global_rmse = [evaluate_global(globals_[r], test, UNBOUNDED_SCALE).rmse for r in SYNTH_RANKS]
    m = evaluate(ens, test)
    return global_rmse, m.rmse, m.coverage


def check_local_beats_global():
    t0 = time.perf_counter()
    trials = [synthetic_trial(seed) for seed in range(SYNTH_SEEDS)]
    secs = time.perf_counter() - t0
    g = np.median([t[0] for t in trials], axis=0)
    e = float(np.median([t[1] for t in trials]))
    cov = float(np.median([t[2] for t in trials]))
    ok = bool(np.all(e < g)) and secs < SYNTH_SECONDS
    per_rank = ", ".join(f"r{r} {v:.4f}" for r, v in zip(SYNTH_RANKS, g))
    return report(7, ok, f"median ensemble RMSE {e:.4f} (coverage {cov:.2f}) vs global {per_rank}; {secs:.1f}s")


# -- 8 -----------------------------------------------------------------------


def movielens_path():
    candidates = []
    if os.environ.get("LLORMA_ML100K"):
        p = Path(os.environ["LLORMA_ML100K"])
        candidates.append(p / "u.data" if p.is_dir() else p)
    here = Path(__file__).resolve().parent.parent
    candidates += [here / "data" / "ml-100k" / "u.data", Path.cwd() / "data" / "ml-100k" / "u.data"]
    return next((p for p in candidates if p.is_file()), None)


def check_movielens(path):
    t0 = time.perf_counter()
    data = read_ratings(path, "tsv", MOVIELENS_SCALE)
    train, test = split_train_test(data, 0.1, seed=0)
    cfg = TrainConfig(rank=5, seed=0)
    glob = train_global(train, cfg)
    d_glob = train_global(train, TrainConfig(rank=10, seed=0))
    dm = DistanceModel.from_factors(d_glob)
    ens, _ = fit_ensemble(train, d_glob, dm, KernelConfig(0.8, 0.8), cfg, 50, seed=0)
    g = evaluate_global(glob, test, MOVIELENS_SCALE, train.row_counts() > 0, train.col_counts() > 0).rmse
    e = evaluate(ens, test).rmse
    secs = time.perf_counter() - t0
    ok = e < g and ML_BAND[0] <= g <= ML_BAND[1] and secs < ML_SECONDS
    return report(8, ok, f"local {e:.4f} vs global rank-5 {g:.4f} (band {ML_BAND}), {secs:.0f}s")


# -- 9 -----------------------------------------------------------------------


def check_determinism():
    data = make_local_low_rank(50, 40, n_clusters=3, spread=0.2, seed=3)
    train, _ = observe(data.dense, 0.4, seed=3)
    with tempfile.TemporaryDirectory() as tmp:
        src = Path(tmp) / "ratings.csv"
        src.write_text("".join(f"{r},{c},{v!r}\n" for r, c, v in
                               zip(train.rows, train.cols, train.values.tolist())))
        outputs = []
        for jobs in (1, 1, 4):
            out = Path(tmp) / f"series-{len(outputs)}.csv"
            run_experiment(ExperimentConfig(input=str(src), format="csv", ranks=(1, 3), anchors=(2, 6),
                                            distance_rank=5, seed=7, n_jobs=jobs, out=str(out),
                                            scale=UNBOUNDED_SCALE))
            outputs.append(out.read_bytes())
    ok = outputs[0] == outputs[1] == outputs[2]
    return report(9, ok, f"3 runs (workers 1, 1, 4), {len(outputs[0])} bytes each, identical: {ok}")


# -- 10 ----------------------------------------------------------------------


def check_fallbacks():
    data = make_local_low_rank(60, 50, n_clusters=3, spread=0.2, seed=2)
    ratings = np.clip(3.0 + 0.5 * data.dense, 1.0, 5.0)
    observed, test = observe(ratings, 0.3, seed=2, scale=MOVIELENS_SCALE)
    # row 0 and column 1 never appear in training
    train = observed.subset(np.flatnonzero((observed.rows != 0) & (observed.cols != 1)))
    glob = train_global(train, TrainConfig(rank=5))
    dm = DistanceModel.from_factors(glob)
    ens, _ = fit_ensemble(train, glob, dm, KernelConfig(), TrainConfig(rank=2), 3, seed=2)

    pred, cause = ens.predict_with_causes(test.rows, test.cols)
    unseen_expected = (test.rows == 0) | (test.cols == 1)
    unseen_ok = (bool(np.all(pred[cause == UNSEEN] == 3.0))
                 and bool(np.array_equal(cause == UNSEEN, unseen_expected)))
    empty = cause == EMPTY
    expected = glob.predict(test.rows[empty], test.cols[empty], MOVIELENS_SCALE)
    empty_ok = bool(np.array_equal(pred[empty], expected))
    m = evaluate(ens, test)
    counts_ok = (m.fallback_unseen == int(unseen_expected.sum()) and m.fallback_empty == int(empty.sum())
                 and m.fallback_unseen > 0 and m.fallback_empty > 0
                 and math.isclose(m.coverage, float(np.mean(cause == OK))))
    ok = unseen_ok and empty_ok and counts_ok
    return report(10, ok, f"{m.fallback_unseen} unseen queries all 3.0: {unseen_ok}; {m.fallback_empty} "
                          f"zero-mass queries equal global prediction: {empty_ok}; diagnostics consistent: {counts_ok}")


# -- pytest entry points ---------------------------------------------------------


def test_criterion_01_rank1_completion_oracle():
    assert check_rank1_oracle()


def test_criterion_02_gradient_checks():
    assert check_gradients()


def test_criterion_03_kernel_suite():
    assert check_kernels()


def test_criterion_04_nw_normalization():
    assert check_nw_normalization()


def test_criterion_05_degeneracy_equivalences():
    assert check_degeneracy()


def test_criterion_06_svt_recovery():
    assert check_svt_recovery()


@pytest.mark.slow
def test_criterion_07_local_beats_global_synthetic():
    assert check_local_beats_global()


def test_criterion_08_movielens_100k():
    path = movielens_path()
    if path is None:
        report(8, True, "MovieLens-100K u.data not found (set LLORMA_ML100K)", status="SKIP")
        pytest.skip("MovieLens-100K not available")
    assert check_movielens(path)


def test_criterion_09_determinism():
    assert check_determinism()


def test_criterion_10_fallbacks():
    assert check_fallbacks()


if __name__ == "__main__":
    checks = [check_rank1_oracle, check_gradients, check_kernels, check_nw_normalization, check_degeneracy,
              check_svt_recovery, check_local_beats_global, check_determinism, check_fallbacks]
    results = [c() for c in checks]
    path = movielens_path()
    if path is None:
        report(8, True, "MovieLens-100K u.data not found (set LLORMA_ML100K)", status="SKIP")
    else:
        results.append(check_movielens(path))
    sys.exit(0 if all(results) else 1)
