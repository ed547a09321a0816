"""Acceptance suite: one PASS/FAIL line per criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v``. The lines are written to
the terminal even when pytest captures output. Criterion 10 needs the
MovieLens-100k ``u.data`` file, found through ``$GRRMF_MOVIELENS`` or at
``data/ml-100k/u.data``; without it the criterion prints SKIPPED.
"""

import os
import time
from pathlib import Path

import numpy as np
import pytest

from grrmf.analysis import (
    check_lemma_suite,
    find_counterexample,
    rank1_grf_representable,
    refit_agreement,
    structure_report,
    uniqueness_check,
    verify_witness,
)
from grrmf.config import load_config
from grrmf.core import FactorModel, ObservationSet
from grrmf.experiments import completion_table, run_complete, run_recommend
from grrmf.generators import (
    band_diagonal,
    identity,
    identity_witness,
    planted_uniqueness_violation,
    random_low_grr,
    upper_triangle,
    upper_triangle_witness,
    well_margined_instance,
)
from grrmf.link import LinkKind, multi_sigmoid, multi_sigmoid_grad
from grrmf.linalg import best_rank_k_error
from grrmf.optim import Loss, TrainConfig, loss_gradients, loss_value, rmse, train

ROOT = Path(__file__).resolve().parents[1]
CONFIGS = ROOT / "configs"


@pytest.fixture
def report(capsys):
    """Print ``CRITERION n: PASS|FAIL`` with details, then assert."""

    def emit(number, checks, elapsed=None):
        ok = all(passed for _, passed in checks)
        with capsys.disabled():
            timing = f" ({elapsed:.1f} s)" if elapsed is not None else ""
            print(f"\nCRITERION {number}: {'PASS' if ok else 'FAIL'}{timing}")
            for text, passed in checks:
                print(f"    [{'ok' if passed else 'FAIL'}] {text}")
        assert ok, f"criterion {number} failed: " + "; ".join(t for t, p in checks if not p)

    return emit


def _full_rmse(model, y, link, sharpness=1.0):
    obs = ObservationSet.full(y)
    return rmse(model, obs.with_split(np.ones(len(obs), bool)), link, sharpness)


def test_criterion_01_eckart_young(report):
    start = time.perf_counter()
    errs = [best_rank_k_error(identity(10).data.astype(float), k) for k in range(11)]
    elapsed = time.perf_counter() - start
    worst = max(abs(e - (10 - k)) for k, e in enumerate(errs))
    report(1, [
        (f"identity 10x10: max |err(k) - (10 - k)| = {worst:.2e} <= 1e-6", worst <= 1e-6),
        (f"runtime {elapsed:.3f} s < 1 s", elapsed < 1.0),
    ], elapsed)


def test_criterion_02_recovery(report):
    start = time.perf_counter()
    checks = []
    ut = train(upper_triangle(10), TrainConfig(loss=Loss.ROUND, rank=1, thresholds_fixed=True,
                                               initial_thresholds=(0.5,), learning_rate=0.05, max_epochs=10000,
                                               patience=1000, seed=0))
    r = _full_rmse(ut.final_model, upper_triangle(10), LinkKind.GRF)
    checks.append((f"upper triangle n=10 k=1 Round: final RMSE {r:.4f} < 0.05 ({ut.epochs_run} epochs)", r < 0.05))

    band = band_diagonal(10, 3)
    bd = train(band, TrainConfig(loss=Loss.ROUND, rank=2, thresholds_fixed=True, initial_thresholds=(0.5,),
                                 learning_rate=0.05, max_epochs=10000, patience=1000, seed=0))
    r = _full_rmse(bd.final_model, band, LinkKind.GRF)
    checks.append((f"band diagonal n=10 w=3 k=2 Round: final RMSE {r:.4f} < 0.10", r < 0.10))

    wins, detail = 0, []
    for seed in range(5):
        y = random_low_grr(10, 2, 5, seed).matrix
        finals = {}
        for loss in (Loss.LINEAR, Loss.MULTI_SIGMOID):
            rep = train(y, TrainConfig(loss=loss, rank=2, learning_rate=0.05, max_epochs=10000, patience=500,
                                       seed=seed))
            finals[loss] = min(rep.rmse_curve)
        wins += finals[Loss.MULTI_SIGMOID] < finals[Loss.LINEAR]
        detail.append(f"{finals[Loss.MULTI_SIGMOID]:.3f}/{finals[Loss.LINEAR]:.3f}")
    checks.append((f"random low-GRR n=10 N=5 k=2: MultiSigmoid < Linear on {wins}/5 seeds >= 4 "
                   f"(ms/linear: {', '.join(detail)})", wins >= 4))
    elapsed = time.perf_counter() - start
    checks.append((f"runtime {elapsed:.1f} s < 120 s", elapsed < 120))
    report(2, checks, elapsed)


def _table(config_name, methods, fractions):
    cfg = load_config(CONFIGS / config_name, {"methods": methods, "fractions": fractions})
    return completion_table(run_complete(cfg))


def test_criterion_03_completion_upper_triangle(report):
    start = time.perf_counter()
    table = _table("complete_upper_triangle.conf", "linear, round:fixed", "0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8")
    rows = next(iter(table.values()))
    lin, rnd = rows["linear"], rows["round:fixed"]
    fractions = sorted(lin)
    elapsed = time.perf_counter() - start
    lin_text = " ".join(f"{f:g}:{lin[f].mean:.3f}" for f in fractions)
    rnd_text = " ".join(f"{f:g}:{rnd[f].mean:.3f}" for f in fractions)
    report(3, [
        (f"Linear mean RMSE in [0.40, 0.60] at every fraction: {lin_text}",
         all(0.40 <= lin[f].mean <= 0.60 for f in fractions)),
        (f"Round(tau=0.5) at 80% observed: {rnd[0.8].mean:.3f} <= 0.25", rnd[0.8].mean <= 0.25),
        (f"Round(tau=0.5) < Linear at every fraction >= 20%: {rnd_text}",
         all(rnd[f].mean < lin[f].mean for f in fractions if f >= 0.2)),
        (f"five seeds per cell: {min(c.trials for c in lin.values())} trials", lin[0.8].trials == 5),
        (f"runtime {elapsed:.1f} s < 600 s", elapsed < 600),
    ], elapsed)


def test_criterion_04_completion_random(report):
    start = time.perf_counter()
    table = _table("complete_random.conf", "linear, round:learned, multi_sigmoid:learned",
                   "0.3, 0.4, 0.5, 0.6, 0.7, 0.8")
    rows = next(iter(table.values()))
    checks = []
    for f in sorted(rows["linear"]):
        lin = rows["linear"][f].mean
        best_label = min(("round:learned", "multi_sigmoid:learned"), key=lambda m: rows[m][f].mean)
        best = rows[best_label][f].mean
        checks.append((f"fraction {f:g}: {best_label} {best:.3f} < 0.75 x Linear {lin:.3f} = {0.75 * lin:.3f}",
                       best < 0.75 * lin))
    elapsed = time.perf_counter() - start
    report(4, checks, elapsed)


def _fd_worst(model, obs, cfg, pad, h=1e-5):
    grads = dict(zip(("u", "v", "thresholds"), loss_gradients(model, obs, cfg, boundary_pad=pad)))
    worst = 0.0
    for name, grad in grads.items():
        for idx in np.ndindex(grad.shape):
            vals = []
            for step in (h, -h):
                parts = {"u": model.u.copy(), "v": model.v.copy(), "thresholds": model.thresholds.copy()}
                parts[name][idx] += step
                vals.append(loss_value(FactorModel(**parts), obs, cfg, pad))
            fd = (vals[0] - vals[1]) / (2 * h)
            worst = max(worst, abs(grad[idx] - fd) / max(1.0, abs(grad[idx])))
    return worst


def _near_kink(model, obs, pad, tol=1e-3):
    x = np.einsum("ek,ek->e", model.u[obs.rows], model.v[obs.cols])
    tau = model.thresholds
    padded = np.concatenate([[tau[0] - pad], tau, [tau[-1] + pad]])
    return np.min(np.abs(np.concatenate([x - padded[obs.values], x - padded[obs.values + 1]]))) < tol


def test_criterion_05_gradients(report):
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    checks = []
    for loss in Loss:
        worst, accepted, skipped = 0.0, 0, 0
        while accepted < 100:
            n, m, k = rng.integers(2, 5), rng.integers(2, 5), int(rng.integers(1, 4))
            n_levels = int(rng.integers(1, 5))
            tau = np.sort(rng.uniform(-2, 2, size=n_levels))
            if np.min(np.diff(tau), initial=1.0) < 0.05:
                continue
            model = FactorModel(rng.normal(size=(n, k)), rng.normal(size=(m, k)), tau)
            rows, cols = np.divmod(np.arange(n * m), m)
            obs = ObservationSet((n, m), rows, cols, rng.integers(0, n_levels + 1, size=n * m), n_levels=n_levels)
            pad = 3.0
            if loss is Loss.ROUND and _near_kink(model, obs, pad):
                skipped += 1
                continue
            cfg = TrainConfig(loss=loss, rank=k, l2_reg=float(rng.uniform(0, 0.1)),
                              sharpness=float(rng.uniform(0.5, 2.0)))
            worst = max(worst, _fd_worst(model, obs, cfg, pad))
            accepted += 1
        note = f", {skipped} near-kink draws excluded" if skipped else ""
        checks.append((f"{loss.value} loss: max relative error {worst:.2e} < 1e-4 over 100 configs{note}",
                       worst < 1e-4))
    worst = 0.0
    for _ in range(100):
        tau = np.sort(rng.uniform(-2, 2, size=rng.integers(1, 5)))
        s, x, h = rng.uniform(0.5, 2.0), rng.uniform(-3, 3), 1e-5
        dx, dtau = multi_sigmoid_grad(x, tau, s)
        fd = (multi_sigmoid(x + h, tau, s) - multi_sigmoid(x - h, tau, s)) / (2 * h)
        worst = max(worst, abs(dx - fd) / max(1.0, abs(dx)))
        for d in range(tau.size):
            tp, tm = tau.copy(), tau.copy()
            tp[d] += h
            tm[d] -= h
            fd = (multi_sigmoid(x, tp, s) - multi_sigmoid(x, tm, s)) / (2 * h)
            worst = max(worst, abs(dtau[d] - fd) / max(1.0, abs(dtau[d])))
    checks.append((f"multi_sigmoid_grad: max relative error {worst:.2e} < 1e-4 over 100 configs", worst < 1e-4))
    elapsed = time.perf_counter() - start
    checks.append((f"runtime {elapsed:.1f} s < 10 s", elapsed < 10))
    report(5, checks, elapsed)


def test_criterion_06_lemma_suite(report):
    start = time.perf_counter()
    rep = check_lemma_suite(500, seed=0)
    elapsed = time.perf_counter() - start
    counts = ", ".join(f"{k}={v}" for k, v in rep.passed.items())
    report(6, [
        (f"500 trials, {len(rep.violations)} violations ({counts})", rep.ok and rep.trials == 500),
        (f"runtime {elapsed:.1f} s < 30 s", elapsed < 30),
    ], elapsed)


def test_criterion_07_structures_vs_grr(report):
    ident, tri = structure_report(identity(10)), structure_report(upper_triangle(10))
    wi, wt = identity_witness(10), upper_triangle_witness(10)
    report(7, [
        (f"identity 10x10: structure bound {ident.bound} == 10", ident.bound == 10),
        (f"identity 10x10: witness rank {wi.rank} == 2, verified", wi.rank == 2 and verify_witness(identity(10), wi)),
        (f"upper triangle 10x10: structure bound {tri.bound} == 10", tri.bound == 10),
        (f"upper triangle 10x10: witness rank {wt.rank} == 1, verified",
         wt.rank == 1 and verify_witness(upper_triangle(10), wt)),
    ])


def test_criterion_08_rank1_oracle(report):
    start = time.perf_counter()
    ut = rank1_grf_representable(upper_triangle(3), [0.5])
    ident = rank1_grf_representable(identity(3), [0.5])
    elapsed = time.perf_counter() - start
    report(8, [
        ("3x3 upper triangle: representable with certified witness",
         ut.representable and ut.witness is not None and verify_witness(upper_triangle(3), ut.witness)),
        (f"3x3 identity: no witness at resolution {ident.resolution:g} ({ident.patterns_checked} sign patterns)",
         not ident.representable and ident.resolution <= 1e-3),
        (f"runtime {elapsed:.2f} s < 60 s", elapsed < 60),
    ], elapsed)


def test_criterion_09_uniqueness(report):
    start = time.perf_counter()
    planted = planted_uniqueness_violation()
    i, j = planted.planted
    rep = uniqueness_check(planted.observations, planted.model, boundary_pad=planted.boundary_pad)
    rec = rep.record(i, j)
    ce = find_counterexample(planted.observations, planted.model, i, j, boundary_pad=planted.boundary_pad)
    ce_ok = False
    if ce is not None:
        obs = planted.observations
        ref = ce.reference.u @ ce.reference.v.T
        alt = ce.alternative.u @ ce.alternative.v.T
        from grrmf.link import grf

        gr, ga = grf(ref, ce.reference.thresholds), grf(alt, ce.alternative.thresholds)
        ce_ok = (np.array_equal(gr[obs.rows, obs.cols], obs.values)
                 and np.array_equal(ga[obs.rows, obs.cols], obs.values) and gr[i, j] != ga[i, j])

    dense = well_margined_instance(seed=0)
    drep = uniqueness_check(dense.observations, dense.model, boundary_pad=dense.boundary_pad)
    agree = refit_agreement(dense.observations, dense.model, restarts=20, boundary_pad=dense.boundary_pad)
    elapsed = time.perf_counter() - start
    report(9, [
        (f"planted entry ({i}, {j}): sum|a| = {rec.coeff_sum:.3f}, necessary_ok = {rec.necessary_ok}",
         not rec.necessary_ok),
        ("counterexample completion agrees on observed entries and disagrees at the planted entry "
         + (f"(levels {ce.reference_level} vs {ce.alternative_level})" if ce is not None else "(none found)"), ce_ok),
        (f"well-margined instance: sufficient_ok on all {len(drep.records)} unobserved entries", drep.all_sufficient),
        (f"20 refits agree after GRF on 100% of unobserved entries (min {min(agree):.3f})",
         len(agree) == 20 and min(agree) == 1.0),
    ], elapsed)


def _movielens_path():
    env = os.environ.get("GRRMF_MOVIELENS")
    for candidate in ([Path(env)] if env else []) + [ROOT / "data" / "ml-100k" / "u.data"]:
        if candidate.is_file():
            return candidate
    return None


def test_criterion_10_movielens(report, capsys):
    path = _movielens_path()
    if path is None:
        with capsys.disabled():
            print("\nCRITERION 10: SKIPPED (MovieLens-100k u.data not found; set GRRMF_MOVIELENS)")
        pytest.skip("SKIPPED: MovieLens-100k file not available")
    start = time.perf_counter()
    cfg = load_config(CONFIGS / "recommend_movielens.conf",
                      {"dataset_path": str(path), "ranks": "10", "methods": "linear, multi_sigmoid:learned"})
    rows = {r.method.loss: r for r in run_recommend(cfg)}
    lin, ms = rows[Loss.LINEAR], rows[Loss.MULTI_SIGMOID]
    elapsed = time.perf_counter() - start
    report(10, [
        (f"MultiSigmoid k=10 validation RMSE {ms.val_rmse:.4f} <= 0.96", ms.val_rmse <= 0.96),
        (f"Linear k=10 validation RMSE {lin.val_rmse:.4f} in [0.95, 1.05]", 0.95 <= lin.val_rmse <= 1.05),
        (f"accuracy MultiSigmoid {ms.accuracy:.4f} > Linear {lin.accuracy:.4f}", ms.accuracy > lin.accuracy),
        (f"runtime {elapsed:.0f} s < 1800 s", elapsed < 1800),
    ], elapsed)
