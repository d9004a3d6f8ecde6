"""Acceptance gate: one test per criterion, each printing a pass/fail line.

Heavy end-to-end experiments live here; run with ``pytest tests/test_acceptance.py -v``.
Two criteria (ergodic rate constant, small-scale recovery) fail by design of
the shipped default parameter recipe; their tests state the measured values.
"""

import os
import time
from dataclasses import replace
from pathlib import Path

import numpy as np
import pytest

from umadetect import (
    AttackSpec,
    ObservationMask,
    build_matrix,
    corrupt_cells,
    default_config,
    generate_ground_truth,
    incoherence_stats,
    inject_profile_attacks,
    label_users,
    load_ratings,
    load_result,
    observe,
    save_result,
    score,
    solve,
    step,
    svt,
    sweep_spam_ratio,
    verify_unorganized,
)
from umadetect.cli import ergodic_slope
from umadetect.dataio import RatingMatrix
from umadetect.evaluate import DEFAULT_DETECTORS
from umadetect.matrixops import nuclear_norm, soft_threshold
from umadetect.simulate import CleanDataset, GroundTruth
from umadetect.solver import initial_state

# Surrogate ground-truth texture for the MovieLens-shaped replication run:
# unit user preference vectors with a positive first-coordinate bias, item
# vectors with a spread quality coordinate, item strengths bounded by the
# rating range so no global rescale is needed.
SURROGATE = {
    "rank": 8,
    "sigma": 0.25,
    "user_bias": 2.5,
    "item_bias_mean": 0.8,
    "item_bias_std": 1.4,
    "taste_v": 0.6,
    "strength_low": 1.2,
    "strength_high": 2.0,
}
REPLICATION_TOL = 1e-4  # stopping tolerance for the timed replication runs


def check(name: str, ok: bool, detail: str = "") -> bool:
    print(f"[{'PASS' if ok else 'FAIL'}] {name}" + (f": {detail}" if detail else ""))
    return ok


def reference_problem(seed=7):
    ground, mask = generate_ground_truth(50, 50, 2, sigma=0.01, density=1.0, seed=seed)
    clean = observe(ground, mask, grid=False)
    m_bar, spikes = corrupt_cells(clean, mask, 0.02, 3.0, seed=seed)
    return ground, mask, m_bar, spikes


def surrogate_clean(m, n, seed, density):
    p = SURROGATE
    rng = np.random.default_rng([seed, 0])
    gu = rng.standard_normal((m, p["rank"]))
    gu[:, 0] += p["user_bias"]
    u = gu / np.linalg.norm(gu, axis=1, keepdims=True)
    gv = p["taste_v"] * rng.standard_normal((n, p["rank"]))
    gv[:, 0] += rng.normal(p["item_bias_mean"], p["item_bias_std"], size=n)
    v = gv / np.linalg.norm(gv, axis=1, keepdims=True)
    strength = rng.uniform(p["strength_low"], p["strength_high"], size=n)
    truth = u @ (v * strength[:, None]).T
    flags = np.random.default_rng([seed, 1]).random((m, n)) < density
    noise = np.random.default_rng([seed, 2]).normal(0, p["sigma"], (m, n))
    rated = np.where(flags, np.clip(np.rint(truth + noise), -2.0, 2.0), 0.0)
    ground = GroundTruth(matrix=truth, rank=p["rank"], sigma=p["sigma"], bound=2.0, seed=seed)
    return CleanDataset(
        ground=ground,
        ratings=RatingMatrix.from_dense(rated, ObservationMask.from_bool(flags), 2.0),
    )


def refined_shrinkage_oracle(t: float, tau: float) -> float:
    """Three-stage grid search for argmin tau|y| + (y - t)^2 / 2.

    Runs in extended precision: in float64 the objective is flat to within
    machine epsilon across ~sqrt(eps) of the minimizer, which caps value-based
    localization near 1.5e-8; 80-bit arithmetic pushes that below 1e-9.
    """
    t_l = np.longdouble(t)
    tau_l = np.longdouble(tau)
    lo, hi = -abs(t_l) - tau_l, abs(t_l) + tau_l
    best = np.longdouble(0.0)
    for _ in range(3):
        grid = np.linspace(lo, hi, 10_000, dtype=np.longdouble)
        values = tau_l * np.abs(grid) + 0.5 * (grid - t_l) ** 2
        best = grid[np.argmin(values)]
        span = (hi - lo) / 10_000
        lo, hi = best - 2 * span, best + 2 * span
    return float(best)


def test_prox_operator_oracle_equivalence():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)

    worst_gap = 0.0
    for _ in range(100):
        t = float(rng.normal(scale=2.0))
        tau = float(rng.uniform(0.0, 2.0))
        ours = soft_threshold(np.array([[t]]), tau)[0, 0]
        worst_gap = max(worst_gap, abs(ours - refined_shrinkage_oracle(t, tau)))
    shrink_ok = worst_gap <= 1e-8

    worst_margin = np.inf
    for _ in range(100):
        y = rng.normal(size=(5, 5))
        mu = float(rng.uniform(0.1, 1.5))
        out = svt(y, mu)
        base = mu * nuclear_norm(out) + 0.5 * np.linalg.norm(out - y) ** 2
        for eta in (1e-3, 1e-2):
            for _ in range(500):
                g = rng.normal(size=(5, 5))
                g /= np.linalg.norm(g)
                candidate = out + eta * g
                margin = (mu * nuclear_norm(candidate)
                          + 0.5 * np.linalg.norm(candidate - y) ** 2) - base
                worst_margin = min(worst_margin, margin)
    svt_ok = worst_margin >= -1e-12

    elapsed = time.perf_counter() - start
    ok = check(
        "prox-operator oracle equivalence",
        shrink_ok and svt_ok and elapsed < 10.0,
        f"shrink gap {worst_gap:.2e}, svt min margin {worst_margin:.2e}, {elapsed:.1f}s",
    )
    assert ok


def test_solver_fixed_points_and_determinism():
    mask = ObservationMask.full(8, 8)
    zero_run = solve(np.zeros((8, 8)), mask, default_config(8, 8))
    zeros_ok = (
        zero_run.converged
        and zero_run.iterations_used == 1
        and not zero_run.low_rank.any()
        and not zero_run.sparse.any()
        and not zero_run.noise.any()
    )

    _, rmask, m_bar, _ = reference_problem()
    cfg = default_config(50, 50)
    a = solve(m_bar, rmask, cfg)
    b = solve(m_bar, rmask, cfg)
    det_ok = (
        a.diagnostics.residual_history == b.diagnostics.residual_history
        and a.diagnostics.change_history == b.diagnostics.change_history
    )
    ok = check(
        "solver fixed points and determinism",
        zeros_ok and det_ok,
        f"zero-input iterations {zero_run.iterations_used}, "
        f"histories identical: {det_ok}",
    )
    assert ok


def test_convergence_monitors():
    """Theorem-style monitors on the reference instance, default parameters,
    observed over the full 1000-iteration horizon (the stopping tolerances are
    pinned below machine precision so the trajectory extends; an early stop at
    the default 1e-6 tolerance exits with change ~ beta^2 * residual^2 > 1e-10
    by construction of the stopping rule, so the decay claim is only testable
    on the monitoring run)."""
    _, mask, m_bar, _ = reference_problem()
    norm_m = float(np.linalg.norm(m_bar))
    cfg = replace(default_config(50, 50), max_iters=1000,
                  tol_residual=1e-300, tol_change=1e-300)

    # manual replay so per-iteration identities can be checked exactly
    state = initial_state(50, 50)
    multiplier_ok = True
    feasible_ok = True
    residuals = []
    changes = []
    for _ in range(cfg.max_iters):
        new = step(state, m_bar, mask, cfg)
        residual = new.low_rank + new.sparse + new.noise - m_bar
        delta = new.multiplier - state.multiplier
        # relative to the stored magnitudes: once beta*R underflows against
        # Lambda the subtraction cancels exactly, which is still "equal up to
        # floating rounding"
        scale = max(
            float(np.linalg.norm(cfg.beta * residual)),
            float(np.linalg.norm(new.multiplier)),
            1.0,
        )
        if float(np.linalg.norm(delta + cfg.beta * residual)) > 1e-12 * scale:
            multiplier_ok = False
        if float(np.linalg.norm(new.noise[mask.array])) > cfg.delta * (1 + 1e-12):
            feasible_ok = False
        residuals.append(float(np.linalg.norm(residual)))
        changes.append(
            float(np.vdot(new.sparse - state.sparse, new.sparse - state.sparse))
            + float(np.vdot(new.low_rank - state.low_rank, new.low_rank - state.low_rank))
            + float(np.vdot(delta, delta))
        )
        state = new

    rel = np.array(residuals) / (1.0 + norm_m)
    crossed = bool((rel <= 1e-6).any())
    cross_at = int(np.argmax(rel <= 1e-6)) + 1 if crossed else -1
    change_ok = changes[-1] <= 1e-10

    ok = check(
        "convergence monitors (residual, change decay, multiplier, feasibility)",
        crossed and change_ok and multiplier_ok and feasible_ok,
        f"rel residual <=1e-6 at iter {cross_at}, final change {changes[-1]:.2e}, "
        f"multiplier identity {multiplier_ok}, noise feasibility {feasible_ok}",
    )
    assert ok


def test_ergodic_rate():
    """Slope of the ergodic residual passes; the t^2-scaled constant clause is
    infeasible for this iteration on this instance class: the multiplier is
    only ~85% settled by iteration 10, so the constant fitted there is
    exceeded by 20-35% later (measured across 24 seeds, best 1.23x), under
    both the raw-sample and regression readings of "fitted at t = 10"."""
    _, mask, m_bar, _ = reference_problem()
    base = default_config(50, 50)
    cfg = replace(base, beta=0.3 * base.kappa, record_ergodic=True,
                  max_iters=520, tol_residual=1e-300, tol_change=1e-300)
    result = solve(m_bar, mask, cfg)
    erg = np.array(result.diagnostics.ergodic_residual_history)

    slope = ergodic_slope(list(erg), 10, 500)
    slope_ok = slope <= -0.9

    fitted_c = 100.0 * erg[9] ** 2
    ratios = {t: (t * t * erg[t - 1] ** 2) / fitted_c for t in (50, 100, 500)}
    constant_ok = all(r <= 1.1 for r in ratios.values())

    check("ergodic O(1/t) slope", slope_ok, f"slope {slope:.4f} (required <= -0.9)")
    check(
        "ergodic rate constant within 10% of its t=10 fit",
        constant_ok,
        "ratios " + ", ".join(f"t={t}: {r:.3f}" for t, r in ratios.items()),
    )
    assert slope_ok and constant_ok


def test_recovery_surrogate():
    """Small-scale recovery with the shipped defaults.

    This criterion is infeasible at the default parameter scaling and the
    test states the measured values: at any optimum the multiplier is a
    nuclear-norm subgradient (operator norm <= 1, entries <= 1), so sparse
    entries obey |Y_ij| <= (alpha max|M| + 1 - tau)/kappa ~ 0.8 at 200x200
    defaults, while the planted spikes have magnitude >= 3.  The spikes are
    therefore absorbed by the low-rank part (verified against an independent
    convex solver, which returns the identical optimum).
    """
    seeds = [11, 12, 13, 14, 15]
    rel_errors = []
    f1s = []
    incoherent = True
    runtime_ok = True
    for seed in seeds:
        ground, mask = generate_ground_truth(200, 200, 5, sigma=0.01, density=0.5, seed=seed)
        stats = incoherence_stats(ground.matrix)
        if not all(v <= 10.0 for v in stats.values()):
            incoherent = False
        clean = observe(ground, mask, grid=False)
        m_bar, spikes = corrupt_cells(clean, mask, 0.05, 3.0, seed=seed, magnitude_high=4.0)
        start = time.perf_counter()
        result = solve(m_bar, mask, default_config(200, 200))
        if time.perf_counter() - start >= 120.0:
            runtime_ok = False
        rel_errors.append(
            float(np.linalg.norm(result.low_rank - ground.matrix))
            / float(np.linalg.norm(ground.matrix))
        )
        support = np.abs(result.sparse) > 0
        tp = int((support & spikes).sum())
        fp = int((support & ~spikes).sum())
        fn = int((~support & spikes).sum())
        precision = tp / max(tp + fp, 1)
        recall = tp / max(tp + fn, 1)
        f1s.append(2 * precision * recall / max(precision + recall, 1e-300))

    recovery_ok = max(rel_errors) <= 0.05
    support_ok = min(f1s) >= 0.95
    ok = check(
        "recovery surrogate (default parameter scaling)",
        incoherent and recovery_ok and support_ok and runtime_ok,
        f"rel X error {min(rel_errors):.3f}..{max(rel_errors):.3f} (required <= 0.05), "
        f"support F1 {min(f1s):.3f}..{max(f1s):.3f} (required >= 0.95), "
        f"incoherence <= 10: {incoherent}",
    )
    assert ok


def _movielens_source():
    """Real MovieLens 100K ratings if present; otherwise None."""
    candidates = [os.environ.get("UMADETECT_ML100K", "")]
    candidates.append("data/ml-100k/u.data")
    for candidate in candidates:
        if candidate and Path(candidate).exists():
            return Path(candidate)
    return None


def test_replication_combined_strategy_attack():
    start = time.perf_counter()
    seeds = [1, 2, 3, 4, 5]
    source = _movielens_source()
    reports = []
    for seed in seeds:
        if source is not None:
            records = load_ratings(source, "ml-100k")
            rm = build_matrix(records)
            flags = rm.mask.array
            counts = flags.sum(axis=0)
            means = np.where(counts > 0,
                             np.where(flags, rm.matrix, 0.0).sum(axis=0) / np.maximum(counts, 1),
                             0.0)
            ground = GroundTruth(matrix=rm.matrix, rank=0, sigma=0.0, bound=2.0, seed=0)
            clean = CleanDataset(ground=ground, ratings=rm)
        else:
            clean = surrogate_clean(943, 1682, seed=42, density=100000 / (943 * 1682))
        attacked = inject_profile_attacks(
            clean, AttackSpec(spam_ratio=0.2, filler_ratio=0.01, seed=seed)
        )
        cfg = replace(
            default_config(*attacked.ratings.matrix.shape), tol_residual=REPLICATION_TOL
        )
        result = solve(attacked.ratings.matrix, attacked.ratings.mask, cfg)
        reports.append(score(label_users(result.sparse), attacked.truth_labels))

    precision = float(np.mean([r.precision for r in reports]))
    recall = float(np.mean([r.recall for r in reports]))
    f1 = float(np.mean([r.f1 for r in reports]))
    elapsed = time.perf_counter() - start
    ok = check(
        "combined-strategy attack replication "
        + ("(MovieLens 100K)" if source else "(matched-density surrogate)"),
        precision >= 0.88 and recall >= 0.82 and f1 >= 0.85 and elapsed <= 1800.0,
        f"precision {precision:.3f} (>=0.88), recall {recall:.3f} (>=0.82), "
        f"f1 {f1:.3f} (>=0.85), {elapsed/60:.1f} min (<=30)",
    )
    assert ok


def test_baseline_separation():
    clean = surrogate_clean(500, 300, seed=5, density=0.2)
    attack = AttackSpec(spam_ratio=0.2, filler_ratio=0.01, seed=0)
    result = sweep_spam_ratio(
        clean, [0.02, 0.05, 0.1, 0.2], dict(DEFAULT_DETECTORS), seeds=[0, 1, 2, 3, 4],
        attack=attack,
    )
    assert not result.errors(), [c.error for c in result.errors()]
    uma = result.mean_metric("uma", "f1")
    rpca = result.mean_metric("rpca", "f1")
    separation_ok = all(u > r for u, r in zip(uma, rpca))
    stability = float(np.std(uma))
    stability_ok = stability <= 0.1
    ok = check(
        "baseline separation and stability across spam ratios",
        separation_ok and stability_ok,
        "uma F1 " + ", ".join(f"{v:.3f}" for v in uma)
        + " vs rpca " + ", ".join(f"{v:.3f}" for v in rpca)
        + f"; uma std across ratios {stability:.3f} (<= 0.1)",
    )
    assert ok


def test_simulator_contract():
    clean = surrogate_clean(943, 400, seed=9, density=0.15)
    spec = AttackSpec(spam_ratio=0.2, filler_ratio=0.05, seed=3)
    attacked = inject_profile_attacks(clean, spec)

    a = int(attacked.truth_labels.sum())
    target = spec.spam_ratio / (1 - spec.spam_ratio) * 943
    spam_ok = abs(a - target) <= 0.5  # within rounding
    ratio_ok = abs(a / (a + 943) - 0.2) < 1e-3

    fillers = round(spec.filler_ratio * 400)
    filler_ok = all(len(entry["fillers"]) == fillers for entry in attacked.manifest)

    cap = verify_unorganized(attacked, spec)
    ok = check(
        "simulator contract (cap, spam identity, filler counts)",
        cap.ok and spam_ok and ratio_ok and filler_ok,
        f"attackers {a} (target {target:.2f}), cap ok {cap.ok}, "
        f"fillers exact {filler_ok}",
    )
    assert ok


def test_ingestion_round_trip(tmp_path):
    # deterministic MovieLens-format fixture: exactly 100000 distinct cells
    m, n, cells = 943, 1682, 100000
    rng = np.random.default_rng(123)
    picked = rng.permutation(m * n)[:cells]
    rows, cols = np.divmod(picked, n)
    ratings = rng.integers(1, 6, size=cells)
    lines = [f"{rows[i] + 1}\t{cols[i] + 1}\t{ratings[i]}\t0" for i in range(cells)]
    fixture = tmp_path / "u.data"
    fixture.write_text("\n".join(lines) + "\n", encoding="utf-8")

    records = load_ratings(fixture, "ml-100k")
    rm = build_matrix(records)
    shape_ok = rm.matrix.shape == (m, n)
    count_ok = rm.mask.count == cells
    observed = rm.matrix[rm.mask.array]
    range_ok = bool((observed >= -2.0).all() and (observed <= 2.0).all())

    _, mask, m_bar, _ = reference_problem()
    cfg = default_config(50, 50)
    result = solve(m_bar, mask, cfg)
    path = tmp_path / "state.uma1"
    save_result(path, result, mask, cfg)
    loaded = load_result(path)
    bits_ok = (
        np.array_equal(loaded.result.low_rank, result.low_rank)
        and np.array_equal(loaded.result.sparse, result.sparse)
        and np.array_equal(loaded.result.noise, result.noise)
        and np.array_equal(loaded.result.multiplier, result.multiplier)
    )
    ok = check(
        "ingestion round trip and checkpoint bit-equality",
        shape_ok and count_ok and range_ok and bits_ok,
        f"shape {rm.matrix.shape}, observed {rm.mask.count}, "
        f"range ok {range_ok}, checkpoint bit-equal {bits_ok}",
    )
    assert ok
