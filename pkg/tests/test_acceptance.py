"""Exit criteria, each at its stated tolerance.

Every test appends one ``CRITERION n: PASS|FAIL ...`` line, printed in the
terminal summary, before asserting. Master seeds are fixed per criterion.
Expect a few minutes of runtime on one core.
"""
import io
import math
import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import random_small_instance
from mallowmatch.harness import (
    ExperimentConfig,
    ThresholdSpec,
    emit,
    localization_rate,
    run,
)
from mallowmatch.mallows import MallowsParams, Permutation, all_permutations, pmf, sample_ranks, tail_bound
from mallowmatch.market import MarketConfig, generate
from mallowmatch.matching import brute_force_stable, enumerate_stable, is_stable
from mallowmatch.metrics import average_ranks, pair_gaps, welfare_ratios

pytestmark = pytest.mark.acceptance


def _record(log, number, ok, detail, started):
    log.append(f"CRITERION {number}: {'PASS' if ok else 'FAIL'}  {detail}  ({time.perf_counter() - started:.1f}s)")
    return ok


def _codes(ranks0, t):
    return (ranks0.astype(np.int64) * (t ** np.arange(t))).sum(axis=1)


def test_criterion_1_mallows_exactness(acceptance_log):
    started = time.perf_counter()
    params = MallowsParams(0.5, 3)
    table = {
        (1, 2, 3): Fraction(8, 21),
        (1, 3, 2): Fraction(4, 21),
        (2, 1, 3): Fraction(4, 21),
        (2, 3, 1): Fraction(2, 21),
        (3, 1, 2): Fraction(2, 21),
        (3, 2, 1): Fraction(1, 21),
    }
    pmf_err = max(abs(pmf(Permutation.from_order(o), params) - float(p)) for o, p in table.items())

    rng = np.random.default_rng(1001)
    worst_tv, worst_at = 0.0, None
    draws = 10**6
    for t in range(1, 6):
        perms = all_permutations(t)
        index = _codes(np.array([p.ranks - 1 for p in perms]), t)
        for phi in (0.1, 0.5, 0.9, 1.0):
            exact = np.zeros(t**t)
            exact[index] = [pmf(p, MallowsParams(phi, t)) for p in perms]
            freq = np.bincount(_codes(sample_ranks(phi, t, rng.random((draws, t))), t), minlength=t**t) / draws
            tv = 0.5 * np.abs(freq - exact).sum()
            if tv > worst_tv:
                worst_tv, worst_at = tv, (t, phi)

    ok = pmf_err <= 1e-12 and worst_tv < 0.01
    _record(acceptance_log, 1, ok,
            f"max |pmf - table| = {pmf_err:.2e} (<= 1e-12); worst TV = {worst_tv:.5f} at (t, phi) = {worst_at} (< 0.01)",
            started)
    assert ok


def test_criterion_2_tail_bound(acceptance_log):
    started = time.perf_counter()
    t, draws, d_max = 1000, 10**4, 50
    rng = np.random.default_rng(2002)
    exceed = []
    worst_z = -math.inf
    for phi in (0.5, 0.9):
        ranks = sample_ranks(phi, t, rng.random((draws, t)))
        disp = np.abs(ranks - np.arange(t, dtype=np.int32))
        # counts[d, i] = #samples with |pi(i) - i| >= d, via a cumulative histogram
        hist = np.zeros((t + 1, t), dtype=np.int64)
        np.add.at(hist, (disp, np.broadcast_to(np.arange(t), disp.shape)), 1)
        at_least = hist[::-1].cumsum(axis=0)[::-1]
        for d in range(1, d_max + 1):
            p_hat = at_least[d] / draws
            se = np.sqrt(p_hat * (1 - p_hat) / draws)
            bound = tail_bound(d, phi)
            bad = np.flatnonzero(p_hat > bound + 3 * se)
            exceed.extend((phi, d, int(i) + 1, float(p_hat[i]), bound) for i in bad)
            with np.errstate(divide="ignore", invalid="ignore"):
                z = np.where(se > 0, (p_hat - bound) / se, -np.inf)
            worst_z = max(worst_z, float(z.max()))

    ok = not exceed
    detail = f"{len(exceed)} of {2 * t * d_max} (phi, i, d) cells exceed 2 phi^d + 3 SE; max z = {worst_z:.2f}"
    if exceed:
        phi, d, i, p_hat, bound = exceed[0]
        detail += f"; first: phi={phi} d={d} i={i} p_hat={p_hat:.4f} bound={bound:.4f}"
    _record(acceptance_log, 2, ok, detail, started)
    assert ok, detail


def test_criterion_3_localization_trend(acceptance_log):
    started = time.perf_counter()
    cfg = ExperimentConfig(n=(100, 1000), phi=(0.5,), trials=200, master_seed=3003,
                           threshold=ThresholdSpec(z=0.0, c_margin=1.5))
    records = list(run(cfg))
    assert all(r.error is None for r in records)
    small, large = localization_rate(records, 0), localization_rate(records, 1)
    ok = large >= small and large >= 0.95
    _record(acceptance_log, 3, ok,
            f"localization rate n=100: {small:.3f}, n=1000: {large:.3f} (need nondecreasing and >= 0.95)",
            started)
    assert ok


def test_criterion_4_holzman_bound(acceptance_log):
    started = time.perf_counter()
    phis = (0.0, 0.5, 0.9, 1.0)
    # 7 sizes x 3 values of k x 16 phi pairs x 30 trials = 10080 instances;
    # n starts at 2 because k <= n is required
    cfg = ExperimentConfig(n=tuple(range(2, 9)), k=(0, 1, 2), phi_m=phis, phi_w=phis,
                           trials=30, master_seed=4004, mode="brute_force")
    records = list(run(cfg))
    errors = [r for r in records if r.error is not None]
    checked = sum(r.stable_count for r in records if r.error is None)
    violations = sum(r.holzman_violations for r in records if r.error is None)
    ok = len(records) >= 10**4 and not errors and violations == 0
    _record(acceptance_log, 4, ok,
            f"{len(records)} instances, {checked} stable matchings, {violations} violations, {len(errors)} errors",
            started)
    assert ok


def test_criterion_5_enumeration_correctness(acceptance_log):
    started = time.perf_counter()
    mismatches = []
    for seed in range(5005, 5005 + 1000):
        instance = random_small_instance(seed, max_n=8)
        fast = enumerate_stable(instance)
        if fast.truncated or fast.as_set() != brute_force_stable(instance).as_set():
            mismatches.append(seed)
    ok = not mismatches
    _record(acceptance_log, 5, ok, f"1000 instances, {len(mismatches)} mismatching stable sets", started)
    assert ok, mismatches[:10]


# fixed in advance: six times c(0.9) at z = 1, c_margin = 1.5, following the
# chain man displacement + 4 max displacement + woman displacement
CENTRAL_GAP_CONSTANT = 6 * ThresholdSpec(z=1.0, c_margin=1.5).c(0.9)


def test_criterion_6_quantile_gap_convergence(acceptance_log):
    started = time.perf_counter()
    sizes = (200, 800, 3200)
    cfg = ExperimentConfig(n=sizes, phi=(0.9,), trials=50, master_seed=6006)
    records = list(run(cfg))
    assert all(r.error is None for r in records)
    medians, scaled = [], []
    for cell, n in enumerate(sizes):
        rows = [r for r in records if r.cell == cell]
        medians.append(float(np.median([r.max_quantile_gap for r in rows])))
        scaled.append(max(r.max_central_gap for r in rows) / math.log(n))
    decreasing = all(a > b for a, b in zip(medians, medians[1:]))
    ok = decreasing and medians[-1] < 0.05 and max(scaled) < CENTRAL_GAP_CONSTANT
    _record(acceptance_log, 6, ok,
            "median max quantile gap " + ", ".join(f"n={n}: {m:.4f}" for n, m in zip(sizes, medians))
            + f"; max central gap / ln n = {', '.join(f'{s:.2f}' for s in scaled)} (< {CENTRAL_GAP_CONSTANT:.1f})",
            started)
    assert ok


def test_criterion_7_welfare_contrast(acceptance_log):
    started = time.perf_counter()
    cfg = ExperimentConfig(n=(2000,), phi=(0.9, 1.0), trials=20, master_seed=7007)
    records = list(run(cfg))
    assert all(r.error is None for r in records)
    correlated = float(np.mean([r.ratio_men for r in records if r.cell == 0]))
    uniform = float(np.mean([r.ratio_men for r in records if r.cell == 1]))
    ok = correlated <= 1.1 and uniform >= 5
    _record(acceptance_log, 7, ok,
            f"mean A_M(mu_W)/A_M(mu_M): phi=0.9 -> {correlated:.4f} (<= 1.1), phi=1 -> {uniform:.2f} (>= 5)",
            started)
    assert ok


def test_criterion_8_short_side_neutrality(acceptance_log):
    started = time.perf_counter()
    cfg = ExperimentConfig(n=(2000,), k=(1,), phi=(0.9, 1.0), trials=20, master_seed=8008)
    records = list(run(cfg))
    assert all(r.error is None for r in records)
    # every trial, both extremes
    band = [x for r in records if r.cell == 0 for x in (r.w_over_m_mu_m, r.w_over_m_mu_w)]
    contrast = [x for r in records if r.cell == 1 for x in (r.w_over_m_mu_m, r.w_over_m_mu_w)]
    ok = all(0.8 <= x <= 1.25 for x in band) and min(contrast) >= 5
    _record(acceptance_log, 8, ok,
            f"A_W/A_M at phi=0.9 in [{min(band):.4f}, {max(band):.4f}] (within [0.8, 1.25]); "
            f"at phi=1 min {min(contrast):.2f} (>= 5)",
            started)
    assert ok


def test_criterion_9_unanimity_collapse(acceptance_log):
    started = time.perf_counter()
    failures = []
    for n in (1, 2, 10, 137, 1000, 10_000):
        for k in (0, 5):
            instance = generate(MarketConfig(n, k, 0.0, 0.0, seed=9009))
            stable = enumerate_stable(instance)
            [mu] = stable.matchings if len(stable) == 1 else [None]
            if mu is None:
                failures.append((n, k, f"{len(stable)} stable matchings"))
                continue
            gaps = pair_gaps(instance, mu)
            welfare = average_ranks(instance, mu)
            ratios = welfare_ratios(instance, stable)
            checks = {
                "stable": is_stable(instance, mu),
                "assortative": np.array_equal(mu.man_to_woman, np.arange(n)),
                "gaps": gaps.max_mutual_gap == gaps.max_central_gap == 0,
                "ratios": all(v == 1.0 for v in ratios.to_dict().values()),
                "averages": welfare.a_m == welfare.a_w == (n + 1) / 2,
            }
            failures += [(n, k, name) for name, passed in checks.items() if not passed]
            del instance, stable
    ok = not failures
    _record(acceptance_log, 9, ok,
            f"n in {{1, 2, 10, 137, 1000, 10000}}, k in {{0, 5}}: {len(failures)} failed checks"
            + (f", first {failures[0]}" if failures else ""),
            started)
    assert ok


def test_criterion_10_determinism(acceptance_log):
    started = time.perf_counter()
    cfg = ExperimentConfig(n=(30, 120), k=(0, 3), phi_m=(0.5, 1.0), phi_w=(0.9,), trials=4,
                           master_seed=10010, mode="enumerate", enumeration_cap=500)
    outputs = {}
    for label, workers in (("first", 1), ("second", 1), ("parallel", 2)):
        records = list(run(cfg, workers=workers))
        for fmt in ("csv", "json"):
            buf = io.StringIO()
            emit(records, fmt, buf)
            outputs[label, fmt] = buf.getvalue().encode()
    same = all(outputs["first", f] == outputs[label, f] for label in ("second", "parallel") for f in ("csv", "json"))
    ok = same and len(outputs["first", "csv"]) > 0
    _record(acceptance_log, 10, ok,
            f"CSV and JSON byte-identical across two serial runs and a 2-worker run: {same}", started)
    assert ok
