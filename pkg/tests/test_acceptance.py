"""Acceptance suite: one test per release criterion, each printing PASS/FAIL.

The quantitative checks run at desk scale (fewer blocks/samples than a full
study) with tolerances fixed here.  Heavy experiment output is cached under
tests/_artifacts so a partial rerun does not repeat hours of optimization;
delete that directory for a from-scratch run.
"""

import json
import os
import time

import numpy as np
import pytest

from pg_oracle import random_instance, reference_objective
from rsmaopt import qcqp
from rsmaopt.channel import ChannelConfig, draw_saa_samples, generate_block
from rsmaopt.experiments import (
    AGGREGATE,
    ExperimentSpec,
    ResultRecord,
    StrategyRun,
    estimate_dof,
    hull_contains,
    mulp_dof_target,
    records_to_csv,
    region_points,
    rs_dof_target,
    run_esr_curve,
    run_multicast_study,
    run_rate_region,
    upper_right_hull,
)
from rsmaopt.optimizer import AoConfig, ao_optimize
from rsmaopt.qcqp import constraint_violation
from rsmaopt.rates import PrecoderSet, instantaneous_rate, mmse_equalizer, mmse_weight, mse
from rsmaopt.strategy import Strategy, make_layout

ARTIFACTS = os.path.join(os.path.dirname(__file__), "_artifacts")

ALL_STRATEGIES = [
    (Strategy.MU_LP, None),
    (Strategy.SC_SIC, None),
    (Strategy.SC_SIC_PER_GROUP, ((0,), (1,))),
    (Strategy.ONE_LAYER_RS, None),
    (Strategy.GENERALIZED_RS, None),
    (Strategy.DPC, None),
    (Strategy.ONE_DPCRS, None),
    (Strategy.M_DPCRS, None),
]


def report(name: str, ok: bool, detail: str) -> None:
    print(f"\nACCEPTANCE {name}: {'PASS' if ok else 'FAIL'} ({detail})")


def _cache_records(key: str, build):
    """Build-or-load a heavy experiment's records."""
    os.makedirs(ARTIFACTS, exist_ok=True)
    path = os.path.join(ARTIFACTS, f"{key}.json")
    if os.path.exists(path):
        with open(path) as fh:
            raw = json.load(fh)
        return [
            ResultRecord(**{**r, "weights": tuple(r["weights"]), "er_user": tuple(r["er_user"])})
            for r in raw
        ]
    records = build()
    with open(path, "w") as fh:
        json.dump([r.__dict__ for r in records], fh)
    return records


# -- criterion 1: rate-WMMSE identity --------------------------------------------


def test_rate_wmmse_identity():
    start = time.perf_counter()
    rng = np.random.default_rng(2024)
    checked = 0
    worst = 0.0
    while checked < 1000:
        for strategy, groups in ALL_STRATEGIES:
            k = 3 if strategy in (Strategy.GENERALIZED_RS, Strategy.M_DPCRS) else 2
            grp = ((0, 1), (2,)) if (groups and k == 3) else groups
            cfg = ChannelConfig(
                num_users=k, num_tx_antennas=4, user_variances=(1.0,) * k,
                csit_alpha=0.6, snr_db=float(rng.uniform(5, 30)),
                rng_seed=int(rng.integers(0, 2**31)),
            )
            block = generate_block(cfg, 0)
            samples = draw_saa_samples(block, cfg, 2)
            layout = make_layout(strategy, k, groups=grp if strategy == Strategy.SC_SIC_PER_GROUP else None)
            vectors = {}
            for s in layout.streams:
                v = rng.standard_normal(4) + 1j * rng.standard_normal(4)
                vectors[s] = np.sqrt(cfg.power_linear / len(layout.streams)) * v / np.linalg.norm(v)
            precoders = PrecoderSet(vectors=vectors)
            for user in range(k):
                for stream in layout.decode_chain(user):
                    m = int(rng.integers(0, 2))
                    ch = (samples.samples[m, :, user], samples.errors[m, :, user])
                    g = mmse_equalizer(layout, precoders, ch, user, stream)
                    w = mmse_weight(layout, precoders, ch, user, stream)
                    xi = w * mse(layout, precoders, ch, user, stream, g) - np.log2(w)
                    rate = instantaneous_rate(layout, precoders, ch, user, stream)
                    worst = max(worst, abs(xi - (1.0 - rate)))
                    checked += 1
    elapsed = time.perf_counter() - start
    ok = worst <= 1e-9 and elapsed < 10.0
    report("rate-wmmse-identity", ok, f"{checked} tuples, worst |delta| {worst:.2e}, {elapsed:.1f}s")
    assert worst <= 1e-9
    assert elapsed < 10.0


# -- criterion 2: QCQP vs brute-force oracle --------------------------------------


def test_qcqp_oracle():
    start = time.perf_counter()
    rng = np.random.default_rng(7)
    worst_obj = 0.0
    worst_feas = 0.0
    for _ in range(50):
        problem = random_instance(rng)
        sol = qcqp.solve(problem)
        assert sol.status == "optimal"
        ref = reference_objective(problem)
        worst_obj = max(worst_obj, abs(sol.objective_value - ref))
        worst_feas = max(worst_feas, constraint_violation(problem, sol.precoders, sol.allocations))
    elapsed = time.perf_counter() - start
    ok = worst_obj <= 1e-4 and worst_feas <= 1e-7 and elapsed < 60.0
    report("qcqp-oracle", ok,
           f"50 instances, worst obj diff {worst_obj:.2e}, worst violation {worst_feas:.2e}, {elapsed:.1f}s")
    assert worst_obj <= 1e-4
    assert worst_feas <= 1e-7
    assert elapsed < 60.0


# -- criteria 3 & 4: AO behaviour over 20 seeds ------------------------------------

SEEDS = list(range(20))


def _seed_setup(seed: int, k: int = 2, m: int = 50):
    cfg = ChannelConfig(
        num_users=k, num_tx_antennas=4, user_variances=(1.0,) * k,
        csit_alpha=0.6, snr_db=20.0, rng_seed=seed,
    )
    block = generate_block(cfg, 0)
    samples = draw_saa_samples(block, cfg, m)
    return cfg, block, samples


def test_ao_monotonicity():
    start = time.perf_counter()
    config = AoConfig(epsilon=1e-4, max_iters=100)
    total, converged, drops = 0, 0, 0
    worst_drop = 0.0
    for seed in SEEDS:
        cfg, block, samples = _seed_setup(seed)
        for strategy, groups in ALL_STRATEGIES:
            layout = make_layout(strategy, 2, pi=(0, 1),
                                 groups=groups if strategy == Strategy.SC_SIC_PER_GROUP else None)
            result = ao_optimize(layout, block, samples, config, cfg.power_linear, 0.6)
            total += 1
            converged += result.diagnostics.converged
            history = result.diagnostics.wsr_history
            deltas = [b - a for a, b in zip(history, history[1:])]
            if deltas and min(deltas) < -10 * config.epsilon:
                drops += 1
                worst_drop = min(worst_drop, min(deltas))
    elapsed = time.perf_counter() - start
    rate = converged / total
    ok = drops == 0 and rate >= 0.95 and elapsed < 900.0
    report("ao-monotonicity", ok,
           f"{total} runs, {converged} converged ({rate:.0%}), {drops} histories with drops "
           f"(worst {worst_drop:.1e}), {elapsed:.0f}s")
    assert drops == 0
    assert rate >= 0.95
    assert elapsed < 900.0


def test_strategy_nesting():
    start = time.perf_counter()
    config = AoConfig(epsilon=1e-4, max_iters=100, num_inits=3)
    failures = []
    for seed in SEEDS:
        cfg, block, samples = _seed_setup(seed)
        wsr = {}
        for strategy in (Strategy.MU_LP, Strategy.ONE_LAYER_RS, Strategy.DPC, Strategy.ONE_DPCRS):
            layout = make_layout(strategy, 2, pi=(0, 1))
            wsr[strategy] = ao_optimize(layout, block, samples, config, cfg.power_linear, 0.6).report.wsr
        if wsr[Strategy.ONE_LAYER_RS] < wsr[Strategy.MU_LP] - 1e-3:
            failures.append((seed, "1-layer-RS < MU-LP"))
        if wsr[Strategy.ONE_DPCRS] < wsr[Strategy.DPC] - 1e-3:
            failures.append((seed, "1-DPCRS < DPC"))

        cfg3, block3, samples3 = _seed_setup(seed, k=3)
        wsr3 = {}
        for strategy in (Strategy.ONE_DPCRS, Strategy.M_DPCRS):
            layout = make_layout(strategy, 3, pi=(0, 1, 2))
            wsr3[strategy] = ao_optimize(layout, block3, samples3, config, cfg3.power_linear, 0.6).report.wsr
        if wsr3[Strategy.M_DPCRS] < wsr3[Strategy.ONE_DPCRS] - 1e-3:
            failures.append((seed, "M-DPCRS < 1-DPCRS"))
    elapsed = time.perf_counter() - start
    ok = not failures
    report("strategy-nesting", ok,
           f"{len(SEEDS)} seeds, best-of-3 inits, violations: {failures or 'none'}, {elapsed:.0f}s")
    assert not failures


# -- criteria 5 & 6: scaled sum-rate study ------------------------------------------

DOF_WINDOW = (30.0, 40.0)


@pytest.fixture(scope="module")
def dof_records():
    def build():
        spec = ExperimentSpec(
            user_variances=(1.0, 1.0), num_tx_antennas=4,
            snr_db_list=(20.0, 25.0, 30.0, 35.0, 40.0),
            alpha_list=(0.3, 0.6, 0.9),
            strategies=(
                StrategyRun(Strategy.MU_LP), StrategyRun(Strategy.ONE_LAYER_RS),
                StrategyRun(Strategy.DPC), StrategyRun(Strategy.ONE_DPCRS),
            ),
            num_blocks=20, num_samples=200,
            ao=AoConfig(epsilon=1e-3, max_iters=100, num_inits=3),
            seed=0, threads=max(1, min(4, os.cpu_count() or 1)),
        )
        return run_esr_curve(spec)

    return _cache_records("dof_b20_m200", build)


def test_dof_slopes(dof_records):
    start = time.perf_counter()
    slopes = estimate_dof(dof_records, DOF_WINDOW)
    lines = []
    ok = True
    for (strategy, alpha), slope in sorted(slopes.items()):
        if strategy in ("1-layer-RS", "1-DPCRS"):
            target = rs_dof_target(2, alpha)
        else:
            target = mulp_dof_target(2, alpha)
        good = abs(slope - target) <= 0.15
        ok = ok and good
        lines.append(f"{strategy}@a={alpha:g}: {slope:.3f} vs {target:.2f} {'ok' if good else 'OFF'}")
    elapsed = time.perf_counter() - start
    report("dof-slopes", ok, "; ".join(lines) + f"; fit window {DOF_WINDOW} dB, {elapsed:.0f}s")
    assert ok


def test_rs_gain_over_dpc(dof_records):
    rs = [r.esr for r in dof_records
          if r.block_id == AGGREGATE and r.strategy == "1-layer-RS" and r.alpha == 0.3 and r.snr_db == 30.0]
    dpc = [r.esr for r in dof_records
           if r.block_id == AGGREGATE and r.strategy == "DPC" and r.alpha == 0.3 and r.snr_db == 30.0]
    ratio = rs[0] / dpc[0]
    ok = ratio >= 1.08
    report("rs-gain-over-dpc", ok, f"ESR(1-layer-RS)/ESR(DPC) = {ratio:.4f} at alpha=0.3, 30 dB")
    assert ok


# -- criterion 7: multicast floor ---------------------------------------------------


def test_multicast_floor():
    start = time.perf_counter()
    floor = 0.5
    ok_floor = True
    ok_cost = True
    details = []
    for seed in (0, 1):
        def run(threshold):
            spec = ExperimentSpec(
                user_variances=(1.0, 1.0), num_tx_antennas=4,
                snr_db_list=(20.0,), alpha_list=(0.6,),
                strategies=(StrategyRun(Strategy.ONE_DPCRS),),
                num_blocks=6, num_samples=50,
                multicast=True, multicast_threshold=threshold,
                ao=AoConfig(epsilon=1e-3, max_iters=80),
                seed=seed, threads=2,
            )
            return run_multicast_study(spec)

        with_floor = run(floor)
        without = run(0.0)
        for record in with_floor:
            if record.block_id != AGGREGATE and not record.skipped:
                if record.multicast_rate < floor - 1e-4:
                    ok_floor = False
        wesr_floor = [r.esr for r in with_floor if r.block_id == AGGREGATE][0]
        wesr_free = [r.esr for r in without if r.block_id == AGGREGATE][0]
        if wesr_floor > wesr_free + 1e-9:
            ok_cost = False
        details.append(f"seed {seed}: WESR {wesr_floor:.3f} (floor) <= {wesr_free:.3f} (free)")
    elapsed = time.perf_counter() - start
    ok = ok_floor and ok_cost
    report("multicast-floor", ok, "; ".join(details) + f", {elapsed:.0f}s")
    assert ok_floor, "a non-skipped block delivered less than the multicast floor"
    assert ok_cost, "adding the multicast floor increased unicast WESR"


# -- criterion 8: region nesting ----------------------------------------------------


def test_region_nesting():
    start = time.perf_counter()
    weights = tuple((1.0, float(10.0**x)) for x in np.linspace(-1.0, 1.0, 11))

    def build():
        spec = ExperimentSpec(
            user_variances=(1.0, 1.0), num_tx_antennas=4,
            snr_db_list=(20.0,), alpha_list=(0.6,),
            strategies=(
                StrategyRun(Strategy.DPC), StrategyRun(Strategy.ONE_LAYER_RS),
                StrategyRun(Strategy.ONE_DPCRS),
            ),
            num_blocks=10, num_samples=100,
            weight_grid=weights,
            ao=AoConfig(epsilon=1e-3, max_iters=80, num_inits=2),
            seed=0, threads=max(1, min(4, os.cpu_count() or 1)),
        )
        return run_rate_region(spec)

    records = _cache_records("region_b10_m100", build)

    # leave the CSV behind for the figure-rendering package
    os.makedirs(ARTIFACTS, exist_ok=True)
    with open(os.path.join(ARTIFACTS, "region_acceptance.csv"), "w") as fh:
        fh.write(records_to_csv(records, 2))

    hull_dpcrs = upper_right_hull(region_points(records, "1-DPCRS"))
    slack = 1e-2
    failures = []
    for inner in ("DPC", "1-layer-RS"):
        pts = region_points(records, inner)
        for p in pts + upper_right_hull(pts):
            if not hull_contains(hull_dpcrs, p, slack=slack):
                failures.append((inner, tuple(round(v, 4) for v in p)))
    elapsed = time.perf_counter() - start
    ok = not failures
    report("region-nesting", ok,
           f"DPCRS hull contains DPC and RS regions at {slack} slack; "
           f"violations: {failures or 'none'}; {elapsed:.0f}s")
    assert not failures
