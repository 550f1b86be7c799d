"""Acceptance suite: one test and one PASS/FAIL line per criterion.

The comparison criteria (5, 6) simulate 40 and 20 full scenario runs and take
several minutes on one core.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from tubeswarm.cli import main
from tubeswarm.controllers import (
    ControllerGains,
    ControllerVariant,
    cohesion_bound,
    compute_terms,
    smooth_delta,
    smooth_delta_derivative,
)
from tubeswarm.dynamics import RobotState
from tubeswarm.harness import build_paper_scenarios, compare_controllers, run_scenario
from tubeswarm.noise_analysis import closed_form_variances, monte_carlo_variance, spectral_variance_aligned
from tubeswarm.sensing import NoiseConfig, ObservationState, RelativeMeasurement, observe_self, robot_streams
from tubeswarm.tube import build_tube, query


@pytest.fixture(scope="module")
def paper():
    return build_paper_scenarios()


def test_1_closed_form_vs_spectral(acceptance):
    t0 = time.perf_counter()
    worst = 0.0
    for N in (1, 2, 3, 6, 10):
        for k5 in (0.5, 1.0, 2.0):
            for kv in (1.0, 2.0):
                ref = closed_form_variances(N, kv, k5, 1.0).sigma_double_prime
                worst = max(worst, abs(spectral_variance_aligned(N, kv, k5, 1.0) - ref) / ref)
    elapsed = time.perf_counter() - t0
    ok = worst < 1e-4 and elapsed < 10
    acceptance(1, ok, f"max relative disagreement {worst:.2e} (< 1e-4) over 30 cells, {elapsed:.1f} s (< 10 s)")
    assert ok


def test_2_monte_carlo_variance(acceptance):
    t0 = time.perf_counter()
    est = {}
    for seed, N in enumerate((1, 2, 6)):
        est[N] = monte_carlo_variance(N, 1.0, 1.0, 1.0, variant="aligned", dt=1e-3, duration=20.0,
                                      trials=100, burn_in=5.0, seed=100 + seed).sigma_double_prime
    elapsed = time.perf_counter() - t0
    errs = {N: abs(v / closed_form_variances(N, 1.0, 1.0, 1.0).sigma_double_prime - 1) for N, v in est.items()}
    ratio = est[6] / est[1]
    ratio_err = abs(ratio / (2 / 7) - 1)
    ok = max(errs.values()) < 0.1 and ratio_err < 0.1 and elapsed < 120
    detail = ", ".join(f"N={N} {est[N]:.4f} ({100 * e:.1f}%)" for N, e in errs.items())
    acceptance(2, ok, f"{detail}; ratio {ratio:.4f} vs 2/7 ({100 * ratio_err:.1f}%), {elapsed:.1f} s (< 120 s)")
    assert ok


def test_3_smooth_step(acceptance):
    rng = np.random.default_rng(2024)
    h = 1e-8
    worst_value = worst_slope = 0.0
    for _ in range(100):
        d1 = rng.uniform(-5, 5)
        d2 = d1 + rng.uniform(0.5, 5)
        worst_value = max(worst_value, abs(smooth_delta(d1, d1, d2)), abs(smooth_delta(d2, d1, d2) - 1),
                          abs(smooth_delta((d1 + d2) / 2, d1, d2) - 0.5))
        for x in (d1, d2):
            left = (smooth_delta(x, d1, d2) - smooth_delta(x - h, d1, d2)) / h
            right = (smooth_delta(x + h, d1, d2) - smooth_delta(x, d1, d2)) / h
            worst_slope = max(worst_slope, abs(left - right))
    argmax_ok = True
    for r_c, r_d in ((1.0, 2.0), (0.3, 1.0)):
        grid = np.linspace(r_c, r_d, 10_001)
        peak = grid[np.argmax([smooth_delta_derivative(x, r_c, r_d) for x in grid])]
        argmax_ok &= abs(peak - (r_c + r_d) / 2) <= grid[1] - grid[0]
    ok = worst_value < 1e-12 and worst_slope < 1e-6 and argmax_ok
    acceptance(3, ok, f"endpoint/midpoint error {worst_value:.1e}, junction slope mismatch {worst_slope:.1e} "
                      f"(< 1e-6), force peak at (r_c+r_d)/2: {argmax_ok}")
    assert ok


def test_4_ideal_condition_safety(acceptance, paper):
    open6, _ = paper
    sc = replace(open6, noise=replace(open6.noise, sigma_p=0.0, sigma_v=0.0), duration=60.0)
    t0 = time.perf_counter()
    trace, m = run_scenario(sc, 0)
    elapsed = time.perf_counter() - t0
    r_s = sc.gains.r_s
    min_pair = min(r.min_neighbor_dist for r in trace)
    # boundary distance is only meaningful while a robot is still inside the tube
    min_dt = min(r.d_t for r in trace if not r.passed)
    ok = (m.all_passed_time is not None and min_pair >= 2 * r_s and min_dt >= r_s
          and m.aborted is None and elapsed < 30)
    acceptance(4, ok, f"all passed at {m.all_passed_time} s (< 60 s), min pairwise {min_pair:.3f} m "
                      f"(>= {2 * r_s}), min d_t {min_dt:.3f} m (>= {r_s}), {elapsed:.1f} s (< 30 s)")
    assert ok


def _comparison(number, scenario, seeds, acceptance, limit=None):
    t0 = time.perf_counter()
    tab = compare_controllers(scenario, seeds)
    elapsed = time.perf_counter() - t0
    ok = tab.win_rate >= 0.75 and tab.mean_improvement > 0 and (limit is None or elapsed < limit)
    timing = f"{elapsed:.0f} s" + (f" (< {limit} s)" if limit else "")
    acceptance(number, ok, f"{tab.verdict}, ties {tab.ties}; mean d_t_all_integral improvement "
                           f"{tab.mean_improvement:+.4f} m*s; {timing}")
    return ok


@pytest.mark.slow
def test_5_open_tube_comparison(acceptance, paper):
    open6, _ = paper
    assert open6.noise.drift_scaling.short == "B"
    assert _comparison(5, open6, range(20), acceptance, limit=600)


@pytest.mark.slow
def test_6_closed_tube_comparison(acceptance, paper):
    _, closed10 = paper
    assert _comparison(6, closed10, range(10), acceptance)


def _drift_checkpoints(mode, ticks, trials=10_000, sigma_p=1.0, dt=0.02):
    cfg = NoiseConfig(sigma_p, 0.0, dt, mode)
    robot = RobotState(0, np.zeros(2), np.zeros(2))
    out = np.empty((len(ticks), trials, 2))
    for n, rng in enumerate(robot_streams(7, trials)):
        obs = ObservationState.initial(robot)
        c = 0
        for k in range(1, ticks[-1] + 1):
            obs = observe_self(robot, obs, cfg, rng)
            if k == ticks[c]:
                out[c, n] = obs.drift
                c += 1
    return out.var(axis=1)  # per checkpoint, per axis


def test_7_drift_statistics(acceptance):
    ticks = [10, 20, 30, 40]
    dt = 0.02
    var_a = _drift_checkpoints("A", ticks)
    err_a = np.max(np.abs(var_a / np.array(ticks)[:, None] - 1))
    var_b = _drift_checkpoints("B", ticks)
    times = np.array(ticks) * dt
    slopes = [np.polyfit(times, var_b[:, ax], 1)[0] for ax in range(2)]
    err_b = max(abs(s / dt - 1) for s in slopes)
    ok = err_a < 0.05 and err_b < 0.05
    acceptance(7, ok, f"mode A max |Var/k - 1| = {100 * err_a:.2f}% (< 5%); mode B slope "
                      f"{slopes[0]:.5f}, {slopes[1]:.5f} vs {dt} ({100 * err_b:.2f}%, < 5%)")
    assert ok


def test_8_determinism(acceptance, tmp_path):
    args = ["run", "--scenario", "open6", "--variant", "modified", "--seed", "17", "--duration", "2",
            "--trace-terms"]
    codes = [main(args + ["--out", str(tmp_path / d)]) for d in ("a", "b")]
    same = all((tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
               for f in ("trace.csv", "summary.csv", "scenario.ini"))
    ok = codes == [0, 0] and same
    size = (tmp_path / "a" / "trace.csv").stat().st_size
    acceptance(8, ok, f"two identical runs -> byte-identical trace ({size} bytes), summary and scenario files")
    assert ok


def test_9_saturation_and_bounds(acceptance):
    x = np.linspace(0, 12, 60)
    tube = build_tube(np.column_stack([x, 1.5 * np.sin(x / 2)]), 1.0, resample_step=0.2)
    rng = np.random.default_rng(99)
    variants = list(ControllerVariant)
    gain_sets = [ControllerGains(), build_paper_scenarios()[1].gains]
    n_eval = 1_000_000
    worst_vc = worst_u4 = 0.0
    passed_ok = True
    n_passed = 0
    t0 = time.perf_counter()
    for n in range(n_eval):
        g = gain_sets[n & 1]
        p = rng.uniform((-1.0, -2.5), (13.0, 2.5))
        k = int(rng.integers(0, 7))
        rel = [RelativeMeasurement(j, rng.uniform(-1.2, 1.2, 2) * g.r_d, rng.normal(0.0, 2.0, 2))
               for j in range(k)]
        passed = rng.random() < 0.1
        t = compute_terms(p, rel, tube, g, passed=passed, variant=variants[n % 3])
        worst_vc = max(worst_vc, math.hypot(*t.v_c) / g.v_m)
        if k:
            worst_u4 = max(worst_u4, math.hypot(*t.u4) / (cohesion_bound(g) * k))
        if passed:
            n_passed += 1
            passed_ok &= bool(np.array_equal(t.v_c, g.v_m * query(tube, p).tangent))
    elapsed = time.perf_counter() - t0
    ok = worst_vc <= 1 + 1e-12 and worst_u4 <= 1 + 1e-12 and passed_ok
    acceptance(9, ok, f"{n_eval} evaluations: max |v_c|/v_m = {worst_vc:.15f}, max |u4|/cap = {worst_u4:.4f}, "
                      f"{n_passed} passed-robot commands exactly v_m*t_c: {passed_ok} ({elapsed:.0f} s)")
    assert ok
