import numpy as np
import pytest

from tubeswarm.dynamics import RobotState, SwarmState
from tubeswarm.sensing import (
    DriftScaling,
    NoiseConfig,
    ObservationState,
    neighbors,
    observe_self,
    robot_streams,
)


def _robot(p=(1.0, 2.0), v=(0.5, -0.5)):
    return RobotState(0, np.array(p), np.array(v))


def test_noiseless_observation_is_exact():
    r = _robot()
    cfg = NoiseConfig(0.0, 0.0, 0.02)
    obs = ObservationState.initial(r)
    rng = np.random.default_rng(1)
    for _ in range(50):
        obs = observe_self(r, obs, cfg, rng)
    np.testing.assert_array_equal(obs.position_hat, r.position)
    np.testing.assert_array_equal(obs.velocity_hat, r.velocity)


def _drift_samples(mode, k, trials=10_000, sigma_p=1.0, dt=0.02):
    # independent trials: each its own stream
    cfg = NoiseConfig(sigma_p, 0.0, dt, mode)
    r = _robot()
    out = np.empty((trials, 2))
    for n, rng in enumerate(robot_streams(123, trials)):
        obs = ObservationState.initial(r)
        for _ in range(k):
            obs = observe_self(r, obs, cfg, rng)
        out[n] = obs.drift
    return out


def test_mode_a_variance_grows_by_sigma_p_per_tick():
    d = _drift_samples("A", 8)
    np.testing.assert_allclose(d.var(axis=0), 8.0, rtol=0.05)


def test_mode_a_variance_after_one_second():
    # 1 s at 0.02 s per tick is 50 ticks: sigma_p * t / dt = 50
    cfg = NoiseConfig(1.0, 0.0, 0.02, DriftScaling.PER_STEP)
    assert cfg.drift_step_std**2 * (1.0 / cfg.dt_obs) == pytest.approx(50.0)


def test_mode_b_variance_scales_with_dt_squared():
    d = _drift_samples("B", 8)
    np.testing.assert_allclose(d.var(axis=0), 8 * 0.02**2, rtol=0.05)


def test_position_hat_is_position_plus_drift():
    r = _robot()
    cfg = NoiseConfig(0.3, 0.2, 0.02)
    obs = observe_self(r, ObservationState.initial(r), cfg, np.random.default_rng(0))
    np.testing.assert_array_equal(obs.position_hat, r.position + obs.drift)


def test_increments_uncorrelated():
    cfg = NoiseConfig(1.0, 0.0, 0.02, "A")
    r = _robot()
    rng = robot_streams(5, 1)[0]
    obs = ObservationState.initial(r)
    drifts = np.empty((50_001, 2))
    drifts[0] = 0
    for k in range(1, len(drifts)):
        obs = observe_self(r, obs, cfg, rng)
        drifts[k] = obs.drift
    inc = np.diff(drifts, axis=0).ravel(order="F")
    rho = np.corrcoef(inc[:-1], inc[1:])[0, 1]
    assert abs(rho) < 0.02


def test_streams_reproducible_and_independent():
    a = [g.standard_normal(4) for g in robot_streams(7, 3)]
    b = [g.standard_normal(4) for g in robot_streams(7, 3)]
    assert all(np.array_equal(x, y) for x, y in zip(a, b))
    assert not np.array_equal(a[0], a[1])
    # robot 0's stream does not depend on the swarm size
    assert np.array_equal(robot_streams(7, 5)[0].standard_normal(4), a[0])


def _swarm(points, vels=None):
    vels = np.zeros((len(points), 2)) if vels is None else vels
    return SwarmState.from_robots([RobotState(i, np.array(p, float), np.array(v, float)) for i, (p, v) in enumerate(zip(points, vels))])


def test_neighbors_simple():
    assert neighbors(_swarm([(0, 0), (3, 0)]), 0, 2.0) == []
    (m,) = neighbors(_swarm([(0, 0), (1, 0)], [(0, 0), (0.5, 0)]), 0, 2.0)
    assert m.neighbor_id == 1
    assert np.linalg.norm(m.rel_position) == 1.0
    np.testing.assert_array_equal(m.rel_velocity, [-0.5, 0])


def test_neighbors_lattice_matches_brute_force():
    pts = [(x, y) for x in (0, 1.5, 3.0) for y in (0, 1.5)]
    swarm = _swarm(pts)
    for i in range(len(pts)):
        got = [m.neighbor_id for m in neighbors(swarm, i, 2.0)]
        expected = [j for j in range(len(pts)) if j != i and np.hypot(*np.subtract(pts[i], pts[j])) <= 2.0]
        assert got == expected
