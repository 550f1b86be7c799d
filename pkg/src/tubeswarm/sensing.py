"""Self-observation with odometry drift, and exact relative measurements."""

from __future__ import annotations

import enum
import hashlib
from dataclasses import dataclass
from typing import List

import numpy as np

from .dynamics import RobotState, SwarmState
from .errors import ContractError


class DriftScaling(str, enum.Enum):
    """How the per-tick position-noise variance relates to ``sigma_p``.

    ``PER_STEP`` (mode A) adds variance ``sigma_p`` every tick, so the drift
    variance is ``sigma_p * t / dt_obs``. ``CONTINUOUS`` (mode B) integrates a
    white position-rate noise, adding ``sigma_p * dt_obs**2`` per tick and
    giving ``sigma_p * dt_obs * t``.
    """

    PER_STEP = "per_step_variance_sigma_p"
    CONTINUOUS = "continuous_integration"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        aliases = {"a": cls.PER_STEP, "b": cls.CONTINUOUS}
        key = str(value).strip().lower()
        if key in aliases:
            return aliases[key]
        return cls(key)

    @property
    def short(self):
        return "A" if self is DriftScaling.PER_STEP else "B"


@dataclass(frozen=True)
class NoiseConfig:
    sigma_p: float = 0.0
    sigma_v: float = 0.0
    dt_obs: float = 0.02
    drift_scaling: DriftScaling = DriftScaling.CONTINUOUS
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "drift_scaling", DriftScaling.parse(self.drift_scaling))
        if self.sigma_p < 0 or self.sigma_v < 0:
            raise ContractError("noise variances must be non-negative")
        if self.dt_obs <= 0:
            raise ContractError("dt_obs must be positive")

    @property
    def drift_step_std(self) -> float:
        if self.drift_scaling is DriftScaling.PER_STEP:
            return float(np.sqrt(self.sigma_p))
        return float(np.sqrt(self.sigma_p) * self.dt_obs)


@dataclass(frozen=True)
class ObservationState:
    drift: np.ndarray
    position_hat: np.ndarray
    velocity_hat: np.ndarray

    @classmethod
    def initial(cls, robot: RobotState):
        return cls(np.zeros(2), np.array(robot.position, float), np.array(robot.velocity, float))


@dataclass(frozen=True)
class RelativeMeasurement:
    neighbor_id: int
    rel_position: np.ndarray
    rel_velocity: np.ndarray


def robot_streams(seed: int, n_robots: int) -> List[np.random.Generator]:
    """Independent per-robot generators split from one run seed.

    Robot ``k`` (in id order) receives ``SeedSequence(seed).spawn(n)[k]``, so
    its stream does not depend on how many draws other robots make.
    """
    return [np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(n_robots)]


def observe_self(robot: RobotState, obs: ObservationState, cfg: NoiseConfig, rng: np.random.Generator,
                 digest=None) -> ObservationState:
    """One observation tick for one robot.

    Always consumes exactly four standard normals from ``rng`` (two for the
    drift increment, two for the velocity error) so paired runs stay aligned
    draw-for-draw whatever the variances are.
    """
    z = rng.standard_normal(4)
    if digest is not None:
        digest.update(z.tobytes())
    drift = obs.drift + cfg.drift_step_std * z[:2]
    p_hat = robot.position + drift
    v_hat = robot.velocity + np.sqrt(cfg.sigma_v) * z[2:]
    return ObservationState(drift, p_hat, v_hat)


def neighbors(state: SwarmState, i: int, r_d: float) -> List[RelativeMeasurement]:
    """Exact relative measurements to every robot within ``r_d`` of robot ``i``.

    ``i`` is a robot id. Results are sorted by neighbor id.
    """
    if r_d <= 0:
        raise ContractError("r_d must be positive")
    idx = int(np.flatnonzero(state.ids == i)[0])
    rel_p = state.positions[idx] - state.positions
    rel_v = state.velocities[idx] - state.velocities
    dist = np.hypot(rel_p[:, 0], rel_p[:, 1])
    out = [
        RelativeMeasurement(int(state.ids[j]), rel_p[j], rel_v[j])
        for j in np.flatnonzero(dist <= r_d)
        if j != idx
    ]
    out.sort(key=lambda m: m.neighbor_id)
    return out


def stream_digest():
    """Running checksum of consumed noise draws."""
    return hashlib.sha256()
