"""Double-integrator robot model and ground-truth swarm state."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ContractError, SimulationDiverged
from .tube import TubeSpec, has_passed


@dataclass(frozen=True)
class RobotState:
    id: int
    position: np.ndarray
    velocity: np.ndarray
    passed: bool = False


@dataclass(frozen=True)
class SwarmState:
    """True state of all robots, stored row-wise as (M, 2) arrays."""

    time: float
    ids: np.ndarray
    positions: np.ndarray
    velocities: np.ndarray
    passed: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.passed is None:
            object.__setattr__(self, "passed", np.zeros(len(self.ids), dtype=bool))
        if len(np.unique(self.ids)) != len(self.ids):
            raise ContractError("robot ids must be unique")

    @classmethod
    def from_robots(cls, robots, time=0.0):
        robots = list(robots)
        return cls(
            time,
            np.array([r.id for r in robots], dtype=int),
            np.array([r.position for r in robots], dtype=float).reshape(-1, 2),
            np.array([r.velocity for r in robots], dtype=float).reshape(-1, 2),
            np.array([r.passed for r in robots], dtype=bool),
        )

    @property
    def robots(self):
        return [self.robot(i) for i in range(len(self.ids))]

    def robot(self, index):
        return RobotState(
            int(self.ids[index]),
            self.positions[index].copy(),
            self.velocities[index].copy(),
            bool(self.passed[index]),
        )

    def __len__(self):
        return len(self.ids)


def step_dynamics(state: SwarmState, accel_commands, dt_physics: float, n_steps: int = 1) -> SwarmState:
    """Advance the swarm by ``n_steps`` semi-implicit Euler steps.

    The acceleration commands are held constant over all steps (zero-order
    hold). Each step applies ``v += a*dt`` and then ``p += v*dt``.

    Raises:
        SimulationDiverged: a command is non-finite, or the state blows up.
    """
    if dt_physics <= 0:
        raise ContractError("dt_physics must be positive")
    a = np.asarray(accel_commands, dtype=float).reshape(-1, 2)
    if len(a) != len(state):
        raise ContractError(f"expected {len(state)} acceleration commands, got {len(a)}")
    tick = int(round(state.time / dt_physics))
    bad = ~np.all(np.isfinite(a), axis=1)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise SimulationDiverged(
            f"non-finite acceleration command for robot {state.ids[i]} at physics tick {tick}",
            robot_id=int(state.ids[i]),
            tick=tick,
        )
    p = state.positions.copy()
    v = state.velocities.copy()
    dv = a * dt_physics
    for _ in range(n_steps):
        v += dv
        p += v * dt_physics
    bad = ~(np.all(np.isfinite(p), axis=1) & np.all(np.isfinite(v), axis=1))
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise SimulationDiverged(
            f"state of robot {state.ids[i]} diverged after physics tick {tick}",
            robot_id=int(state.ids[i]),
            tick=tick,
        )
    return replace(
        state,
        time=state.time + n_steps * dt_physics,
        positions=p,
        velocities=v,
        passed=state.passed.copy(),
    )


def mark_passed(state: SwarmState, tube: TubeSpec) -> SwarmState:
    """Latch ``passed`` for every robot beyond the finishing line."""
    passed = state.passed.copy()
    for i in np.flatnonzero(~passed):
        passed[i] = has_passed(tube, state.positions[i])
    return replace(state, passed=passed)
