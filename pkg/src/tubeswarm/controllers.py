"""Vector-field velocity commands and acceleration tracking laws.

Five terms make up the modified velocity command of robot i::

    v_c = -sat(u1 + u2 + u3 + u4 + u5, v_m)

u1 line approaching (forward along the tube), u2 robot avoidance, u3 tube
keeping, u4 cohesion, u5 velocity alignment. The original controller keeps
only u1..u3. u1 and u3 are evaluated at the drifted self-position; u2, u4 and
u5 use exact relative measurements.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import ContractError
from .sensing import RelativeMeasurement
from .tube import TubeSpec, query

log = logging.getLogger(__name__)


class ControllerVariant(str, enum.Enum):
    ORIGINAL = "original"
    MODIFIED = "modified"
    MODIFIED_ACCEL = "modified-accel"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        return cls(str(value).strip().lower().replace("_", "-"))


@dataclass(frozen=True)
class ControllerGains:
    """Gains and radii. Defaults are the open-tube simulation values.

    ``k_v`` is not published with the scenarios; 3.0 keeps the 20 ms
    zero-order-hold loop well damped (k_v * dt_ctrl = 0.06).
    """

    k2: float = 1.0
    k3: float = 1.0
    k4: float = 2.0
    k5: float = 1.0
    k_v: float = 3.0
    v_m: float = 1.0
    r_s: float = 0.2
    r_a: float = 0.3
    r_c: float = 1.0
    r_d: float = 2.0
    epsilon_dist: float = 1e-3
    a_max: Optional[float] = None

    def __post_init__(self):
        if not 0 < self.r_s < self.r_a <= self.r_c < self.r_d:
            raise ContractError("radii must satisfy 0 < r_s < r_a <= r_c < r_d")
        if min(self.k2, self.k3, self.k_v, self.v_m) <= 0:
            raise ContractError("k2, k3, k_v and v_m must be positive")
        # k4 = 0 or k5 = 0 switches the flocking terms off
        if self.k4 < 0 or self.k5 < 0:
            raise ContractError("k4 and k5 must be non-negative")
        if self.epsilon_dist <= 0:
            raise ContractError("epsilon_dist must be positive")
        if self.a_max is not None and self.a_max <= 0:
            raise ContractError("a_max must be positive")

    @property
    def robot_barrier_range(self):
        """Inter-robot distances (singular, inactive) of the avoidance barrier."""
        return 2.0 * self.r_s, self.r_a + self.r_s

    @property
    def boundary_barrier_range(self):
        """Boundary distances (singular, inactive) of the tube-keeping barrier."""
        return self.r_s, self.r_a


@dataclass(frozen=True)
class ControlTerms:
    u1: np.ndarray
    u2: np.ndarray
    u3: np.ndarray
    u4: np.ndarray
    u5: np.ndarray
    v_c: np.ndarray
    saturated: bool
    near_collision: bool = False


def sat(x, v_m: float) -> np.ndarray:
    """Scale ``x`` back onto the ball of radius ``v_m`` if it lies outside."""
    if v_m <= 0:
        raise ContractError("v_m must be positive")
    x = np.asarray(x, dtype=float)
    n = float(np.hypot(x[0], x[1]))
    if n <= v_m:
        return x.copy()
    return x * (v_m / n)


def _check_band(d1, d2):
    if not d1 < d2:
        raise ContractError("smooth_delta requires d1 < d2")


def smooth_delta(x: float, d1: float, d2: float) -> float:
    """C1 cubic step: 0 below ``d1``, 1 above ``d2``.

    Evaluated as u^2 (3 - 2u) with u = (x - d1) / (d2 - d1); the expanded
    monomial form loses ~1e-13 to cancellation for bands away from zero.
    """
    _check_band(d1, d2)
    if x <= d1:
        return 0.0
    if x >= d2:
        return 1.0
    u = (x - d1) / (d2 - d1)
    return u * u * (3.0 - 2.0 * u)


def smooth_delta_derivative(x: float, d1: float, d2: float) -> float:
    _check_band(d1, d2)
    if x <= d1 or x >= d2:
        return 0.0
    w = d2 - d1
    u = (x - d1) / w
    return 6.0 * u * (1.0 - u) / w


def cohesion_coefficient(dist: float, gains: ControllerGains) -> float:
    """d_ij: derivative of the attractive potential k4*delta(|p|, r_c, r_d) over |p|."""
    if dist <= 0:
        raise ContractError("cohesion_coefficient needs a positive distance")
    return gains.k4 * smooth_delta_derivative(dist, gains.r_c, gains.r_d) / dist


def cohesion_bound(gains: ControllerGains) -> float:
    """Largest possible |d_ij * p_ij| for one neighbor."""
    return gains.k4 * 1.5 / (gains.r_d - gains.r_c)


def _reciprocal_barrier(x, singular, inactive, gain, eps):
    # gain * (1/(x - singular) - 1/(inactive - singular)), zero past `inactive`,
    # clamped to x = singular + eps on the unsafe side.
    if x > inactive:
        return 0.0, False
    clamped = x <= singular + eps
    xe = singular + eps if clamped else x
    return gain * (1.0 / (xe - singular) - 1.0 / (inactive - singular)), clamped


def avoidance_magnitude(dist: float, gains: ControllerGains):
    """Magnitude of the repulsion one neighbor at ``dist`` exerts.

    Returns ``(magnitude, clamped)``; ``b_ij = magnitude / dist``.
    """
    lo, hi = gains.robot_barrier_range
    return _reciprocal_barrier(dist, lo, hi, gains.k2, gains.epsilon_dist)


def boundary_magnitude(boundary_distance: float, gains: ControllerGains):
    """Magnitude of the tube-keeping push at the given boundary distance."""
    lo, hi = gains.boundary_barrier_range
    return _reciprocal_barrier(boundary_distance, lo, hi, gains.k3, gains.epsilon_dist)


def compute_terms(
    position_hat,
    rel: Sequence[RelativeMeasurement],
    tube: TubeSpec,
    gains: ControllerGains,
    passed: bool = False,
    variant: ControllerVariant = ControllerVariant.MODIFIED,
    post_pass_flocking: bool = False,
) -> ControlTerms:
    """Evaluate all five terms and the saturated velocity command for one robot."""
    variant = ControllerVariant.parse(variant)
    q = query(tube, position_hat)
    u1 = -gains.v_m * q.tangent
    u2 = np.zeros(2)
    u3 = np.zeros(2)
    u4 = np.zeros(2)
    u5 = np.zeros(2)
    near = False

    if not passed:
        mag, clamped = boundary_magnitude(q.boundary_distance, gains)
        if mag and q.lateral_offset != 0.0:
            c = mag * np.sign(q.lateral_offset) * q.normal
            u3 = c - q.tangent * np.dot(q.tangent, c)

    flocking = variant is not ControllerVariant.ORIGINAL and (not passed or post_pass_flocking)
    for m in rel:
        dist = float(np.hypot(m.rel_position[0], m.rel_position[1]))
        if not passed:
            mag, clamped = avoidance_magnitude(dist, gains)
            if clamped:
                near = True
                log.debug("near-collision with robot %d at distance %.4g", m.neighbor_id, dist)
            if mag and dist > 0:
                u2 -= mag * (m.rel_position / dist)
        if flocking:
            if dist > 0:
                u4 += cohesion_coefficient(dist, gains) * m.rel_position
            u5 += gains.k5 * m.rel_velocity

    if passed and not flocking:
        # only u1 is left and |t_c| = 1: the command is exactly v_m * t_c
        return ControlTerms(u1, u2, u3, u4, u5, gains.v_m * q.tangent, False, near)
    if variant is ControllerVariant.ORIGINAL:
        total = u1 + u2 + u3
    elif variant is ControllerVariant.MODIFIED:
        total = u1 + u2 + u3 + u4 + u5
    else:
        total = u1 + u2 + u3 + u4
    v_c = -sat(total, gains.v_m)
    saturated = bool(np.hypot(total[0], total[1]) > gains.v_m)
    return ControlTerms(u1, u2, u3, u4, u5, v_c, saturated, near)


def held_alignment_reference(prev: Optional[ControlTerms], current: ControlTerms,
                             variant: ControllerVariant, gains: ControllerGains):
    """``v_c_prev`` substitute that feeds forward only the non-alignment terms.

    For the modified controller the returned reference makes the
    feed-forward rate equal the backward difference of
    ``w = -sat(u1 + u2 + u3 + u4)``. Differencing u5 itself feeds neighbours'
    accelerations back with gain k5 * |neighbours| through a one-tick delay,
    which diverges once that product exceeds one. Differencing ``w`` (rather
    than splitting one saturated sum across two ticks) telescopes, so a
    one-tick spike in the command leaves no net velocity kick. Without
    saturation the resulting law equals the ``MODIFIED_ACCEL`` one.
    """
    if prev is None:
        return None
    if ControllerVariant.parse(variant) is not ControllerVariant.MODIFIED:
        return prev.v_c
    w_now = -sat(current.u1 + current.u2 + current.u3 + current.u4, gains.v_m)
    w_prev = -sat(prev.u1 + prev.u2 + prev.u3 + prev.u4, gains.v_m)
    return current.v_c - (w_now - w_prev)


def acceleration_command(
    v_hat,
    v_c,
    v_c_prev,
    rel: Sequence[RelativeMeasurement],
    gains: ControllerGains,
    dt_ctrl: float,
    variant: ControllerVariant = ControllerVariant.MODIFIED,
) -> np.ndarray:
    """Track ``v_c`` with a proportional law plus feed-forward of its rate.

    The rate is a backward difference over one controller tick, clamped per
    axis to ``a_max`` (default ``10 * v_m / dt_ctrl``). For
    ``MODIFIED_ACCEL`` the alignment term k5 * sum(v_i - v_j) is subtracted
    inside the proportional gain. Pass ``v_c_prev=None`` on the first tick.
    """
    if dt_ctrl <= 0:
        raise ContractError("dt_ctrl must be positive")
    variant = ControllerVariant.parse(variant)
    v_c = np.asarray(v_c, dtype=float)
    err = v_c - np.asarray(v_hat, dtype=float)
    if variant is ControllerVariant.MODIFIED_ACCEL:
        for m in rel:
            err = err - gains.k5 * m.rel_velocity
    if v_c_prev is None:
        ff = np.zeros(2)
    else:
        a_max = gains.a_max if gains.a_max is not None else 10.0 * gains.v_m / dt_ctrl
        ff = np.clip((v_c - np.asarray(v_c_prev, dtype=float)) / dt_ctrl, -a_max, a_max)
    return gains.k_v * err + ff
