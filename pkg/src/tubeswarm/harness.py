"""Scenario runner, run metrics, controller comparisons and trace files."""

from __future__ import annotations

import csv
import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence

import numpy as np

from .controllers import (
    ControllerGains,
    ControllerVariant,
    ControlTerms,
    acceleration_command,
    compute_terms,
    held_alignment_reference,
)
from .dynamics import SwarmState, mark_passed, step_dynamics
from .errors import ContractError, SimulationDiverged
from .sensing import NoiseConfig, ObservationState, neighbors, observe_self, robot_streams, stream_digest
from .tube import TubeSpec, build_tube, query

log = logging.getLogger(__name__)

TRACE_COLUMNS = [
    "t", "robot_id", "px", "py", "vx", "vy", "phatx", "phaty", "vhatx", "vhaty",
    "d_t", "min_nbr_dist", "passed",
]
TERM_COLUMNS = [f"u{k}{ax}" for k in range(1, 6) for ax in "xy"]
SUMMARY_COLUMNS = [
    "seed", "variant", "d_t_all_integral", "collision_count",
    "boundary_violation_time", "all_passed_time", "min_pairwise_distance",
]


@dataclass(frozen=True)
class Scenario:
    tube: TubeSpec
    positions: np.ndarray
    velocities: np.ndarray
    gains: ControllerGains
    noise: NoiseConfig
    variant: ControllerVariant = ControllerVariant.MODIFIED
    duration: float = 33.0
    dt_physics: float = 0.001
    dt_ctrl: float = 0.02
    post_pass_flocking: bool = False
    name: str = "custom"

    def __post_init__(self):
        object.__setattr__(self, "variant", ControllerVariant.parse(self.variant))
        object.__setattr__(self, "positions", np.asarray(self.positions, dtype=float).reshape(-1, 2))
        object.__setattr__(self, "velocities", np.asarray(self.velocities, dtype=float).reshape(-1, 2))

    @property
    def n_robots(self):
        return len(self.positions)

    @property
    def substeps(self):
        return int(round(self.dt_ctrl / self.dt_physics))

    @property
    def n_ticks(self):
        return int(round(self.duration / self.dt_ctrl))

    def validate(self):
        """Raise ContractError naming the first offending field."""
        if self.n_robots < 1:
            raise ContractError("positions: need at least one robot")
        if self.velocities.shape != self.positions.shape:
            raise ContractError("velocities: one initial velocity per robot required")
        if self.dt_physics <= 0:
            raise ContractError("dt_physics: must be positive")
        if self.dt_ctrl <= 0 or abs(self.substeps * self.dt_physics - self.dt_ctrl) > 1e-9 * self.dt_ctrl:
            raise ContractError("dt_ctrl: must be a positive integer multiple of dt_physics")
        if self.duration <= 0:
            raise ContractError("duration: must be positive")
        if abs(self.noise.dt_obs - self.dt_ctrl) > 1e-12:
            raise ContractError("noise.dt_obs: must equal dt_ctrl (noise is drawn every controller tick)")
        r_s = self.gains.r_s
        for i in range(self.n_robots):
            if query(self.tube, self.positions[i]).boundary_distance <= r_s:
                raise ContractError(f"positions: robot {i} does not start strictly inside the tube")
            for j in range(i):
                if np.linalg.norm(self.positions[i] - self.positions[j]) < 2 * r_s:
                    raise ContractError(f"positions: robots {j} and {i} start closer than 2*r_s")
        return self


@dataclass(frozen=True)
class TraceRecord:
    t: float
    robot_id: int
    p: np.ndarray
    v: np.ndarray
    p_hat: np.ndarray
    v_hat: np.ndarray
    d_t: float
    min_neighbor_dist: float
    passed: bool
    terms: Optional[ControlTerms] = None


@dataclass
class RunMetrics:
    d_t_all_series: np.ndarray
    d_t_all_integral: float
    min_pairwise_distance: float
    collision_count: int
    boundary_violation_time: float
    all_passed_time: Optional[float]
    noise_checksum: str = ""
    near_collision_events: int = 0
    arc_jump_events: int = 0
    aborted: Optional[str] = None
    velocity_noise_floor: float = float("nan")


def d_t_all(d_t_values: Sequence[float], passed: Sequence[bool], r_s: float) -> float:
    """Sum over robots still in the tube of min(d_t - r_s, 0)."""
    total = 0.0
    for d, done in zip(d_t_values, passed):
        if not done:
            total += min(d - r_s, 0.0)
    return total


def _pairwise_min(positions):
    if len(positions) < 2:
        return math.inf, np.full(len(positions), math.inf)
    diff = positions[:, None, :] - positions[None, :, :]
    dist = np.hypot(diff[..., 0], diff[..., 1])
    np.fill_diagonal(dist, math.inf)
    per_robot = dist.min(axis=1)
    return float(per_robot.min()), per_robot


def run_scenario(scenario: Scenario, seed: int, with_terms: bool = False):
    """Run one closed-loop simulation.

    Controller and noise run every ``dt_ctrl``; the physics runs every
    ``dt_physics`` under a zero-order hold of the acceleration commands. One
    trace record per robot per controller tick is taken before the commands
    are applied. Metrics use true positions. Robots that have crossed the
    finishing line are left out of the boundary metrics.

    ``velocity_noise_floor`` is the per-axis variance of the true velocity
    about its command, pooled over robots still in the tube: an empirical
    look at how much velocity noise survives the closed loop.

    A numerical divergence stops the run; the partial trace is returned and
    ``metrics.aborted`` holds the diagnostic.
    """
    sc = scenario.validate()
    g = sc.gains
    tube = sc.tube
    noise = replace(sc.noise, seed=seed)
    M = sc.n_robots
    state = SwarmState(0.0, np.arange(M), sc.positions.copy(), sc.velocities.copy())
    rngs = robot_streams(seed, M)
    digest = stream_digest()
    obs = [ObservationState.initial(state.robot(i)) for i in range(M)]
    prev_terms: List[Optional[ControlTerms]] = [None] * M
    prev_arc = [None] * M
    arc_jump = 10.0 * tube.resample_step
    flocking_after_pass = sc.post_pass_flocking

    trace: List[TraceRecord] = []
    series = []
    min_pair = math.inf
    collisions = 0
    violation_ticks = 0
    all_passed_time = None
    near_events = 0
    jump_events = 0
    aborted = None
    # tracking error v - v_c of robots still in the tube, for velocity_noise_floor
    err_n = 0
    err_sum = np.zeros(2)
    err_sq = np.zeros(2)

    for k in range(sc.n_ticks):
        t = k * sc.dt_ctrl
        if not tube.closed:
            state = mark_passed(state, tube)
        if all_passed_time is None and not tube.closed and state.passed.all():
            all_passed_time = t

        robots = state.robots
        obs = [observe_self(robots[i], obs[i], noise, rngs[i], digest) for i in range(M)]
        pair_min, per_robot_min = _pairwise_min(state.positions)
        min_pair = min(min_pair, pair_min)
        if pair_min < 2 * g.r_s:
            collisions += 1

        d_t = []
        accel = np.zeros((M, 2))
        for i in range(M):
            q = query(tube, robots[i].position)
            d_t.append(q.boundary_distance)
            if prev_arc[i] is not None:
                jump = abs(q.arc_length - prev_arc[i])
                if tube.closed:
                    jump = min(jump, tube.length - jump)
                if jump > arc_jump:
                    jump_events += 1
                    log.warning("robot %d projection jumped %.3g m along the curve at t=%.3f", i, jump, t)
            prev_arc[i] = q.arc_length

            passed = bool(state.passed[i])
            rel = neighbors(state, i, g.r_d)
            terms = compute_terms(obs[i].position_hat, rel, tube, g, passed, sc.variant, flocking_after_pass)
            near_events += terms.near_collision
            rel_accel = rel if (not passed or flocking_after_pass) else []
            reference = held_alignment_reference(prev_terms[i], terms, sc.variant, g)
            accel[i] = acceleration_command(
                obs[i].velocity_hat, terms.v_c, reference, rel_accel, g, sc.dt_ctrl, sc.variant
            )
            prev_terms[i] = terms
            if not passed:
                e = robots[i].velocity - terms.v_c
                err_n += 1
                err_sum += e
                err_sq += e * e
            trace.append(
                TraceRecord(
                    t, i, robots[i].position, robots[i].velocity, obs[i].position_hat,
                    obs[i].velocity_hat, q.boundary_distance, float(per_robot_min[i]), passed,
                    terms if with_terms else None,
                )
            )

        dta = d_t_all(d_t, state.passed, g.r_s)
        series.append(dta)
        if any(d < g.r_s and not done for d, done in zip(d_t, state.passed)):
            violation_ticks += 1

        try:
            state = step_dynamics(state, accel, sc.dt_physics, sc.substeps)
        except SimulationDiverged as exc:
            aborted = f"{exc} (controller tick {k})"
            log.error("run aborted: %s", aborted)
            break

    series = np.asarray(series)
    floor = float("nan")
    if err_n > 1:
        floor = float(np.mean(err_sq / err_n - (err_sum / err_n) ** 2))
    metrics = RunMetrics(
        d_t_all_series=series,
        d_t_all_integral=float(series.sum() * sc.dt_ctrl),
        min_pairwise_distance=min_pair,
        collision_count=collisions,
        boundary_violation_time=violation_ticks * sc.dt_ctrl,
        all_passed_time=all_passed_time,
        noise_checksum=digest.hexdigest(),
        near_collision_events=near_events,
        arc_jump_events=jump_events,
        aborted=aborted,
        velocity_noise_floor=floor,
    )
    return trace, metrics


# --- comparisons -------------------------------------------------------------


@dataclass
class ComparisonTable:
    rows: List[dict]
    wins: int
    ties: int
    losses: int
    mean_improvement: float

    @property
    def n_seeds(self):
        return self.wins + self.ties + self.losses

    @property
    def win_rate(self):
        return self.wins / self.n_seeds

    @property
    def verdict(self):
        if self.ties == self.n_seeds:
            return "tie"
        return f"modified wins {self.wins}/{self.n_seeds} ({100 * self.win_rate:.0f}%)"


def summary_row(seed, variant, metrics: RunMetrics) -> dict:
    return {
        "seed": seed,
        "variant": ControllerVariant.parse(variant).value,
        "d_t_all_integral": metrics.d_t_all_integral,
        "collision_count": metrics.collision_count,
        "boundary_violation_time": metrics.boundary_violation_time,
        "all_passed_time": metrics.all_passed_time,
        "min_pairwise_distance": metrics.min_pairwise_distance,
        "noise_checksum": metrics.noise_checksum,
    }


def _run_for_row(args):
    scenario, seed = args
    _, metrics = run_scenario(scenario, seed)
    return summary_row(seed, scenario.variant, metrics)


def compare_controllers(scenario_base: Scenario, seeds: Sequence[int], workers: int = 1,
                        challenger=ControllerVariant.MODIFIED) -> ComparisonTable:
    """Run the original and a modified controller on identical noise per seed.

    A seed is a win when the challenger's time-integrated d_t,all is strictly
    greater (less negative) than the original's.
    """
    seeds = sorted(int(s) for s in seeds)
    if len(seeds) < 2:
        raise ContractError("seeds: need at least two seeds for a comparison")
    variants = [ControllerVariant.ORIGINAL, ControllerVariant.parse(challenger)]
    jobs = [(replace(scenario_base, variant=v), s) for s in seeds for v in variants]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(_run_for_row, jobs))
    else:
        rows = [_run_for_row(j) for j in jobs]
    rows.sort(key=lambda r: (r["seed"], variants.index(ControllerVariant(r["variant"]))))

    wins = ties = losses = 0
    diffs = []
    for base, mod in zip(rows[0::2], rows[1::2]):
        if base["noise_checksum"] != mod["noise_checksum"]:
            raise RuntimeError(f"seed {base['seed']}: variants consumed different noise streams")
        diff = mod["d_t_all_integral"] - base["d_t_all_integral"]
        diffs.append(diff)
        if diff > 0:
            wins += 1
        elif diff == 0:
            ties += 1
        else:
            losses += 1
    return ComparisonTable(rows, wins, ties, losses, float(np.mean(diffs)))


# --- built-in scenarios --------------------------------------------------------


def open_tube_centerline(n=400):
    """S-shaped centerline, 25 m across, used by the six-robot scenario."""
    x = np.linspace(0.0, 25.0, n)
    y = 2.5 * np.sin(2 * np.pi * x / 20.0)
    return np.column_stack([x, y])


def closed_tube_centerline(n=400):
    """Ellipse (semi-axes 1.2 m and 0.7 m) traversed counter-clockwise."""
    th = np.linspace(0.0, 2 * np.pi, n, endpoint=False)
    return np.column_stack([1.2 * np.cos(th), 0.7 * np.sin(th)])


def grid_formation(tube: TubeSpec, start_arc, rows=2, cols=3, spacing=0.6):
    """``rows`` x ``cols`` grid centred on the centerline.

    Rows run along the tube tangent at ``start_arc``; consecutive robots in a
    row are ``spacing`` apart along the curve, rows are ``spacing`` apart
    across it.
    """
    pos = []
    for r in range(rows):
        lateral = (r - (rows - 1) / 2.0) * spacing
        for c in range(cols):
            s = start_arc + c * spacing
            idx = np.searchsorted(tube.curve.arc, s)
            base = tube.curve.points[idx]
            pos.append(base + lateral * tube.curve.normals[idx])
    return np.array(pos)


def even_placement(tube: TubeSpec, n):
    arcs = np.arange(n) * tube.length / n
    idx = np.searchsorted(tube.curve.arc, arcs)
    return tube.curve.points[idx].copy()


def build_paper_scenarios(drift_mode_open="B", drift_mode_closed="A"):
    """The six-robot open-tube simulation and the ten-robot closed-tube analogue."""
    gains6 = ControllerGains(k2=1, k3=1, k4=2, k5=1, r_s=0.2, r_a=0.3, r_c=1.0, r_d=2.0, v_m=1.0)
    # 2 m of curve beyond the finishing line so passed robots keep a tangent
    tube6 = build_tube(open_tube_centerline(), 1.0, closed=False, resample_step=0.02)
    tube6 = replace(tube6, finishing_arc_length=tube6.length - 2.0)
    spacing = max(2 * gains6.r_a, gains6.r_c / 2)
    open6 = Scenario(
        tube=tube6,
        positions=grid_formation(tube6, start_arc=0.5, spacing=spacing),
        velocities=np.zeros((6, 2)),
        gains=gains6,
        noise=NoiseConfig(sigma_p=1.0, sigma_v=1.0, dt_obs=0.02, drift_scaling=drift_mode_open),
        duration=33.0,
        name="open6",
    )

    gains10 = ControllerGains(k2=1, k3=1, k4=2, k5=1, r_s=0.075, r_a=0.125, r_c=0.3, r_d=1.0, v_m=0.1)
    tube10 = build_tube(closed_tube_centerline(), 0.25, closed=True, resample_step=0.005)
    closed10 = Scenario(
        tube=tube10,
        positions=even_placement(tube10, 10),
        velocities=np.zeros((10, 2)),
        gains=gains10,
        noise=NoiseConfig(sigma_p=1e-5, sigma_v=1e-5, dt_obs=0.02, drift_scaling=drift_mode_closed),
        duration=70.0,
        name="closed10",
    )
    return open6, closed10


# --- trace files ---------------------------------------------------------------


class TraceFormatError(ValueError):
    def __init__(self, message, line=None):
        super().__init__(f"line {line}: {message}" if line is not None else message)
        self.line = line


def _fmt(x):
    if isinstance(x, (bool, np.bool_)):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return repr(float(x))


def write_trace(trace: Sequence[TraceRecord], path, with_terms: bool = False) -> None:
    cols = TRACE_COLUMNS + (TERM_COLUMNS if with_terms else [])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for r in trace:
            row = [r.t, r.robot_id, *r.p, *r.v, *r.p_hat, *r.v_hat, r.d_t, r.min_neighbor_dist, r.passed]
            if with_terms:
                if r.terms is None:
                    raise ValueError("trace records carry no control terms")
                for u in (r.terms.u1, r.terms.u2, r.terms.u3, r.terms.u4, r.terms.u5):
                    row.extend(u)
            w.writerow([_fmt(x) for x in row])


def read_trace(path) -> List[TraceRecord]:
    """Parse a trace file; raises TraceFormatError with the offending line."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise TraceFormatError("empty trace file", 1) from None
        if header[: len(TRACE_COLUMNS)] != TRACE_COLUMNS:
            raise TraceFormatError("unexpected header", 1)
        has_terms = header[len(TRACE_COLUMNS):] == TERM_COLUMNS
        if not has_terms and len(header) != len(TRACE_COLUMNS):
            raise TraceFormatError("unexpected header", 1)
        out = []
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise TraceFormatError(f"expected {len(header)} fields, got {len(row)}", lineno)
            try:
                vals = [float(x) for x in row]
            except ValueError as exc:
                raise TraceFormatError(str(exc), lineno) from None
            terms = None
            if has_terms:
                u = np.array(vals[13:]).reshape(5, 2)
                terms = ControlTerms(*u, v_c=np.full(2, np.nan), saturated=False)
            out.append(
                TraceRecord(
                    vals[0], int(vals[1]), np.array(vals[2:4]), np.array(vals[4:6]),
                    np.array(vals[6:8]), np.array(vals[8:10]), vals[10], vals[11], bool(vals[12]), terms,
                )
            )
    if not out:
        raise TraceFormatError("trace has no records", 2)
    return out


def d_t_all_from_trace(trace: Sequence[TraceRecord], r_s: float):
    """Rebuild (times, d_t_all series) from a trace, grouping rows by tick."""
    times, series = [], []
    i = 0
    while i < len(trace):
        t = trace[i].t
        j = i
        while j < len(trace) and trace[j].t == t:
            j += 1
        rows = sorted(trace[i:j], key=lambda r: r.robot_id)
        times.append(t)
        series.append(d_t_all([r.d_t for r in rows], [r.passed for r in rows], r_s))
        i = j
    return np.array(times), np.array(series)


def write_summary(rows: Sequence[dict], path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SUMMARY_COLUMNS)
        for r in rows:
            w.writerow(["" if r[c] is None else _fmt(r[c]) if c != "variant" else r[c] for c in SUMMARY_COLUMNS])
