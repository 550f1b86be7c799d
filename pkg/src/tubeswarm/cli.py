"""``tubeswarm`` command line: run, compare, lemma2 and export-plots.

Exit status: 0 on success, 1 when a run aborts on numerical divergence,
2 for configuration / input / output-directory errors, 3 when a Monte Carlo
estimate goes unstable.
"""

from __future__ import annotations

import argparse
import configparser
import csv
import io
import json
import logging
import os
import shutil
import sys
import tempfile
from dataclasses import fields, replace
from pathlib import Path

import numpy as np

from .controllers import ControllerGains, ControllerVariant
from .errors import ContractError, MonteCarloInstability, TubeConstructionError
from .harness import (
    Scenario,
    TraceFormatError,
    build_paper_scenarios,
    compare_controllers,
    d_t_all_from_trace,
    read_trace,
    run_scenario,
    summary_row,
    write_summary,
    write_trace,
)
from .noise_analysis import closed_form_variances, monte_carlo_variance, spectral_variance_aligned
from .sensing import DriftScaling, NoiseConfig
from .tube import build_tube, write_boundary_csv

log = logging.getLogger("tubeswarm")

BUILTIN = ("open6", "closed10")
SIDECAR = "scenario.ini"

_SCENARIO_KEYS = {
    "base", "name", "waypoints", "closed", "half_width", "resample_step", "finishing_arc_length",
    "positions", "velocities", "variant", "duration", "dt_physics", "dt_ctrl", "post_pass_flocking",
}
_TUBE_KEYS = ("waypoints", "closed", "half_width", "resample_step", "finishing_arc_length")
_GAIN_KEYS = {f.name for f in fields(ControllerGains)}
_NOISE_KEYS = {"sigma_p", "sigma_v", "drift_mode"}


class ConfigError(Exception):
    """Bad scenario source, flag value or output directory (exit status 2)."""


# --- scenario files ------------------------------------------------------------


def load_config(source) -> configparser.ConfigParser:
    """Read a scenario file, or start a config from a built-in scenario name."""
    cfg = configparser.ConfigParser(interpolation=None, inline_comment_prefixes=(";", "#"))
    cfg.optionxform = str
    if str(source) in BUILTIN:
        cfg.read_dict({"scenario": {"base": str(source)}, "gains": {}, "noise": {}})
        return cfg
    path = Path(source)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"--scenario: cannot read {path}: {exc.strerror or exc}") from None
    try:
        cfg.read_string(text, source=str(path))
    except configparser.Error as exc:
        raise ConfigError(f"scenario file {path}: {exc}") from None
    for section in ("scenario", "gains", "noise"):
        if not cfg.has_section(section):
            cfg.add_section(section)
    allowed = {"scenario": _SCENARIO_KEYS, "gains": _GAIN_KEYS, "noise": _NOISE_KEYS}
    for section in cfg.sections():
        if section not in allowed:
            raise ConfigError(f"scenario file {path}: unknown section [{section}]")
        for key in cfg[section]:
            if key not in allowed[section]:
                raise ConfigError(f"scenario file {path}: unknown field [{section}] {key}")
    return cfg


def _get(cfg, section, key, conv):
    raw = cfg[section][key]
    try:
        return conv(raw)
    except (ValueError, TypeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"[{section}] {key}: cannot parse {raw!r} ({exc})") from None


def _bool(raw):
    value = str(raw).strip().lower()
    if value in ("1", "true", "yes", "on"):
        return True
    if value in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected true or false")


def _opt_float(raw):
    return None if str(raw).strip().lower() in ("", "none") else float(raw)


def _points(raw):
    arr = np.asarray(json.loads(raw), dtype=float)
    if arr.ndim != 2 or arr.shape[1] != 2:
        raise ValueError("expected a JSON list of [x, y] pairs")
    return arr


def scenario_from_config(cfg: configparser.ConfigParser) -> Scenario:
    """Build a Scenario; ConfigError messages name the offending field."""
    sc = cfg["scenario"]
    base = sc.get("base")
    if base is not None and base not in BUILTIN:
        raise ConfigError(f"[scenario] base: unknown built-in scenario {base!r} (choose {', '.join(BUILTIN)})")

    if base is not None:
        drift = _get(cfg, "noise", "drift_mode", DriftScaling.parse) if "drift_mode" in cfg["noise"] else None
        open6, closed10 = build_paper_scenarios(
            drift_mode_open=drift or "B", drift_mode_closed=drift or "A"
        )
        template = open6 if base == "open6" else closed10
    else:
        for key in ("waypoints", "positions"):
            if key not in sc:
                raise ConfigError(f"[scenario] {key}: required when no base scenario is given")
        template = None

    try:
        if "waypoints" in sc:
            tube = build_tube(
                _get(cfg, "scenario", "waypoints", _points),
                _get(cfg, "scenario", "half_width", float) if "half_width" in sc else 1.0,
                closed=_get(cfg, "scenario", "closed", _bool) if "closed" in sc else False,
                resample_step=_get(cfg, "scenario", "resample_step", float) if "resample_step" in sc else 0.01,
                finishing_arc_length=(
                    _get(cfg, "scenario", "finishing_arc_length", _opt_float)
                    if "finishing_arc_length" in sc else None
                ),
            )
        else:
            extra = [k for k in _TUBE_KEYS if k in sc]
            if extra:
                raise ConfigError(f"[scenario] {extra[0]}: only allowed together with waypoints")
            tube = template.tube
    except (ContractError, TubeConstructionError) as exc:
        raise ConfigError(f"[scenario] waypoints: {exc}") from None

    if "positions" in sc:
        positions = _get(cfg, "scenario", "positions", _points)
    else:
        positions = template.positions
    if "velocities" in sc:
        velocities = _get(cfg, "scenario", "velocities", _points)
    elif template is not None and "positions" not in sc:
        velocities = template.velocities
    else:
        velocities = np.zeros_like(positions)

    gain_values = {}
    for key in cfg["gains"]:
        gain_values[key] = _get(cfg, "gains", key, _opt_float if key == "a_max" else float)
    try:
        gains = replace(template.gains, **gain_values) if template else ControllerGains(**gain_values)
    except ContractError as exc:
        raise ConfigError(f"[gains] {exc}") from None

    nz = cfg["noise"]
    base_noise = template.noise if template else NoiseConfig()
    dt_ctrl = _get(cfg, "scenario", "dt_ctrl", float) if "dt_ctrl" in sc else 0.02
    try:
        noise = NoiseConfig(
            sigma_p=_get(cfg, "noise", "sigma_p", float) if "sigma_p" in nz else base_noise.sigma_p,
            sigma_v=_get(cfg, "noise", "sigma_v", float) if "sigma_v" in nz else base_noise.sigma_v,
            dt_obs=dt_ctrl,
            drift_scaling=(
                _get(cfg, "noise", "drift_mode", DriftScaling.parse) if "drift_mode" in nz else base_noise.drift_scaling
            ),
        )
    except ContractError as exc:
        raise ConfigError(f"[noise] {exc}") from None

    kwargs = dict(tube=tube, positions=positions, velocities=velocities, gains=gains, noise=noise)
    if "variant" in sc:
        kwargs["variant"] = _get(cfg, "scenario", "variant", ControllerVariant.parse)
    for key in ("duration", "dt_physics"):
        if key in sc:
            kwargs[key] = _get(cfg, "scenario", key, float)
    kwargs["dt_ctrl"] = dt_ctrl
    if "post_pass_flocking" in sc:
        kwargs["post_pass_flocking"] = _get(cfg, "scenario", "post_pass_flocking", _bool)
    kwargs["name"] = sc.get("name", base or "custom")

    scenario = replace(template, **kwargs) if template else Scenario(**kwargs)
    try:
        scenario.validate()
    except ContractError as exc:
        raise ConfigError(f"[scenario] {exc}") from None
    return scenario


def apply_overrides(cfg, args) -> None:
    """Copy command-line overrides into the config so the sidecar records them."""
    sc, nz = cfg["scenario"], cfg["noise"]
    if getattr(args, "variant", None):
        sc["variant"] = args.variant
    if getattr(args, "duration", None) is not None:
        sc["duration"] = repr(float(args.duration))
    if getattr(args, "sigma_p", None) is not None:
        nz["sigma_p"] = repr(float(args.sigma_p))
    if getattr(args, "sigma_v", None) is not None:
        nz["sigma_v"] = repr(float(args.sigma_v))
    if getattr(args, "drift_mode", None):
        nz["drift_mode"] = args.drift_mode


def _config_text(cfg) -> str:
    buf = io.StringIO()
    cfg.write(buf)
    return buf.getvalue()


# --- output staging --------------------------------------------------------------


class _Staging:
    """Write into a private temp directory inside ``out``; publish on success.

    A failed command leaves no partial files behind.
    """

    def __init__(self, out):
        self.out = Path(out)
        try:
            self.out.mkdir(parents=True, exist_ok=True)
            self.tmp = Path(tempfile.mkdtemp(prefix=".staging-", dir=self.out))
        except OSError as exc:
            raise ConfigError(f"--out: output directory {self.out} is not writable: {exc.strerror or exc}") from None

    def path(self, name):
        return self.tmp / name

    def commit(self):
        for item in sorted(self.tmp.iterdir()):
            os.replace(item, self.out / item.name)
        self.tmp.rmdir()

    def discard(self):
        shutil.rmtree(self.tmp, ignore_errors=True)


def _staged(out, work):
    stage = _Staging(out)
    try:
        status = work(stage)
    except BaseException:
        stage.discard()
        raise
    stage.commit()
    return status


# --- commands --------------------------------------------------------------------


def _metric_lines(metrics):
    apt = "none" if metrics.all_passed_time is None else f"{metrics.all_passed_time:.2f} s"
    return [
        f"d_t_all_integral        {metrics.d_t_all_integral:.6g} m*s",
        f"collision_count         {metrics.collision_count}",
        f"boundary_violation_time {metrics.boundary_violation_time:.2f} s",
        f"all_passed_time         {apt}",
        f"min_pairwise_distance   {metrics.min_pairwise_distance:.4f} m",
        f"velocity_noise_floor    {metrics.velocity_noise_floor:.4g} m^2/s^2",
    ]


def cmd_run(args) -> int:
    cfg = load_config(args.scenario)
    apply_overrides(cfg, args)
    scenario = scenario_from_config(cfg)

    def work(stage):
        trace, metrics = run_scenario(scenario, args.seed, with_terms=args.trace_terms)
        write_trace(trace, stage.path("trace.csv"), with_terms=args.trace_terms)
        write_summary([summary_row(args.seed, scenario.variant, metrics)], stage.path("summary.csv"))
        stage.path(SIDECAR).write_text(_config_text(cfg))
        print(f"{scenario.name} / {scenario.variant.value} / seed {args.seed}")
        for line in _metric_lines(metrics):
            print("  " + line)
        if metrics.aborted:
            print(f"run aborted: {metrics.aborted}", file=sys.stderr)
            return 1
        return 0

    return _staged(args.out, work)


def parse_seeds(text: str):
    """``A..B`` (inclusive) or a comma-separated list."""
    try:
        if ".." in text:
            lo, hi = text.split("..", 1)
            lo, hi = int(lo), int(hi)
            if hi < lo:
                raise ValueError("empty range")
            return list(range(lo, hi + 1))
        return sorted({int(s) for s in text.split(",") if s.strip()})
    except ValueError as exc:
        raise ConfigError(f"--seeds: cannot parse {text!r} ({exc})") from None


def cmd_compare(args) -> int:
    seeds = parse_seeds(args.seeds)
    if len(seeds) < 2:
        raise ConfigError(f"--seeds: a comparison needs at least two seeds, got {len(seeds)}")
    cfg = load_config(args.scenario)
    apply_overrides(cfg, args)
    scenario = scenario_from_config(cfg)
    challenger = args.variant or "modified"
    if ControllerVariant.parse(challenger) is ControllerVariant.ORIGINAL:
        raise ConfigError("--variant: the challenger must be modified or modified-accel")

    def work(stage):
        table = compare_controllers(scenario, seeds, workers=args.workers, challenger=challenger)
        write_summary(table.rows, stage.path("comparison.csv"))
        stage.path(SIDECAR).write_text(_config_text(cfg))
        print(f"{scenario.name}: {len(seeds)} seeds, original vs {ControllerVariant.parse(challenger).value}")
        print(f"  win-rate: {table.verdict}")
        print(f"  ties {table.ties}, losses {table.losses}, mean d_t_all_integral improvement "
              f"{table.mean_improvement:.6g} m*s")
        return 0

    return _staged(args.out, work)


def _float_list(text, flag, conv=float):
    try:
        values = [conv(s) for s in text.split(",") if s.strip()]
    except ValueError as exc:
        raise ConfigError(f"{flag}: cannot parse {text!r} ({exc})") from None
    if not values:
        raise ConfigError(f"{flag}: empty grid")
    return values


LEMMA2_COLUMNS = ["N", "k5", "k_v", "sigma_closed", "sigma_spectral", "sigma_mc", "ratio"]


def cmd_lemma2(args) -> int:
    Ns = _float_list(args.N, "--N", int)
    k5s = _float_list(args.k5, "--k5")
    kvs = _float_list(args.kv, "--kv")
    if args.trials < 1 and not args.no_monte_carlo:
        raise ConfigError("--trials: must be at least 1")

    def work(stage):
        rows = []
        worst_spec = worst_mc = 0.0
        for cell, (N, k5, kv) in enumerate((N, k5, kv) for N in Ns for k5 in k5s for kv in kvs):
            cf = closed_form_variances(N, kv, k5, args.sigma_v)
            spec = spectral_variance_aligned(N, kv, k5, args.sigma_v)
            mc = float("nan")
            if not args.no_monte_carlo:
                dt = min(args.dt, 1e-3 / kv)
                mc = monte_carlo_variance(
                    N, kv, k5, args.sigma_v, variant="aligned", dt=dt, duration=args.mc_duration,
                    trials=args.trials, seed=args.seed + cell, burn_in=args.burn_in,
                ).sigma_double_prime
            ref = cf.sigma_double_prime
            if ref > 0:
                worst_spec = max(worst_spec, abs(spec - ref) / ref)
                if not np.isnan(mc):
                    worst_mc = max(worst_mc, abs(mc - ref) / ref)
            rows.append([N, k5, kv, ref, spec, mc, cf.ratio])
        with open(stage.path("lemma2.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(LEMMA2_COLUMNS)
            for r in rows:
                w.writerow([str(r[0])] + [repr(float(x)) for x in r[1:]])
        print(f"{len(rows)} grid cells")
        print(f"  max relative disagreement spectral vs closed form:    {worst_spec:.3e}")
        if not args.no_monte_carlo:
            print(f"  max relative disagreement Monte Carlo vs closed form: {worst_mc:.3e}")
        return 0

    return _staged(args.out, work)


def cmd_export_plots(args) -> int:
    trace_path = Path(args.trace)
    try:
        trace = read_trace(trace_path)
    except TraceFormatError as exc:
        raise ConfigError(f"{trace_path}: malformed trace, {exc}") from None
    except OSError as exc:
        raise ConfigError(f"{trace_path}: cannot read trace: {exc.strerror or exc}") from None
    source = args.scenario or trace_path.parent / SIDECAR
    if args.scenario is None and not Path(source).exists():
        raise ConfigError(f"--scenario: no {SIDECAR} next to the trace; pass the scenario explicitly")
    scenario = scenario_from_config(load_config(source))

    def work(stage):
        write_boundary_csv(scenario.tube, stage.path("tube_boundary.csv"))
        times, series = d_t_all_from_trace(trace, scenario.gains.r_s)
        with open(stage.path("d_t_all.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["t", "d_t_all"])
            w.writerows([repr(float(t)), repr(float(v))] for t, v in zip(times, series))
        ordered = sorted(trace, key=lambda r: (r.robot_id, r.t))
        with open(stage.path("trajectories.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["robot_id", "t", "px", "py", "phatx", "phaty"])
            for r in ordered:
                w.writerow([str(r.robot_id)] + [repr(float(x)) for x in (r.t, *r.p, *r.p_hat)])
        with open(stage.path("drift.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["robot_id", "t", "drift"])
            for r in ordered:
                drift = float(np.hypot(*(r.p_hat - r.p)))
                w.writerow([str(r.robot_id), repr(float(r.t)), repr(drift)])
        print(f"wrote tube_boundary.csv, trajectories.csv, d_t_all.csv ({len(series)} ticks), drift.csv")
        return 0

    return _staged(args.out, work)


# --- argument parsing ----------------------------------------------------------------


def _scenario_flags(p, variant_default=None):
    p.add_argument("--scenario", default="open6",
                   help="built-in name (open6, closed10) or path to a scenario file")
    p.add_argument("--variant", choices=[v.value for v in ControllerVariant], default=variant_default)
    p.add_argument("--sigma-p", type=float, help="position-drift variance (overrides the scenario)")
    p.add_argument("--sigma-v", type=float, help="velocity-noise variance (overrides the scenario)")
    p.add_argument("--drift-mode", choices=["A", "B"], help="A: sigma_p per tick, B: continuous")
    p.add_argument("--duration", type=float, help="simulated seconds")
    p.add_argument("--out", required=True, help="output directory")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tubeswarm", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="simulate one scenario and write its trace")
    _scenario_flags(p)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--trace-terms", action="store_true", help="add u1..u5 columns to the trace")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("compare", help="original vs modified controller over paired seeds")
    _scenario_flags(p)
    p.add_argument("--seeds", required=True, help="A..B inclusive, or a comma list")
    p.add_argument("--workers", type=int, default=1)
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("lemma2", help="velocity-noise variance: closed form, spectral, Monte Carlo")
    p.add_argument("--N", default="1,2,6", help="comma list of swarm sizes")
    p.add_argument("--k5", default="1", help="comma list of alignment gains")
    p.add_argument("--kv", default="1", help="comma list of tracking gains")
    p.add_argument("--sigma-v", type=float, default=1.0)
    p.add_argument("--trials", type=int, default=100)
    p.add_argument("--mc-duration", type=float, default=20.0)
    p.add_argument("--burn-in", type=float, default=5.0)
    p.add_argument("--dt", type=float, default=1e-3, help="Monte Carlo step (capped at 1e-3/k_v)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--no-monte-carlo", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_lemma2)

    p = sub.add_parser("export-plots", help="turn a trace into plot-ready CSV files")
    p.add_argument("trace")
    p.add_argument("--scenario", help=f"scenario of the run (default: {SIDECAR} beside the trace)")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_export_plots)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"tubeswarm {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except MonteCarloInstability as exc:
        print(f"tubeswarm {args.command}: Monte Carlo unstable: {exc}", file=sys.stderr)
        return 3
    except ContractError as exc:
        print(f"tubeswarm {args.command}: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
