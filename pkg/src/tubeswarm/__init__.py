"""Swarm navigation through curve virtual tubes under self-localization drift."""

import enum

from .controllers import ControllerGains, ControllerVariant, ControlTerms, acceleration_command, compute_terms
from .dynamics import RobotState, SwarmState, mark_passed, step_dynamics
from .errors import ContractError, MonteCarloInstability, SimulationDiverged, TubeConstructionError
from .harness import (
    ComparisonTable,
    RunMetrics,
    Scenario,
    TraceRecord,
    build_paper_scenarios,
    compare_controllers,
    read_trace,
    run_scenario,
    write_trace,
)
from .noise_analysis import (
    AlignmentLoopModel,
    NoiseVarianceResult,
    closed_form_variances,
    monte_carlo_variance,
    spectral_variance_aligned,
    spectral_variance_single,
)
from .sensing import DriftScaling, NoiseConfig, ObservationState, RelativeMeasurement, neighbors, observe_self
from .tube import GeneratingCurve, TubeQueryResult, TubeSpec, build_tube, has_passed, query

__version__ = "0.1.0"

__all__ = [
    name for name, obj in list(globals().items())
    if not name.startswith("_") and not isinstance(obj, type(enum))
]
