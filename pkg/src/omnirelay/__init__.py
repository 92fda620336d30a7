"""Relay positioning for multirotors carrying directional antennas.

A fully actuated tilted-rotor hexarotor and a conventional quadrotor run the
same nonlinear MPC, which tracks a relay set-point while keeping a base
station and a maneuvering UAV inside two body-fixed antenna cones.
"""

from importlib import resources

from ._backend import BACKEND
from .comms import CommParams, default_comm_params
from .errors import (
    DegenerateGeometryError,
    InfeasibleError,
    InvalidInputError,
    InvalidStateError,
    OmniRelayError,
    ScenarioParseError,
    ScenarioValidationError,
)
from .nmpc import NmpcConfig, OcpProblem, OcpSolution, RecedingHorizonController, SolverOptions, solve
from .scenario_io import load_scenario, parse_scenario, serialize_scenario
from .sim import Scenario, SimLog, metrics, run_closed_loop
from .vehicle import MravParams, MravState, planar_quadrotor, tilted_hexarotor

__version__ = "0.1.0"


def canonical_scenario_path() -> str:
    """Filesystem path of the shipped canonical circular-mission scenario."""
    return str(resources.files(__package__) / "scenarios" / "canonical.yaml")


__all__ = [
    "BACKEND",
    "CommParams",
    "DegenerateGeometryError",
    "InfeasibleError",
    "InvalidInputError",
    "InvalidStateError",
    "MravParams",
    "MravState",
    "NmpcConfig",
    "OcpProblem",
    "OcpSolution",
    "OmniRelayError",
    "RecedingHorizonController",
    "Scenario",
    "ScenarioParseError",
    "ScenarioValidationError",
    "SimLog",
    "SolverOptions",
    "canonical_scenario_path",
    "default_comm_params",
    "load_scenario",
    "metrics",
    "parse_scenario",
    "planar_quadrotor",
    "run_closed_loop",
    "serialize_scenario",
    "solve",
    "tilted_hexarotor",
]
