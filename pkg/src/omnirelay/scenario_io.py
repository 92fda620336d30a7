"""Scenario documents: YAML in, validated :class:`~omnirelay.sim.Scenario` out.

The document is a nested mapping. Only ``duration``, ``bs_position``,
``uav2_trajectory`` and ``initial_state.position`` are required; everything
else falls back to the defaults documented in the README. Angles may be given
in degrees through a ``*_deg`` key; :func:`serialize_scenario` always writes
radians so that a document survives a parse/serialize cycle bit for bit.

Every validation failure raises :class:`ScenarioValidationError` carrying the
dotted path of the offending field, e.g. ``comm.relay_antennas.bs.peak_gain_db``.
"""

from __future__ import annotations

import math

import numpy as np
import yaml

from . import comms, vehicle
from .errors import InvalidInputError, ScenarioParseError, ScenarioValidationError
from .nmpc import NmpcConfig, SolverOptions
from .sim import (
    VEHICLE_KINDS,
    CircleTrajectory,
    RelayReference,
    Scenario,
    WaypointTrajectory,
    WindSpec,
)

_PRESETS = {"omni": vehicle.tilted_hexarotor, "under": vehicle.planar_quadrotor}
_PRESET_KEYS = {
    "omni": {"mass", "arm_length", "tilt_deg", "inertia", "drag_torque_coefficient",
             "thrust_limits", "thrust_rate_limits"},
    "under": {"mass", "arm_length", "inertia", "drag_torque_coefficient",
              "thrust_limits", "thrust_rate_limits"},
}
_EXPLICIT_KEYS = {
    "name", "mass", "inertia", "rotor_positions", "rotor_tilt_angles", "spin_directions",
    "drag_torque_coefficient", "thrust_min", "thrust_max", "thrust_rate_min", "thrust_rate_max",
}


def _join(path: str, key) -> str:
    return f"{path}.{key}" if path else str(key)


def _mapping(doc, path: str, allowed: set | None = None) -> dict:
    if doc is None:
        return {}
    if not isinstance(doc, dict):
        raise ScenarioValidationError(path or "<root>", "expected a mapping")
    if allowed is not None:
        extra = sorted(str(k) for k in doc if k not in allowed)
        if extra:
            raise ScenarioValidationError(_join(path, extra[0]), "unknown field")
    return doc


def _number(doc: dict, key: str, path: str, default=None, required=False) -> float | None:
    if key not in doc or doc[key] is None:
        if required:
            raise ScenarioValidationError(_join(path, key), "required field is missing")
        return default
    value = doc[key]
    if isinstance(value, str):
        # YAML 1.1 reads exponent forms such as 2.4e9 as strings
        try:
            value = float(value)
        except ValueError:
            pass
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ScenarioValidationError(_join(path, key), f"expected a number, got {value!r}")
    value = float(value)
    if not math.isfinite(value):
        raise ScenarioValidationError(_join(path, key), "must be finite")
    return value


def _angle(doc: dict, key: str, path: str, default=None, required=False) -> float | None:
    """Read ``key`` (radians) or ``key_deg`` (degrees); giving both is an error."""
    deg_key = f"{key}_deg"
    if key in doc and deg_key in doc:
        raise ScenarioValidationError(_join(path, deg_key), f"give either {key} or {deg_key}, not both")
    if deg_key in doc:
        return math.radians(_number(doc, deg_key, path, required=True))
    return _number(doc, key, path, default=default, required=required)


def _vector(doc: dict, key: str, path: str, size: int | tuple, default=None, required=False):
    if key not in doc or doc[key] is None:
        if required:
            raise ScenarioValidationError(_join(path, key), "required field is missing")
        return None if default is None else np.array(default, dtype=float)
    value = doc[key]
    sizes = size if isinstance(size, tuple) else (size,)
    if not isinstance(value, (list, tuple)) or len(value) not in sizes:
        want = " or ".join(str(s) for s in sizes)
        raise ScenarioValidationError(_join(path, key), f"expected a list of {want} numbers")
    out = []
    for i, item in enumerate(value):
        if isinstance(item, bool) or not isinstance(item, (int, float)) or not math.isfinite(item):
            raise ScenarioValidationError(f"{_join(path, key)}[{i}]", f"expected a finite number, got {item!r}")
        out.append(float(item))
    return np.array(out)


def _matrix(doc: dict, key: str, path: str, cols: int):
    value = doc.get(key)
    if not isinstance(value, (list, tuple)) or not value:
        raise ScenarioValidationError(_join(path, key), f"expected a list of {cols}-vectors")
    return np.array([_vector({key: row}, key, f"{_join(path, key)}[{i}]", cols, required=True)
                     for i, row in enumerate(value)])


def _build(path: str, fn, *args, **kwargs):
    """Call a constructor, re-raising its invariant errors at ``path``."""
    try:
        return fn(*args, **kwargs)
    except InvalidInputError as exc:
        raise ScenarioValidationError(path, str(exc)) from None
    except (TypeError, ValueError) as exc:
        raise ScenarioValidationError(path, str(exc)) from None


def _parse_trajectory(doc, path: str):
    doc = _mapping(doc, path, {"circle", "waypoints"})
    if len(doc) != 1:
        raise ScenarioValidationError(path, "expected exactly one of 'circle' or 'waypoints'")
    if "circle" in doc:
        p = _join(path, "circle")
        c = _mapping(doc["circle"], p, {"center", "radius", "period", "altitude"})
        center = _vector(c, "center", p, (2, 3), required=True)
        altitude = _number(c, "altitude", p)
        if altitude is None:
            if center.shape[0] != 3:
                raise ScenarioValidationError(_join(p, "altitude"), "required when center has 2 entries")
            altitude = float(center[2])
        elif center.shape[0] == 3 and center[2] != altitude:
            raise ScenarioValidationError(_join(p, "altitude"), "disagrees with the z entry of center")
        radius = _number(c, "radius", p, required=True)
        period = _number(c, "period", p, required=True)
        if radius < 0:
            raise ScenarioValidationError(_join(p, "radius"), "must be non-negative")
        if period <= 0:
            raise ScenarioValidationError(_join(p, "period"), "must be positive")
        return _build(p, CircleTrajectory, center, radius, period, altitude)
    p = _join(path, "waypoints")
    items = doc["waypoints"]
    if not isinstance(items, list) or not items:
        raise ScenarioValidationError(p, "expected a non-empty list of {t, position} entries")
    times, positions = [], []
    for i, item in enumerate(items):
        ip = f"{p}[{i}]"
        item = _mapping(item, ip, {"t", "position"})
        times.append(_number(item, "t", ip, required=True))
        positions.append(_vector(item, "position", ip, 3, required=True))
    if any(b <= a for a, b in zip(times, times[1:])):
        raise ScenarioValidationError(p, "waypoint times must be strictly increasing")
    return _build(p, WaypointTrajectory, times, positions)


def _parse_reference(doc, path: str) -> RelayReference:
    doc = _mapping(doc, path, {"mode", "altitude", "position"})
    mode = doc.get("mode", "midpoint")
    if mode not in ("midpoint", "fixed"):
        raise ScenarioValidationError(_join(path, "mode"), "must be 'midpoint' or 'fixed'")
    if mode == "fixed":
        if "altitude" in doc:
            raise ScenarioValidationError(_join(path, "altitude"), "only used in midpoint mode")
        return RelayReference("fixed", position=_vector(doc, "position", path, 3, required=True))
    if "position" in doc:
        raise ScenarioValidationError(_join(path, "position"), "only used in fixed mode")
    return RelayReference("midpoint", altitude=_number(doc, "altitude", path, default=15.0))


def _parse_vehicle(kind: str, doc, path: str) -> vehicle.MravParams:
    doc = _mapping(doc, path)
    if "rotor_positions" in doc:
        _mapping(doc, path, _EXPLICIT_KEYS)
        inertia = doc.get("inertia")
        if not isinstance(inertia, list) or len(inertia) != 3:
            raise ScenarioValidationError(_join(path, "inertia"), "expected a 3x3 matrix")
        inertia = np.array([_vector({"r": row}, "r", f"{_join(path, 'inertia')}[{i}]", 3, required=True)
                            for i, row in enumerate(inertia)])
        positions = _matrix(doc, "rotor_positions", path, 3)
        n = positions.shape[0]
        fields = dict(
            mass=_number(doc, "mass", path, required=True),
            inertia=inertia,
            rotor_positions=positions,
            rotor_tilt_angles=_vector(doc, "rotor_tilt_angles", path, n, required=True),
            spin_directions=_vector(doc, "spin_directions", path, n, required=True),
            drag_torque_coefficient=_number(doc, "drag_torque_coefficient", path, required=True),
            thrust_min=_number(doc, "thrust_min", path, required=True),
            thrust_max=_number(doc, "thrust_max", path, required=True),
            thrust_rate_min=_number(doc, "thrust_rate_min", path, required=True),
            thrust_rate_max=_number(doc, "thrust_rate_max", path, required=True),
            name=str(doc.get("name", kind)),
        )
        params = _build(path, vehicle.MravParams, **fields)
    else:
        _mapping(doc, path, _PRESET_KEYS[kind])
        kwargs = {}
        for key in ("mass", "arm_length", "tilt_deg", "drag_torque_coefficient"):
            if key in doc:
                kwargs[key] = _number(doc, key, path)
        if "inertia" in doc:
            kwargs["inertia"] = tuple(_vector(doc, "inertia", path, 3))
        for key in ("thrust_limits", "thrust_rate_limits"):
            if key in doc:
                kwargs[key] = tuple(_vector(doc, key, path, 2))
        params = _build(path, _PRESETS[kind], **kwargs)
    rank = vehicle.allocation_rank(params)
    if kind == "omni" and rank != 6:
        raise ScenarioValidationError(path, f"the omni vehicle needs a rank-6 allocation, got rank {rank}")
    if kind == "under" and rank != 4:
        raise ScenarioValidationError(path, f"the under vehicle needs a rank-4 allocation, got rank {rank}")
    return params


def _parse_antenna(doc, path: str, default: comms.AntennaSpec) -> comms.AntennaSpec:
    doc = _mapping(doc, path, {"boresight_body", "peak_gain_db", "half_power_beamwidth",
                               "half_power_beamwidth_deg", "floor_gain_db"})
    boresight = _vector(doc, "boresight_body", path, 3, default=default.boresight_body)
    norm = float(np.linalg.norm(boresight))
    if not norm > 0:
        raise ScenarioValidationError(_join(path, "boresight_body"), "must be nonzero")
    if abs(norm - 1.0) > 1e-12:
        boresight = boresight / norm
    return _build(
        path, comms.AntennaSpec, boresight,
        _number(doc, "peak_gain_db", path, default=default.peak_gain_db),
        _angle(doc, "half_power_beamwidth", path, default=default.half_power_beamwidth),
        _number(doc, "floor_gain_db", path, default=default.floor_gain_db),
    )


def _parse_antenna_pair(doc, path: str, defaults: tuple) -> tuple:
    doc = _mapping(doc, path, {"bs", "uav2"})
    return (
        _parse_antenna(doc.get("bs"), _join(path, "bs"), defaults[comms.BS_LINK]),
        _parse_antenna(doc.get("uav2"), _join(path, "uav2"), defaults[comms.UAV2_LINK]),
    )


def _parse_comm(doc, path: str) -> comms.CommParams:
    doc = _mapping(doc, path, {"tx_power_dbm", "carrier_frequency_hz", "noise_power_dbm",
                               "max_misalignment", "max_misalignment_deg", "min_snr_db",
                               "relay_antennas", "peer_antennas"})
    base = comms.default_comm_params()
    return _build(
        path, comms.CommParams,
        tx_power_dbm=_number(doc, "tx_power_dbm", path, default=base.tx_power_dbm),
        carrier_frequency_hz=_number(doc, "carrier_frequency_hz", path, default=base.carrier_frequency_hz),
        noise_power_dbm=_number(doc, "noise_power_dbm", path, default=base.noise_power_dbm),
        max_misalignment=_angle(doc, "max_misalignment", path, default=base.max_misalignment),
        relay_antennas=_parse_antenna_pair(doc.get("relay_antennas"), _join(path, "relay_antennas"),
                                           base.relay_antennas),
        peer_antennas=_parse_antenna_pair(doc.get("peer_antennas"), _join(path, "peer_antennas"),
                                          base.peer_antennas),
        min_snr_db=_number(doc, "min_snr_db", path),
    )


def _parse_nmpc(doc, path: str) -> NmpcConfig:
    doc = _mapping(doc, path, {"horizon", "step_dt", "output_weights", "rate_weight", "solver"})
    base = NmpcConfig()
    horizon = doc.get("horizon", base.horizon)
    if isinstance(horizon, bool) or not isinstance(horizon, int):
        raise ScenarioValidationError(_join(path, "horizon"), "expected an integer")
    sp = _join(path, "solver")
    sdoc = _mapping(doc.get("solver"), sp, set(SolverOptions.__dataclass_fields__))
    sbase = SolverOptions()
    solver_kwargs = {}
    for name in SolverOptions.__dataclass_fields__:
        default = getattr(sbase, name)
        if isinstance(default, int) and not isinstance(default, bool):
            value = sdoc.get(name, default)
            if isinstance(value, bool) or not isinstance(value, int):
                raise ScenarioValidationError(_join(sp, name), "expected an integer")
            solver_kwargs[name] = value
        else:
            solver_kwargs[name] = _number(sdoc, name, sp, default=default)
    solver = _build(sp, SolverOptions, **solver_kwargs)
    return _build(
        path, NmpcConfig,
        horizon=horizon,
        step_dt=_number(doc, "step_dt", path, default=base.step_dt),
        output_weights=tuple(_vector(doc, "output_weights", path, 5, default=base.output_weights)),
        rate_weight=_number(doc, "rate_weight", path, default=base.rate_weight),
        solver=solver,
    )


def _parse_wind(doc, path: str) -> WindSpec:
    doc = _mapping(doc, path, {"enabled", "mean", "sigma", "correlation_time"})
    enabled = doc.get("enabled", False)
    if not isinstance(enabled, bool):
        raise ScenarioValidationError(_join(path, "enabled"), "expected true or false")
    sigma = doc.get("sigma")
    if isinstance(sigma, (int, float)) and not isinstance(sigma, bool):
        doc = dict(doc, sigma=[sigma] * 3)
    spec = dict(
        mean=_vector(doc, "mean", path, 3, default=np.zeros(3)),
        sigma=_vector(doc, "sigma", path, 3, default=np.zeros(3)),
        correlation_time=_number(doc, "correlation_time", path, default=2.0),
        enabled=enabled,
    )
    if np.any(spec["sigma"] < 0):
        raise ScenarioValidationError(_join(path, "sigma"), "must be non-negative")
    if spec["correlation_time"] <= 0:
        raise ScenarioValidationError(_join(path, "correlation_time"), "must be positive")
    return _build(path, WindSpec, **spec)


_TOP_KEYS = {
    "duration", "sim_dt", "control_dt", "bs_position", "uav2_trajectory", "relay_reference",
    "initial_state", "vehicles", "comm", "nmpc", "wind", "rng_seed",
}


def scenario_from_dict(doc) -> Scenario:
    """Validate a parsed document and build the scenario, applying defaults."""
    doc = _mapping(doc, "", _TOP_KEYS)
    if not doc:
        raise ScenarioValidationError("<root>", "empty scenario document")
    duration = _number(doc, "duration", "", required=True)
    if duration <= 0:
        raise ScenarioValidationError("duration", "must be positive")
    sim_dt = _number(doc, "sim_dt", "", default=0.01)
    control_dt = _number(doc, "control_dt", "", default=0.05)
    if sim_dt <= 0:
        raise ScenarioValidationError("sim_dt", "must be positive")
    if control_dt <= 0:
        raise ScenarioValidationError("control_dt", "must be positive")
    ratio = control_dt / sim_dt
    if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
        raise ScenarioValidationError("control_dt", "must be an integer multiple of sim_dt")
    if "uav2_trajectory" not in doc:
        raise ScenarioValidationError("uav2_trajectory", "required field is missing")

    init = _mapping(doc.get("initial_state"), "initial_state",
                    {"position", "velocity", "attitude", "angular_velocity"})
    if "initial_state" not in doc:
        raise ScenarioValidationError("initial_state", "required field is missing")
    attitude = _vector(init, "attitude", "initial_state", 4, default=[1.0, 0.0, 0.0, 0.0])
    if not np.linalg.norm(attitude) > 0:
        raise ScenarioValidationError("initial_state.attitude", "quaternion must be nonzero")

    vdoc = _mapping(doc.get("vehicles"), "vehicles", set(VEHICLE_KINDS))
    vehicles = {kind: _parse_vehicle(kind, vdoc.get(kind), _join("vehicles", kind)) for kind in VEHICLE_KINDS}

    seed = doc.get("rng_seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2**64:
        raise ScenarioValidationError("rng_seed", "expected an integer in [0, 2^64)")

    scenario = _build(
        "<root>", Scenario,
        duration=duration,
        bs_position=_vector(doc, "bs_position", "", 3, required=True),
        uav2_trajectory=_parse_trajectory(doc["uav2_trajectory"], "uav2_trajectory"),
        initial_position=_vector(init, "position", "initial_state", 3, required=True),
        vehicles=vehicles,
        comm=_parse_comm(doc.get("comm"), "comm"),
        nmpc=_parse_nmpc(doc.get("nmpc"), "nmpc"),
        sim_dt=sim_dt,
        control_dt=control_dt,
        relay_reference=_parse_reference(doc.get("relay_reference"), "relay_reference"),
        initial_velocity=_vector(init, "velocity", "initial_state", 3, default=np.zeros(3)),
        initial_attitude=attitude,
        initial_angular_velocity=_vector(init, "angular_velocity", "initial_state", 3, default=np.zeros(3)),
        wind=_parse_wind(doc.get("wind"), "wind"),
        rng_seed=seed,
    )
    for kind, params in vehicles.items():
        try:
            scenario.initial_state(kind)
        except Exception as exc:
            raise ScenarioValidationError(_join("vehicles", kind), f"cannot hover: {exc}") from None
    return scenario


def parse_scenario(text: str) -> Scenario:
    """Parse a YAML scenario document.

    Raises
    ------
    ScenarioParseError
        The text is not valid YAML; carries the line and column (1-based).
    ScenarioValidationError
        A field is missing, mistyped or violates an invariant.
    """
    try:
        doc = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        line = mark.line + 1 if mark is not None else None
        column = mark.column + 1 if mark is not None else None
        raise ScenarioParseError(exc.problem or str(exc), line, column) from None
    except yaml.YAMLError as exc:
        raise ScenarioParseError(str(exc)) from None
    return scenario_from_dict(doc)


def load_scenario(path) -> Scenario:
    with open(path, encoding="utf-8") as fh:
        return parse_scenario(fh.read())


def scenario_to_dict(scenario: Scenario) -> dict:
    """Fully resolved scenario as plain data; angles in radians."""
    return {
        "duration": float(scenario.duration),
        "sim_dt": float(scenario.sim_dt),
        "control_dt": float(scenario.control_dt),
        "bs_position": scenario.bs_position.tolist(),
        "uav2_trajectory": scenario.uav2_trajectory.to_dict(),
        "relay_reference": scenario.relay_reference.to_dict(),
        "initial_state": {
            "position": scenario.initial_position.tolist(),
            "velocity": scenario.initial_velocity.tolist(),
            "attitude": scenario.initial_attitude.tolist(),
            "angular_velocity": scenario.initial_angular_velocity.tolist(),
        },
        "vehicles": {kind: params.to_dict() for kind, params in scenario.vehicles.items()},
        "comm": scenario.comm.to_dict(),
        "nmpc": scenario.nmpc.to_dict(),
        "wind": scenario.wind.to_dict(),
        "rng_seed": int(scenario.rng_seed),
    }


def serialize_scenario(scenario: Scenario) -> str:
    """YAML text that :func:`parse_scenario` turns back into an identical scenario."""
    return yaml.safe_dump(scenario_to_dict(scenario), sort_keys=False, default_flow_style=None)
