"""Closed-loop relay scenario: scripted UAV-2, fixed base station, wind, NMPC relay."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from . import comms
from .errors import InvalidInputError
from .nmpc import NmpcConfig, RecedingHorizonController, SolverDiagnostics
from .vehicle import MravParams, MravState, allocation_rank, hover_trim, step

VEHICLE_KINDS = ("omni", "under")


@dataclass(frozen=True, eq=False)
class CircleTrajectory:
    center: np.ndarray
    radius: float
    period: float
    altitude: float

    def __post_init__(self):
        c = np.array(self.center, dtype=float)
        if c.shape not in ((2,), (3,)):
            raise InvalidInputError("circle center must have 2 or 3 entries")
        if not self.radius >= 0 or not self.period > 0:
            raise InvalidInputError("circle radius must be >= 0 and period > 0")
        object.__setattr__(self, "center", c[:2].copy())

    def position(self, t: float) -> np.ndarray:
        phase = 2.0 * math.pi * t / self.period
        return np.array([
            self.center[0] + self.radius * math.cos(phase),
            self.center[1] + self.radius * math.sin(phase),
            self.altitude,
        ])

    @property
    def end_time(self) -> float:
        return math.inf

    def to_dict(self) -> dict:
        return {"circle": {
            "center": self.center.tolist(),
            "radius": float(self.radius),
            "period": float(self.period),
            "altitude": float(self.altitude),
        }}


@dataclass(frozen=True, eq=False)
class WaypointTrajectory:
    times: np.ndarray
    positions: np.ndarray

    def __post_init__(self):
        t = np.array(self.times, dtype=float)
        p = np.array(self.positions, dtype=float)
        if t.ndim != 1 or t.shape[0] < 1 or p.shape != (t.shape[0], 3):
            raise InvalidInputError("waypoints need matching times (k,) and positions (k, 3)")
        if np.any(np.diff(t) <= 0):
            raise InvalidInputError("waypoint times must be strictly increasing")
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "positions", p)

    def position(self, t: float) -> np.ndarray:
        return np.array([np.interp(t, self.times, self.positions[:, i]) for i in range(3)])

    @property
    def end_time(self) -> float:
        return float(self.times[-1])

    def to_dict(self) -> dict:
        return {"waypoints": [
            {"t": float(t), "position": p.tolist()} for t, p in zip(self.times, self.positions)
        ]}


@dataclass(frozen=True, eq=False)
class RelayReference:
    """Where the relay should sit.

    ``fixed`` holds ``position``. ``midpoint`` is stationary too: the point at
    ``altitude`` minimizing the worst distance to the base station and to
    UAV-2 over the whole mission.
    """

    mode: str = "midpoint"
    altitude: float = 15.0
    position: np.ndarray | None = None

    def __post_init__(self):
        if self.mode not in ("midpoint", "fixed"):
            raise InvalidInputError("relay reference mode must be 'midpoint' or 'fixed'")
        if self.mode == "fixed":
            if self.position is None:
                raise InvalidInputError("fixed relay reference needs a position")
            p = np.array(self.position, dtype=float)
            if p.shape != (3,):
                raise InvalidInputError("fixed relay reference position must be a 3-vector")
            object.__setattr__(self, "position", p)

    def to_dict(self) -> dict:
        if self.mode == "fixed":
            return {"mode": "fixed", "position": self.position.tolist()}
        return {"mode": "midpoint", "altitude": float(self.altitude)}


def _golden_min(fn, lo: float, hi: float, tol: float = 1e-9):
    """Minimizer of a convex scalar function on [lo, hi] by golden-section search."""
    inv_phi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = lo, hi
    c = b - inv_phi * (b - a)
    d = a + inv_phi * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol * (1.0 + abs(a) + abs(b)):
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - inv_phi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + inv_phi * (b - a)
            fd = fn(d)
    x = 0.5 * (a + b)
    return x, fn(x)


def minimax_point(points, altitude: float) -> np.ndarray:
    """Point on the plane ``z = altitude`` minimizing the largest distance to ``points``.

    The squared worst-case distance is convex in the horizontal coordinates,
    and so is its minimum over x for fixed y, so two nested golden-section
    searches over the bounding box find the optimum.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    px, py = pts[:, 0], pts[:, 1]
    h2 = (altitude - pts[:, 2]) ** 2

    def worst(x, y):
        return float(np.max((px - x) ** 2 + (py - y) ** 2 + h2))

    def best_over_x(y):
        return _golden_min(lambda x: worst(x, y), float(px.min()), float(px.max()))[1]

    y, _ = _golden_min(best_over_x, float(py.min()), float(py.max()))
    x, _ = _golden_min(lambda x: worst(x, y), float(px.min()), float(px.max()))
    return np.array([x, y, altitude])


@dataclass(frozen=True, eq=False)
class WindSpec:
    mean: np.ndarray = field(default_factory=lambda: np.zeros(3))
    sigma: np.ndarray = field(default_factory=lambda: np.zeros(3))
    correlation_time: float = 2.0
    enabled: bool = False

    def __post_init__(self):
        mean = np.array(self.mean, dtype=float)
        sigma = np.array(self.sigma, dtype=float)
        if mean.shape != (3,) or sigma.shape != (3,):
            raise InvalidInputError("wind mean and sigma must be 3-vectors")
        if np.any(sigma < 0):
            raise InvalidInputError("wind sigma must be non-negative")
        if not self.correlation_time > 0:
            raise InvalidInputError("wind correlation_time must be positive")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "sigma", sigma)

    def to_dict(self) -> dict:
        return {
            "mean": self.mean.tolist(),
            "sigma": self.sigma.tolist(),
            "correlation_time": float(self.correlation_time),
            "enabled": bool(self.enabled),
        }


def initial_wind_state(spec: WindSpec, rng: np.random.Generator) -> np.ndarray:
    """Draw the gust state from its stationary distribution."""
    if not spec.enabled:
        return np.zeros(3)
    return spec.sigma * rng.standard_normal(3)


def wind_force(spec: WindSpec, state, dt: float, rng: np.random.Generator):
    """Advance the per-axis Ornstein–Uhlenbeck gust by ``dt``; return (force, new state).

    Uses the exact discretization, so the stationary std is ``sigma`` for any ``dt``.
    """
    if not dt > 0:
        raise InvalidInputError("dt must be positive")
    if not spec.enabled:
        return np.zeros(3), np.zeros(3)
    decay = math.exp(-dt / spec.correlation_time)
    new = decay * np.asarray(state, dtype=float) + spec.sigma * math.sqrt(1.0 - decay * decay) * rng.standard_normal(3)
    return spec.mean + new, new


@dataclass(frozen=True, eq=False)
class Scenario:
    duration: float
    bs_position: np.ndarray
    uav2_trajectory: object
    initial_position: np.ndarray
    vehicles: dict
    comm: comms.CommParams
    nmpc: NmpcConfig
    sim_dt: float = 0.01
    control_dt: float = 0.05
    relay_reference: RelayReference = field(default_factory=RelayReference)
    initial_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    initial_attitude: np.ndarray = field(default_factory=lambda: np.array([1.0, 0.0, 0.0, 0.0]))
    initial_angular_velocity: np.ndarray = field(default_factory=lambda: np.zeros(3))
    wind: WindSpec = field(default_factory=WindSpec)
    rng_seed: int = 0

    def __post_init__(self):
        if not self.duration > 0:
            raise InvalidInputError("duration must be positive")
        if not self.sim_dt > 0 or not self.control_dt > 0:
            raise InvalidInputError("time steps must be positive")
        ratio = self.control_dt / self.sim_dt
        if abs(ratio - round(ratio)) > 1e-9 or round(ratio) < 1:
            raise InvalidInputError("control_dt must be an integer multiple of sim_dt")
        for name in ("bs_position", "initial_position", "initial_velocity", "initial_angular_velocity"):
            v = np.array(getattr(self, name), dtype=float)
            if v.shape != (3,):
                raise InvalidInputError(f"{name} must be a 3-vector")
            object.__setattr__(self, name, v)
        q = np.array(self.initial_attitude, dtype=float)
        if q.shape != (4,) or not np.linalg.norm(q) > 0:
            raise InvalidInputError("initial_attitude must be a nonzero 4-vector")
        object.__setattr__(self, "initial_attitude", q / np.linalg.norm(q))
        if not set(self.vehicles) <= set(VEHICLE_KINDS) or not self.vehicles:
            raise InvalidInputError(f"vehicles must be a subset of {VEHICLE_KINDS}")

    @property
    def substeps(self) -> int:
        return int(round(self.control_dt / self.sim_dt))

    @property
    def n_control_steps(self) -> int:
        return int(math.floor(self.duration / self.control_dt + 1e-9))

    @cached_property
    def relay_point(self) -> np.ndarray:
        ref = self.relay_reference
        if ref.mode == "fixed":
            return ref.position.copy()
        times = self.control_dt * np.arange(self.n_control_steps + 1)
        uav2 = np.array([_uav2_clamped(self, t) for t in times])
        return minimax_point(np.vstack([self.bs_position, uav2]), ref.altitude)

    def initial_state(self, kind: str) -> MravState:
        params = self.vehicles[kind]
        return MravState(
            self.initial_position, self.initial_velocity, self.initial_attitude,
            self.initial_angular_velocity, hover_trim(params),
        )


def uav2_position(spec, t: float, duration: float | None = None) -> np.ndarray:
    """UAV-2 position at time ``t`` on its scripted mission."""
    end = duration if duration is not None else spec.end_time
    if not 0.0 <= t <= end + 1e-12:
        raise InvalidInputError(f"t = {t} outside mission time [0, {end}]")
    return spec.position(t)


def relay_reference_position(scenario: Scenario) -> np.ndarray:
    """The stationary relay set-point of a scenario."""
    return scenario.relay_point.copy()


def _uav2_clamped(scenario: Scenario, t: float) -> np.ndarray:
    end = min(scenario.duration, scenario.uav2_trajectory.end_time)
    return scenario.uav2_trajectory.position(min(max(t, 0.0), end))


def prediction_windows(scenario: Scenario, t: float):
    """References (N+1, 5), BS positions (N+1, 3) and UAV-2 predictions (N+1, 3) from ``t``."""
    cfg = scenario.nmpc
    times = t + cfg.step_dt * np.arange(cfg.horizon + 1)
    uav2 = np.array([_uav2_clamped(scenario, ti) for ti in times])
    refs = np.zeros((cfg.horizon + 1, 5))
    refs[:, :3] = scenario.relay_point
    bs = np.tile(scenario.bs_position, (cfg.horizon + 1, 1))
    return refs, bs, uav2


@dataclass(frozen=True, eq=False)
class SimLog:
    """Per-control-step record of a closed-loop run; arrays share the leading axis."""

    vehicle: str
    time: np.ndarray
    states: np.ndarray
    commanded_rates: np.ndarray
    reference_positions: np.ndarray
    uav2_positions: np.ndarray
    misalignment: np.ndarray
    distance: np.ndarray
    snr_db: np.ndarray
    margins: np.ndarray
    end_to_end_rate: np.ndarray
    cost: np.ndarray
    kkt_residual: np.ndarray
    iterations: np.ndarray
    converged: np.ndarray
    solver_failed: np.ndarray

    def __len__(self) -> int:
        return self.time.shape[0]

    def link_sample(self, k: int, link: int) -> comms.LinkSample:
        snr = float(self.snr_db[k, link])
        return comms.LinkSample(
            float(self.misalignment[k, link]), 0.0, float(self.distance[k, link]),
            snr, float(np.log2(1.0 + comms.db_to_linear(snr))),
        )


def baseline_underactuated_step(controller: RecedingHorizonController, measured: MravState,
                                references, bs_positions, uav2_positions):
    """One NMPC step on the under-actuated quadrotor model.

    The machinery is identical to the omnidirectional relay; only the vehicle
    differs. Its rank-4 allocation ties lateral force to roll/pitch, so antenna
    pointing can be traded against position tracking only through tilt.
    """
    if allocation_rank(controller.vehicle) != 4:
        raise InvalidInputError("baseline controller must run an under-actuated (rank-4) vehicle")
    return controller.step(measured, references, bs_positions, uav2_positions)


def run_closed_loop(scenario: Scenario, vehicle: str = "omni") -> SimLog:
    """Simulate the relay with NMPC in the loop and log every control step.

    Each commanded rate vector is integrated into the thrusts once per control
    interval, exactly as the prediction model does; those thrusts are then
    held over the ``sim_dt`` physics substeps with a fresh wind force per
    substep. A solver exception or non-finite command is logged as a
    failure and replaced by zero rates (thrusts frozen) for that step.
    """
    if vehicle not in scenario.vehicles:
        raise InvalidInputError(f"scenario has no '{vehicle}' vehicle")
    params: MravParams = scenario.vehicles[vehicle]
    comm = scenario.comm
    controller = RecedingHorizonController(scenario.nmpc, params, comm)
    step_fn = baseline_underactuated_step if vehicle == "under" else (
        lambda c, *a: c.step(*a)
    )
    rng = np.random.default_rng(scenario.rng_seed)
    wind_state = initial_wind_state(scenario.wind, rng)

    k_last = scenario.n_control_steps
    n_log = k_last + 1
    n = params.n_rotors
    nx = 13 + n
    rec = {
        "time": np.empty(n_log), "states": np.empty((n_log, nx)), "rates": np.empty((n_log, n)),
        "ref": np.empty((n_log, 3)), "uav2": np.empty((n_log, 3)), "mis": np.empty((n_log, 2)),
        "dist": np.empty((n_log, 2)), "snr": np.empty((n_log, 2)),
        "margins": np.empty((n_log, comm.n_margins)), "rate": np.empty(n_log),
        "cost": np.empty(n_log), "kkt": np.empty(n_log), "iters": np.empty(n_log, dtype=int),
        "conv": np.empty(n_log, dtype=bool), "failed": np.empty(n_log, dtype=bool),
    }

    state = scenario.initial_state(vehicle)
    for k in range(n_log):
        t = k * scenario.control_dt
        refs, bs, uav2 = prediction_windows(scenario, t)
        try:
            rates, diag = step_fn(controller, state, refs, bs, uav2)
            if not np.all(np.isfinite(rates)):
                raise FloatingPointError("non-finite rate command")
        except Exception as exc:  # graceful degradation: hold thrusts
            rates = np.zeros(n)
            diag = SolverDiagnostics(math.nan, math.nan, 0, False, math.nan, True, str(exc))
            controller.reset()

        samples, e2e = comms.link_samples(state, comm, bs[0], uav2[0])
        rec["time"][k] = t
        rec["states"][k] = state.to_vector()
        rec["rates"][k] = rates
        rec["ref"][k] = refs[0, :3]
        rec["uav2"][k] = uav2[0]
        rec["mis"][k] = [s.misalignment_tx for s in samples]
        rec["dist"][k] = [s.distance for s in samples]
        rec["snr"][k] = [s.snr_db for s in samples]
        rec["margins"][k] = comms.alignment_margins(state, comm, bs[0], uav2[0])
        rec["rate"][k] = e2e
        rec["cost"][k] = diag.cost if not diag.failed else 0.0
        rec["kkt"][k] = diag.kkt_residual if not diag.failed else 0.0
        rec["iters"][k] = diag.iterations
        rec["conv"][k] = diag.converged
        rec["failed"][k] = diag.failed

        if k == k_last:
            break
        held = state.actuator_values + scenario.control_dt * rates
        for _ in range(scenario.substeps):
            force, wind_state = wind_force(scenario.wind, wind_state, scenario.sim_dt, rng)
            state = step(params, state, held, scenario.sim_dt, disturbance=force)

    return SimLog(
        vehicle=vehicle, time=rec["time"], states=rec["states"], commanded_rates=rec["rates"],
        reference_positions=rec["ref"], uav2_positions=rec["uav2"], misalignment=rec["mis"],
        distance=rec["dist"], snr_db=rec["snr"], margins=rec["margins"],
        end_to_end_rate=rec["rate"], cost=rec["cost"], kkt_residual=rec["kkt"],
        iterations=rec["iters"], converged=rec["conv"], solver_failed=rec["failed"],
    )


def replay(scenario: Scenario, log: SimLog) -> np.ndarray:
    """Re-integrate the logged commands from the logged initial state (wind ignored)."""
    params = scenario.vehicles[log.vehicle]
    state = MravState.from_vector(log.states[0])
    out = [state.to_vector()]
    for k in range(len(log) - 1):
        held = state.actuator_values + scenario.control_dt * log.commanded_rates[k]
        for _ in range(scenario.substeps):
            state = step(params, state, held, scenario.sim_dt)
        out.append(state.to_vector())
    return np.array(out)


METRIC_KEYS = (
    "alignment_satisfaction_fraction",
    "mean_misalignment_bs_rad",
    "mean_misalignment_uav2_rad",
    "max_misalignment_bs_rad",
    "max_misalignment_uav2_rad",
    "mean_snr_bs_db",
    "mean_snr_uav2_db",
    "min_snr_bs_db",
    "min_snr_uav2_db",
    "mean_end_to_end_rate_bps_hz",
    "outage_fraction",
    "rms_position_error_m",
    "solver_convergence_rate",
)


def metrics(log: SimLog, comm: comms.CommParams | None = None) -> dict:
    """Summary statistics of a run, keyed by :data:`METRIC_KEYS`.

    A step counts as aligned when both antenna margins are strictly positive;
    it counts as an outage when the end-to-end rate is zero or any margin
    (including the SNR margin, if configured) is negative.
    """
    if len(log) == 0:
        raise InvalidInputError("cannot summarize an empty log")
    geo = log.margins[:, :2]
    aligned = np.all(geo > 0.0, axis=1)
    outage = (log.end_to_end_rate <= 0.0) | np.any(log.margins < 0.0, axis=1)
    pos_err = np.linalg.norm(log.states[:, 0:3] - log.reference_positions, axis=1)
    return {
        "alignment_satisfaction_fraction": float(np.mean(aligned)),
        "mean_misalignment_bs_rad": float(np.mean(log.misalignment[:, 0])),
        "mean_misalignment_uav2_rad": float(np.mean(log.misalignment[:, 1])),
        "max_misalignment_bs_rad": float(np.max(log.misalignment[:, 0])),
        "max_misalignment_uav2_rad": float(np.max(log.misalignment[:, 1])),
        "mean_snr_bs_db": float(np.mean(log.snr_db[:, 0])),
        "mean_snr_uav2_db": float(np.mean(log.snr_db[:, 1])),
        "min_snr_bs_db": float(np.min(log.snr_db[:, 0])),
        "min_snr_uav2_db": float(np.min(log.snr_db[:, 1])),
        "mean_end_to_end_rate_bps_hz": float(np.mean(log.end_to_end_rate)),
        "outage_fraction": float(np.mean(outage)),
        "rms_position_error_m": float(np.sqrt(np.mean(pos_err ** 2))),
        "solver_convergence_rate": float(np.mean(log.converged)),
    }
