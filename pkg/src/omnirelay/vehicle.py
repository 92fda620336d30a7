"""Rigid-body multirotor model with per-rotor thrust actuation.

Two airframes are provided: a hexarotor whose rotors are tilted alternately
about their arms (fully actuated, allocation rank 6) and a planar quadrotor
(under-actuated, rank 4). The state is augmented with the current rotor
thrusts so that thrust *rates* are the control input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import quaternion as quat
from ._backend import kernels
from ._kernels_py import rigid_rhs
from .errors import InfeasibleError, InvalidInputError, InvalidStateError

GRAVITY = 9.81
QUAT_TOL = 1e-9
RIGID_DIM = 13


def _frozen(a, shape=None, name="array"):
    a = np.array(a, dtype=float)
    if shape is not None and a.shape != shape:
        raise InvalidInputError(f"{name} must have shape {shape}, got {a.shape}")
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class MravState:
    """Pose, twist and current rotor thrusts of one vehicle.

    position and velocity are world-frame; attitude is a unit quaternion
    (w, x, y, z) mapping body to world; angular_velocity is body-frame.
    """

    position: np.ndarray
    velocity: np.ndarray
    attitude: np.ndarray
    angular_velocity: np.ndarray
    actuator_values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", _frozen(self.position, (3,), "position"))
        object.__setattr__(self, "velocity", _frozen(self.velocity, (3,), "velocity"))
        object.__setattr__(self, "attitude", _frozen(self.attitude, (4,), "attitude"))
        object.__setattr__(
            self, "angular_velocity", _frozen(self.angular_velocity, (3,), "angular_velocity")
        )
        act = _frozen(self.actuator_values, name="actuator_values")
        if act.ndim != 1:
            raise InvalidInputError("actuator_values must be a 1-D array")
        object.__setattr__(self, "actuator_values", act)

    @property
    def n_rotors(self) -> int:
        return self.actuator_values.shape[0]

    def to_vector(self) -> np.ndarray:
        """Flat augmented state ``[p, v, q, w, thrusts]``."""
        return np.concatenate(
            [self.position, self.velocity, self.attitude, self.angular_velocity, self.actuator_values]
        )

    @classmethod
    def from_vector(cls, x) -> "MravState":
        x = np.asarray(x, dtype=float)
        if x.ndim != 1 or x.shape[0] < RIGID_DIM:
            raise InvalidInputError(f"state vector too short: {x.shape}")
        return cls(x[0:3], x[3:6], x[6:10], x[10:13], x[13:])

    def replace(self, **changes) -> "MravState":
        fields = dict(
            position=self.position,
            velocity=self.velocity,
            attitude=self.attitude,
            angular_velocity=self.angular_velocity,
            actuator_values=self.actuator_values,
        )
        fields.update(changes)
        return MravState(**fields)

    @classmethod
    def at_rest(cls, position, thrusts, attitude=(1.0, 0.0, 0.0, 0.0)) -> "MravState":
        return cls(position, np.zeros(3), attitude, np.zeros(3), thrusts)


@dataclass(frozen=True, eq=False)
class Wrench:
    force: np.ndarray
    torque: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "force", _frozen(self.force, (3,), "force"))
        object.__setattr__(self, "torque", _frozen(self.torque, (3,), "torque"))
        if not (np.all(np.isfinite(self.force)) and np.all(np.isfinite(self.torque))):
            raise InvalidInputError("wrench entries must be finite")

    def as_vector(self) -> np.ndarray:
        return np.concatenate([self.force, self.torque])


@dataclass(frozen=True, eq=False)
class MravParams:
    """Airframe and actuator description.

    Each rotor's thrust axis is body-z rotated by its tilt angle about the arm
    (the horizontal unit vector from the center of mass to the rotor). A
    rotor with spin direction ``s`` adds a reaction torque
    ``s * drag_torque_coefficient * thrust`` along its thrust axis.
    """

    mass: float
    inertia: np.ndarray
    rotor_positions: np.ndarray
    rotor_tilt_angles: np.ndarray
    spin_directions: np.ndarray
    drag_torque_coefficient: float
    thrust_min: float
    thrust_max: float
    thrust_rate_min: float
    thrust_rate_max: float
    name: str = "mrav"
    _alloc: np.ndarray = field(init=False, repr=False, compare=False)
    _inertia_inv: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        inertia = _frozen(self.inertia, (3, 3), "inertia")
        positions = _frozen(self.rotor_positions, name="rotor_positions")
        n = positions.shape[0]
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise InvalidInputError("rotor_positions must be an (n, 3) array")
        if n not in (4, 6):
            raise InvalidInputError(f"rotor count must be 4 or 6, got {n}")
        tilts = _frozen(self.rotor_tilt_angles, (n,), "rotor_tilt_angles")
        spins = _frozen(self.spin_directions, (n,), "spin_directions")
        if not np.all(np.abs(spins) == 1.0):
            raise InvalidInputError("spin_directions must be +1 or -1")
        if not self.mass > 0:
            raise InvalidInputError("mass must be positive")
        if not np.allclose(inertia, inertia.T, rtol=0, atol=1e-12):
            raise InvalidInputError("inertia must be symmetric")
        if np.min(np.linalg.eigvalsh(inertia)) <= 0:
            raise InvalidInputError("inertia must be positive definite")
        if not self.thrust_min < self.thrust_max:
            raise InvalidInputError("thrust_min must be below thrust_max")
        if not self.thrust_rate_min < 0 < self.thrust_rate_max:
            raise InvalidInputError("thrust rate bounds must straddle zero")
        if np.any(np.hypot(positions[:, 0], positions[:, 1]) <= 0):
            raise InvalidInputError("rotors must sit off the vertical body axis")
        for name, value in (
            ("mass", self.mass),
            ("drag_torque_coefficient", self.drag_torque_coefficient),
            ("thrust_min", self.thrust_min),
            ("thrust_max", self.thrust_max),
            ("thrust_rate_min", self.thrust_rate_min),
            ("thrust_rate_max", self.thrust_rate_max),
        ):
            object.__setattr__(self, name, float(value))
        object.__setattr__(self, "inertia", inertia)
        object.__setattr__(self, "rotor_positions", positions)
        object.__setattr__(self, "rotor_tilt_angles", tilts)
        object.__setattr__(self, "spin_directions", spins)
        object.__setattr__(self, "_alloc", _frozen(_build_allocation(self)))
        object.__setattr__(self, "_inertia_inv", _frozen(np.linalg.inv(inertia)))

    @property
    def n_rotors(self) -> int:
        return self.rotor_positions.shape[0]

    @property
    def allocation(self) -> np.ndarray:
        """The 6×n map from rotor thrusts to body wrench ``[force; torque]``."""
        return self._alloc

    @property
    def inertia_inv(self) -> np.ndarray:
        return self._inertia_inv

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "mass": self.mass,
            "inertia": self.inertia.tolist(),
            "rotor_positions": self.rotor_positions.tolist(),
            "rotor_tilt_angles": self.rotor_tilt_angles.tolist(),
            "spin_directions": self.spin_directions.tolist(),
            "drag_torque_coefficient": self.drag_torque_coefficient,
            "thrust_min": self.thrust_min,
            "thrust_max": self.thrust_max,
            "thrust_rate_min": self.thrust_rate_min,
            "thrust_rate_max": self.thrust_rate_max,
        }


def _build_allocation(params: MravParams) -> np.ndarray:
    n = params.n_rotors
    alloc = np.empty((6, n))
    ez = np.array([0.0, 0.0, 1.0])
    for i in range(n):
        p = params.rotor_positions[i]
        arm = np.array([p[0], p[1], 0.0])
        arm /= np.linalg.norm(arm)
        tilt = params.rotor_tilt_angles[i]
        axis = np.cos(tilt) * ez + np.sin(tilt) * np.cross(arm, ez)
        alloc[:3, i] = axis
        alloc[3:, i] = np.cross(p, axis) + params.spin_directions[i] * params.drag_torque_coefficient * axis
    return alloc


def tilted_hexarotor(
    mass=2.0,
    arm_length=0.4,
    tilt_deg=20.0,
    inertia=(0.02, 0.02, 0.04),
    drag_torque_coefficient=0.016,
    thrust_limits=(-15.0, 15.0),
    thrust_rate_limits=(-100.0, 100.0),
) -> MravParams:
    """Fully actuated hexarotor with rotors tilted alternately ±tilt about their arms.

    The default thrust range is symmetric because the omnidirectional design
    relies on reversible propellers.
    """
    psi = np.arange(6) * np.pi / 3.0
    positions = arm_length * np.stack([np.cos(psi), np.sin(psi), np.zeros(6)], axis=1)
    signs = np.array([(-1.0) ** i for i in range(6)])
    return MravParams(
        mass=mass,
        inertia=np.diag(inertia),
        rotor_positions=positions,
        rotor_tilt_angles=np.radians(tilt_deg) * signs,
        spin_directions=-signs,
        drag_torque_coefficient=drag_torque_coefficient,
        thrust_min=thrust_limits[0],
        thrust_max=thrust_limits[1],
        thrust_rate_min=thrust_rate_limits[0],
        thrust_rate_max=thrust_rate_limits[1],
        name="omni",
    )


def planar_quadrotor(
    mass=1.5,
    arm_length=0.25,
    inertia=(0.015, 0.015, 0.027),
    drag_torque_coefficient=0.016,
    thrust_limits=(0.0, 10.0),
    thrust_rate_limits=(-100.0, 100.0),
) -> MravParams:
    """Conventional X-configuration quadrotor with coplanar, untilted rotors."""
    psi = np.pi / 4.0 + np.arange(4) * np.pi / 2.0
    positions = arm_length * np.stack([np.cos(psi), np.sin(psi), np.zeros(4)], axis=1)
    return MravParams(
        mass=mass,
        inertia=np.diag(inertia),
        rotor_positions=positions,
        rotor_tilt_angles=np.zeros(4),
        spin_directions=np.array([1.0, -1.0, 1.0, -1.0]),
        drag_torque_coefficient=drag_torque_coefficient,
        thrust_min=thrust_limits[0],
        thrust_max=thrust_limits[1],
        thrust_rate_min=thrust_rate_limits[0],
        thrust_rate_max=thrust_rate_limits[1],
        name="under",
    )


def _check_thrusts(params: MravParams, thrusts) -> np.ndarray:
    t = np.asarray(thrusts, dtype=float)
    if t.shape != (params.n_rotors,):
        raise InvalidInputError(
            f"expected {params.n_rotors} thrust values, got shape {t.shape}"
        )
    return t


def _check_state(params: MravParams, state: MravState) -> None:
    if state.n_rotors != params.n_rotors:
        raise InvalidStateError(
            f"state carries {state.n_rotors} actuator values, vehicle has {params.n_rotors} rotors"
        )
    if abs(np.linalg.norm(state.attitude) - 1.0) > QUAT_TOL:
        raise InvalidStateError(
            f"attitude quaternion norm {np.linalg.norm(state.attitude):.12g} is not 1"
        )


def _disturbance(disturbance) -> np.ndarray:
    if disturbance is None:
        return np.zeros(3)
    d = np.asarray(disturbance, dtype=float)
    if d.shape != (3,):
        raise InvalidInputError("disturbance force must be a 3-vector")
    return d


def wrench_from_thrusts(params: MravParams, thrusts) -> Wrench:
    w = params.allocation @ _check_thrusts(params, thrusts)
    return Wrench(w[:3], w[3:])


def allocation_rank(params: MravParams, rtol: float = 1e-8) -> int:
    """Numerical rank of the allocation matrix (singular values above ``rtol·σ_max``)."""
    s = np.linalg.svd(params.allocation, compute_uv=False)
    return int(np.sum(s > rtol * s[0]))


def continuous_dynamics(params: MravParams, state: MravState, thrusts, disturbance=None) -> np.ndarray:
    """Newton–Euler right-hand side for the 13-entry rigid state.

    ``disturbance`` is an optional world-frame force in newtons.
    """
    _check_state(params, state)
    t = _check_thrusts(params, thrusts)
    w = params.allocation @ t
    x = state.to_vector()[None, :RIGID_DIM]
    return rigid_rhs(
        x, w[None, :3], w[None, 3:], params.mass, params.inertia, params.inertia_inv,
        _disturbance(disturbance),
    )[0]


def step(params: MravParams, state: MravState, thrusts, dt: float, disturbance=None) -> MravState:
    """Advance the rigid body one RK4 step with ``thrusts`` held constant.

    The returned state records ``thrusts`` as its actuator values.
    """
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    _check_state(params, state)
    t = _check_thrusts(params, thrusts)
    rigid = kernels.rigid_step(
        state.to_vector()[:RIGID_DIM], t, float(dt), params.mass, params.inertia,
        params.inertia_inv, params.allocation, _disturbance(disturbance),
    )
    return MravState(rigid[0:3], rigid[3:6], rigid[6:10], rigid[10:13], t)


def augmented_step(params: MravParams, state: MravState, thrust_rates, dt: float, disturbance=None) -> MravState:
    """Integrate thrust rates into the thrusts, then step the rigid body with them held.

    No saturation is applied; bounds are the optimizer's business.
    """
    if not dt > 0:
        raise InvalidInputError(f"dt must be positive, got {dt}")
    rates = _check_thrusts(params, thrust_rates)
    return step(params, state, state.actuator_values + dt * rates, dt, disturbance)


def hover_trim(params: MravParams) -> np.ndarray:
    """Equal per-rotor thrusts that hold the level vehicle still against gravity."""
    alloc = params.allocation
    lift = float(np.sum(alloc[2]))
    if lift <= 0:
        raise InfeasibleError("rotor axes produce no net upward force")
    t = params.mass * GRAVITY / lift
    residual = alloc @ np.full(params.n_rotors, t)
    residual[2] -= params.mass * GRAVITY
    if np.max(np.abs(residual)) > 1e-9 * params.mass * GRAVITY:
        raise InvalidInputError("rotor layout is not symmetric; equal thrusts leave a net wrench")
    if not params.thrust_min <= t <= params.thrust_max:
        raise InfeasibleError(
            f"hover thrust {t:.4g} N outside [{params.thrust_min}, {params.thrust_max}] N"
        )
    return np.full(params.n_rotors, t)


def mechanical_energy(params: MravParams, state: MravState) -> float:
    """Kinetic plus gravitational potential energy (zero potential at z = 0)."""
    v = state.velocity
    w = state.angular_velocity
    return float(
        0.5 * params.mass * v @ v + 0.5 * w @ params.inertia @ w + params.mass * GRAVITY * state.position[2]
    )


def body_to_world(state: MravState, v) -> np.ndarray:
    return quat.rotate(state.attitude, v)

