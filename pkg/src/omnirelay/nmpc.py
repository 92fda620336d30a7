"""Receding-horizon trajectory optimizer for the relay vehicle.

The finite-horizon problem is transcribed by single shooting over per-rotor
thrust rates. The tracking cost is a weighted least-squares over the outputs
``[p, θ_bs, θ_uav2]`` at stages 0..N, so a Gauss–Newton Hessian is natural.
Antenna-alignment margins and thrust-value bounds are inequality constraints
on predicted states, handled with an augmented Lagrangian; thrust-rate bounds
are simple boxes on the decision variables and are enforced by projection.

Derivatives come from central finite differences. All 2·N·n perturbed
rate sequences are rolled out as a single batch through the integration
kernel, which is where nearly all of the run time goes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field, replace

import numpy as np

from . import comms
from ._backend import kernels
from .errors import InvalidInputError
from .vehicle import MravParams, MravState

N_OUTPUTS = 5


@dataclass(frozen=True)
class SolverOptions:
    max_outer_iterations: int = 5
    max_inner_iterations: int = 10
    kkt_tolerance: float = 1e-2
    constraint_tolerance: float = 1e-3
    penalty_initial: float = 1.0
    penalty_growth: float = 10.0
    finite_difference_epsilon: float = 1e-6
    max_backtracks: int = 20
    penalty_max: float = 1e4
    multiplier_max: float = 1e4

    def __post_init__(self):
        if self.max_outer_iterations < 1 or self.max_inner_iterations < 1:
            raise InvalidInputError("iteration limits must be at least 1")
        for name in ("kkt_tolerance", "constraint_tolerance", "penalty_initial", "finite_difference_epsilon"):
            if not getattr(self, name) > 0:
                raise InvalidInputError(f"{name} must be positive")
        if not self.penalty_max >= self.penalty_initial or not self.multiplier_max > 0:
            raise InvalidInputError("penalty_max must be at least penalty_initial; multiplier_max positive")
        if not self.penalty_growth > 1:
            raise InvalidInputError("penalty_growth must exceed 1")


@dataclass(frozen=True, eq=False)
class NmpcConfig:
    horizon: int = 20
    step_dt: float = 0.05
    output_weights: tuple = (1.0, 1.0, 1.0, 50.0, 50.0)
    rate_weight: float = 1e-4
    solver: SolverOptions = field(default_factory=SolverOptions)

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise InvalidInputError("horizon must be a positive integer")
        if not self.step_dt > 0:
            raise InvalidInputError("step_dt must be positive")
        w = tuple(float(x) for x in self.output_weights)
        if len(w) != N_OUTPUTS:
            raise InvalidInputError(f"output_weights needs {N_OUTPUTS} entries")
        if min(w) < 0 or max(w) <= 0:
            raise InvalidInputError("output_weights must be non-negative with one positive entry")
        if self.rate_weight < 0:
            raise InvalidInputError("rate_weight must be non-negative")
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "output_weights", w)
        object.__setattr__(self, "rate_weight", float(self.rate_weight))

    def to_dict(self) -> dict:
        return {
            "horizon": self.horizon,
            "step_dt": self.step_dt,
            "output_weights": list(self.output_weights),
            "rate_weight": self.rate_weight,
            "solver": dict(self.solver.__dict__),
        }


@dataclass(frozen=True, eq=False)
class OcpProblem:
    """One instance of the finite-horizon problem.

    ``references`` has shape (N+1, 5); ``bs_positions`` and ``uav2_positions``
    have shape (N+1, 3), one row per prediction stage.
    """

    initial_state: MravState
    references: np.ndarray
    vehicle: MravParams
    comm: comms.CommParams
    bs_positions: np.ndarray
    uav2_positions: np.ndarray
    config: NmpcConfig

    def __post_init__(self):
        n1 = self.config.horizon + 1
        refs = np.array(self.references, dtype=float)
        bs = np.array(self.bs_positions, dtype=float)
        uav2 = np.array(self.uav2_positions, dtype=float)
        if bs.shape == (3,):
            bs = np.tile(bs, (n1, 1))
        if refs.shape != (n1, N_OUTPUTS):
            raise InvalidInputError(f"references must have shape ({n1}, {N_OUTPUTS}), got {refs.shape}")
        if bs.shape != (n1, 3) or uav2.shape != (n1, 3):
            raise InvalidInputError(f"target predictions must have shape ({n1}, 3)")
        if self.initial_state.n_rotors != self.vehicle.n_rotors:
            raise InvalidInputError("initial state and vehicle disagree on rotor count")
        for a in (refs, bs, uav2):
            a.setflags(write=False)
        object.__setattr__(self, "references", refs)
        object.__setattr__(self, "bs_positions", bs)
        object.__setattr__(self, "uav2_positions", uav2)

    @property
    def horizon(self) -> int:
        return self.config.horizon

    @property
    def n_rotors(self) -> int:
        return self.vehicle.n_rotors


@dataclass(frozen=True, eq=False)
class OcpSolution:
    thrust_rate_sequence: np.ndarray
    predicted_states: np.ndarray
    predicted_outputs: np.ndarray
    cost: float
    kkt_residual: float
    max_constraint_violation: float
    iterations: int
    converged: bool
    multipliers: np.ndarray
    penalty: float
    outer_history: tuple = ()

    def state_at(self, k: int) -> MravState:
        return MravState.from_vector(self.predicted_states[k])


def finite_difference_jacobian(fn, point, epsilon: float = 1e-6) -> np.ndarray:
    """Central-difference Jacobian of ``fn: R^n -> R^m``, one column per coordinate."""
    if not epsilon > 0:
        raise InvalidInputError("epsilon must be positive")
    x = np.array(point, dtype=float)
    f0 = np.atleast_1d(np.asarray(fn(x), dtype=float))
    jac = np.empty((f0.shape[0], x.shape[0]))
    for j in range(x.shape[0]):
        xp = x.copy()
        xm = x.copy()
        xp[j] += epsilon
        xm[j] -= epsilon
        jac[:, j] = (np.atleast_1d(fn(xp)) - np.atleast_1d(fn(xm))) / (2.0 * epsilon)
    return jac


class _Evaluator:
    """Batched rollout, residual and constraint evaluation for one problem."""

    def __init__(self, problem: OcpProblem):
        self.p = problem
        cfg = problem.config
        veh = problem.vehicle
        comm = problem.comm
        self.N = cfg.horizon
        self.n = veh.n_rotors
        self.dt = cfg.step_dt
        self.x0 = problem.initial_state.to_vector()
        self.sqrt_q = np.sqrt(np.asarray(cfg.output_weights))
        self.sqrt_w = math.sqrt(cfg.rate_weight)
        self.refs = problem.references
        self.targets = (problem.bs_positions, problem.uav2_positions)
        self.boresight_stack = np.stack([a.boresight_body for a in comm.relay_antennas])
        self.target_stack = np.ascontiguousarray(np.stack(self.targets, axis=1))
        self.cos_max = math.cos(comm.max_misalignment)
        self.margin_scale = 1.0 / (1.0 - self.cos_max)
        self.t_lo, self.t_hi = veh.thrust_min, veh.thrust_max
        self.thrust_scale = 1.0 / (veh.thrust_max - veh.thrust_min)
        self.r_lo, self.r_hi = veh.thrust_rate_min, veh.thrust_rate_max
        self.zero_dist = np.zeros(3)
        self.n_geo = comm.n_margins
        # thrust at stage k = T0 + dt * sum_{j<k} u_j, so its Jacobian is a fixed
        # lower-triangular block pattern
        tri = np.tril(np.ones((self.N, self.N)))
        self.thrust_jac = np.kron(tri, np.eye(self.n)) * self.dt

    def rollout_states(self, rates_batch: np.ndarray) -> np.ndarray:
        veh = self.p.vehicle
        return kernels.augmented_rollout(
            self.x0, rates_batch, self.dt, veh.mass, veh.inertia, veh.inertia_inv,
            veh.allocation, self.zero_dist,
        )

    def outputs(self, states: np.ndarray):
        """Outputs (B, N+1, 5), geometric margins (B, N+1, m) and misalignment axes.

        The axes array (B, N+1, 2, 3) holds the unit rotation axis taking each
        boresight onto its line of sight (zero when exactly aligned).
        """
        cos_t, theta, dist, axes = kernels.pointing_batch(states, self.boresight_stack, self.target_stack)
        y = np.empty(states.shape[:-1] + (N_OUTPUTS,))
        y[..., 0:3] = states[..., 0:3]
        y[..., 3:5] = theta
        margins = np.empty(states.shape[:-1] + (self.n_geo,))
        margins[..., 0:2] = cos_t - self.cos_max
        if self.n_geo == 3:
            comm = self.p.comm
            snrs = [
                comms.link_snr(
                    comm,
                    comms.antenna_gain_db(comm.relay_antennas[i], theta[..., i]),
                    comm.peer_antennas[i].peak_gain_db,
                    dist[..., i],
                )
                for i in range(2)
            ]
            margins[..., 2] = np.minimum(snrs[0], snrs[1]) - comm.min_snr_db
        return y, margins, axes

    def tracking_residuals(self, y: np.ndarray, axes: np.ndarray) -> np.ndarray:
        """Weighted tracking residuals, (B, (N+1)·9).

        Position errors enter componentwise. Each angular error ``θ − θ_d``
        enters as that length along the misalignment axis, a 3-vector whose
        norm is the scalar error. For ``θ_d = 0`` this is the rotation vector
        between boresight and line of sight, which stays smooth through
        perfect alignment where the bare angle has a kink.
        """
        nb = y.shape[0]
        err = y - self.refs
        pos = err[..., 0:3] * self.sqrt_q[0:3]
        ang = err[..., 3:5, None] * axes * self.sqrt_q[3:5, None]
        return np.concatenate([pos, ang.reshape(ang.shape[:-2] + (6,))], axis=-1).reshape(nb, -1)

    def scaled_constraints(self, states: np.ndarray, margins: np.ndarray) -> np.ndarray:
        """All inequality constraints as ``c >= 0``, dimensionless, stages 1..N."""
        nb = states.shape[0]
        geo = margins[:, 1:, :].copy()
        geo[..., :2] *= self.margin_scale
        if self.n_geo == 3:
            geo[..., 2] /= 10.0
        thrust = states[:, 1:, 13:]
        lo = (thrust - self.t_lo) * self.thrust_scale
        hi = (self.t_hi - thrust) * self.thrust_scale
        return np.concatenate(
            [geo.reshape(nb, -1), lo.reshape(nb, -1), hi.reshape(nb, -1)], axis=1
        )

    def evaluate(self, u: np.ndarray):
        rates = u.reshape(1, self.N, self.n)
        states = self.rollout_states(rates)
        y, margins, axes = self.outputs(states)
        r = np.concatenate([self.tracking_residuals(y, axes)[0], self.sqrt_w * u])
        c = self.scaled_constraints(states, margins)[0]
        return states[0], y[0], r, c

    def evaluate_with_jacobians(self, u: np.ndarray, eps: float):
        """Residuals, constraints and their Jacobians w.r.t. the flat rate vector."""
        nv = u.shape[0]
        batch = np.repeat(u[None, :], 2 * nv + 1, axis=0)
        idx = np.arange(nv)
        batch[1 + idx, idx] += eps
        batch[1 + nv + idx, idx] -= eps
        rates = batch.reshape(-1, self.N, self.n)
        states = self.rollout_states(rates)
        y, margins, axes = self.outputs(states)

        track = self.tracking_residuals(y, axes)
        n_track = track.shape[1]
        j_track = ((track[1:1 + nv] - track[1 + nv:]) / (2.0 * eps)).T
        r = np.concatenate([track[0], self.sqrt_w * u])
        j_r = np.zeros((n_track + nv, nv))
        j_r[:n_track] = j_track
        j_r[n_track:] = self.sqrt_w * np.eye(nv)

        geo = margins[:, 1:, :].copy()
        geo[..., :2] *= self.margin_scale
        if self.n_geo == 3:
            geo[..., 2] /= 10.0
        geo = geo.reshape(geo.shape[0], -1)
        j_geo = ((geo[1:1 + nv] - geo[1 + nv:]) / (2.0 * eps)).T
        thrust = states[0, 1:, 13:].reshape(-1)
        c = np.concatenate(
            [geo[0], (thrust - self.t_lo) * self.thrust_scale, (self.t_hi - thrust) * self.thrust_scale]
        )
        j_c = np.concatenate(
            [j_geo, self.thrust_jac * self.thrust_scale, -self.thrust_jac * self.thrust_scale]
        )
        return states[0], y[0], r, c, j_r, j_c


def rollout(problem: OcpProblem, rates):
    """Predicted states, outputs and tracking cost for a rate sequence.

    Returns
    -------
    states : (N+1, 13+n) array
    outputs : (N+1, 5) array
    cost : float
        ``Σ_k ||y_d,k − y_k||²_Q + rate_weight · ||rates||²``
    """
    ev = _Evaluator(problem)
    u = _check_rates(problem, rates)
    states, y, r, _ = ev.evaluate(u.reshape(-1))
    return states, y, float(r @ r)


def _check_rates(problem: OcpProblem, rates) -> np.ndarray:
    u = np.asarray(rates, dtype=float)
    if u.shape != (problem.horizon, problem.n_rotors):
        raise InvalidInputError(
            f"rates must have shape ({problem.horizon}, {problem.n_rotors}), got {u.shape}"
        )
    return u


def _al_terms(c, lam, mu):
    """Augmented-Lagrangian value and shifted multipliers for ``c >= 0``."""
    shifted = np.maximum(0.0, lam - mu * c)
    value = float((shifted @ shifted - lam @ lam) / (2.0 * mu))
    return value, shifted


def _project(u, lo, hi):
    return np.minimum(np.maximum(u, lo), hi)


def cost_gradient(problem: OcpProblem, rates, epsilon: float | None = None) -> np.ndarray:
    """Gauss–Newton gradient ``2 J^T r`` of the tracking cost, flattened over rates."""
    ev = _Evaluator(problem)
    u = _check_rates(problem, rates).reshape(-1)
    eps = problem.config.solver.finite_difference_epsilon if epsilon is None else epsilon
    _, _, r, _, j_r, _ = ev.evaluate_with_jacobians(u, eps)
    return 2.0 * j_r.T @ r


def solve(problem: OcpProblem, warm_start=None) -> OcpSolution:
    """Solve the finite-horizon problem; always returns the best iterate found.

    ``warm_start`` may be a previous :class:`OcpSolution` (its rates and
    multipliers are reused) or a bare (N, n) rate array.
    """
    ev = _Evaluator(problem)
    opts = problem.config.solver
    N, n = ev.N, ev.n
    nv = N * n
    lo, hi = ev.r_lo, ev.r_hi

    lam = None
    mu = opts.penalty_initial
    if warm_start is None:
        u = np.zeros(nv)
    elif isinstance(warm_start, OcpSolution):
        u = _check_rates(problem, warm_start.thrust_rate_sequence).reshape(-1).copy()
        if warm_start.converged:
            lam = np.array(warm_start.multipliers, dtype=float)
    else:
        u = _check_rates(problem, warm_start).reshape(-1).copy()
    u = _project(u, lo, hi)

    states, y, r, c = ev.evaluate(u)
    if lam is None or lam.shape != c.shape:
        lam = np.zeros_like(c)

    iterations = 0
    kkt = math.inf
    history = []
    prev_violation = math.inf
    violation = float(np.max(np.maximum(0.0, -c), initial=0.0))
    best = None

    for _outer in range(opts.max_outer_iterations):
        for _inner in range(opts.max_inner_iterations):
            states, y, r, c, j_r, j_c = ev.evaluate_with_jacobians(u, opts.finite_difference_epsilon)
            al_val, shifted = _al_terms(c, lam, mu)
            merit = float(r @ r) + al_val
            grad = 2.0 * j_r.T @ r - j_c.T @ shifted
            kkt = float(np.max(np.abs(u - _project(u - grad, lo, hi))))
            if kkt < opts.kkt_tolerance:
                break
            iterations += 1

            at_lo = (u <= lo) & (grad > 0)
            at_hi = (u >= hi) & (grad < 0)
            free = ~(at_lo | at_hi)
            active = shifted > 0
            ja = j_c[active]
            hess = 2.0 * j_r.T @ j_r + mu * ja.T @ ja
            hf = hess[np.ix_(free, free)]
            hf[np.diag_indices_from(hf)] += 1e-9 * (1.0 + np.max(np.abs(np.diag(hf))))
            step = np.zeros(nv)
            try:
                step[free] = -np.linalg.solve(hf, grad[free])
            except np.linalg.LinAlgError:
                step[free] = -grad[free]

            accepted = False
            alpha = 1.0
            for _ in range(opts.max_backtracks):
                trial = _project(u + alpha * step, lo, hi)
                _, _, r_t, c_t = ev.evaluate(trial)
                if np.all(np.isfinite(r_t)) and np.all(np.isfinite(c_t)):
                    # a runaway trial may overflow to inf; the Armijo test then rejects it
                    with np.errstate(over="ignore", invalid="ignore"):
                        m_t = float(r_t @ r_t) + _al_terms(c_t, lam, mu)[0]
                    if m_t <= merit + 1e-4 * float(grad @ (trial - u)):
                        accepted = True
                        break
                alpha *= 0.5
            if not accepted:
                break
            u = trial

        states, y, r, c = ev.evaluate(u)
        violation = float(np.max(np.maximum(0.0, -c), initial=0.0))
        cost = float(r @ r)
        history.append((mu, violation, cost))
        if best is None or (violation, cost) < (best[1], best[2]) or (
            violation <= opts.constraint_tolerance and cost < best[2]
        ):
            best = (u.copy(), violation, cost, kkt)
        if violation < opts.constraint_tolerance and kkt < opts.kkt_tolerance:
            break
        # safeguarded update: bounded multipliers and penalty keep an infeasible
        # instance from turning into a bang-bang penalty problem
        lam = np.minimum(np.maximum(0.0, lam - mu * c), opts.multiplier_max)
        if violation > 0.25 * prev_violation or violation >= opts.constraint_tolerance:
            mu = min(mu * opts.penalty_growth, opts.penalty_max)
        prev_violation = violation

    u_best, violation, cost, kkt_best = best
    if u_best is not u:
        states, y, r, c = ev.evaluate(u_best)
    converged = bool(kkt_best < opts.kkt_tolerance and violation < opts.constraint_tolerance)
    return OcpSolution(
        thrust_rate_sequence=u_best.reshape(N, n),
        predicted_states=states,
        predicted_outputs=y,
        cost=cost,
        kkt_residual=kkt_best,
        max_constraint_violation=violation,
        iterations=iterations,
        converged=converged,
        multipliers=lam,
        penalty=mu,
        outer_history=tuple(history),
    )


@dataclass(frozen=True)
class SolverDiagnostics:
    cost: float
    kkt_residual: float
    iterations: int
    converged: bool
    max_constraint_violation: float
    failed: bool = False
    message: str = ""


def shift_solution(solution: OcpSolution) -> OcpSolution:
    """Drop the first stage and repeat the last, for warm-starting the next solve.

    Multipliers are shifted the same way, family by family.
    """
    u = solution.thrust_rate_sequence
    horizon, n = u.shape
    shifted_u = np.concatenate([u[1:], u[-1:]], axis=0)
    lam = np.asarray(solution.multipliers)
    n_geo = lam.shape[0] // horizon - 2 * n
    pieces = []
    offset = 0
    for width in (n_geo, n, n):
        block = lam[offset:offset + horizon * width].reshape(horizon, width)
        pieces.append(np.concatenate([block[1:], block[-1:]], axis=0).reshape(-1))
        offset += horizon * width
    return replace(solution, thrust_rate_sequence=shifted_u, multipliers=np.concatenate(pieces))


class RecedingHorizonController:
    """Stateful NMPC loop: solve, apply the first rate vector, shift, repeat.

    Not safe to share between threads; create one per simulated vehicle.
    """

    def __init__(self, config: NmpcConfig, vehicle: MravParams, comm: comms.CommParams):
        self.config = config
        self.vehicle = vehicle
        self.comm = comm
        self.last_solution: OcpSolution | None = None
        self.last_warm_start: OcpSolution | None = None

    def reset(self) -> None:
        self.last_solution = None
        self.last_warm_start = None

    def build_problem(self, measured: MravState, references, bs_positions, uav2_positions) -> OcpProblem:
        return OcpProblem(
            initial_state=measured,
            references=references,
            vehicle=self.vehicle,
            comm=self.comm,
            bs_positions=bs_positions,
            uav2_positions=uav2_positions,
            config=self.config,
        )

    def step(self, measured: MravState, references, bs_positions, uav2_positions):
        """Return the rate command for the current instant and the solver diagnostics."""
        problem = self.build_problem(measured, references, bs_positions, uav2_positions)
        warm = shift_solution(self.last_solution) if self.last_solution is not None else None
        self.last_warm_start = warm
        sol = solve(problem, warm)
        self.last_solution = sol
        diag = SolverDiagnostics(
            cost=sol.cost,
            kkt_residual=sol.kkt_residual,
            iterations=sol.iterations,
            converged=sol.converged,
            max_constraint_violation=sol.max_constraint_violation,
        )
        return sol.thrust_rate_sequence[0].copy(), diag
