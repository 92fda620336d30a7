"""Problem and scenario builders shared by several test modules."""

import numpy as np

from omnirelay import comms, nmpc, sim, vehicle
from omnirelay import quaternion as quat

# acceptance outcomes, echoed in the terminal summary: {number: (passed, text)}
ACCEPTANCE_RESULTS = {}


def aligned_geometry(comm, position, distance=40.0):
    """BS and UAV-2 placed exactly along the two boresights of a level relay."""
    position = np.asarray(position, dtype=float)
    bs = position + distance * comm.relay_antennas[comms.BS_LINK].boresight_body
    uav2 = position + distance * comm.relay_antennas[comms.UAV2_LINK].boresight_body
    return bs, uav2


def hover_problem(params, comm, offset=(0.0, 0.0, 0.0), config=None, attitude=(1.0, 0.0, 0.0, 0.0)):
    """OCP around a level hover at (30, 0, 15) with both peers on boresight."""
    config = config or nmpc.NmpcConfig()
    ref_pos = np.array([30.0, 0.0, 15.0])
    bs, uav2 = aligned_geometry(comm, ref_pos)
    state = vehicle.MravState(
        ref_pos + np.asarray(offset, dtype=float), np.zeros(3), np.asarray(attitude, dtype=float),
        np.zeros(3), vehicle.hover_trim(params),
    )
    refs = np.zeros((config.horizon + 1, 5))
    refs[:, :3] = ref_pos
    n1 = config.horizon + 1
    return nmpc.OcpProblem(state, refs, params, comm, np.tile(bs, (n1, 1)), np.tile(uav2, (n1, 1)), config)


def regulation_scenario(comm, offset, duration=8.0, vehicles=None):
    ref_pos = np.array([30.0, 0.0, 15.0])
    bs, uav2 = aligned_geometry(comm, ref_pos)
    return sim.Scenario(
        duration=duration,
        bs_position=bs,
        uav2_trajectory=sim.WaypointTrajectory([0.0], [uav2]),
        initial_position=ref_pos + np.asarray(offset, dtype=float),
        vehicles=vehicles or {"omni": vehicle.tilted_hexarotor()},
        comm=comm,
        nmpc=nmpc.NmpcConfig(),
        relay_reference=sim.RelayReference("fixed", position=ref_pos),
    )


def random_state(rng, params, spin=2.0):
    return vehicle.MravState(
        rng.uniform(-5, 5, 3), rng.standard_normal(3), quat.normalize(rng.standard_normal(4)),
        spin * rng.standard_normal(3), rng.uniform(0.0, 5.0, params.n_rotors),
    )


def rk4_error_ratio(params, rng, horizon=0.5, dt=0.01):
    """Error ratio of RK4 at dt and dt/2 against a dt/100 reference on a tumbling body."""
    start = random_state(rng, params, spin=3.0)
    thrusts = rng.uniform(-5.0, 5.0, params.n_rotors)

    def integrate(h):
        s = start
        for _ in range(int(round(horizon / h))):
            s = vehicle.step(params, s, thrusts, h)
        return s.to_vector()[:13]

    ref = integrate(dt / 100)
    e1 = np.linalg.norm(integrate(dt) - ref)
    e2 = np.linalg.norm(integrate(dt / 2) - ref)
    return e1 / e2


def free_fall_drop(params):
    s = vehicle.MravState.at_rest([0, 0, 100.0], np.zeros(params.n_rotors))
    for _ in range(100):
        s = vehicle.step(params, s, np.zeros(params.n_rotors), 0.01)
    return s.position[2] - 100.0


def canonical_problem(scenario, t=0.0, state=None, config=None):
    refs, bs, uav2 = sim.prediction_windows(scenario, t)
    return nmpc.OcpProblem(state or scenario.initial_state("omni"), refs, scenario.vehicles["omni"],
                           scenario.comm, bs, uav2, config or scenario.nmpc)


def gradient_errors(problem, rng, count):
    errs = []
    n = problem.horizon * problem.n_rotors
    for _ in range(count):
        rates = rng.uniform(-20, 20, (problem.horizon, problem.n_rotors))
        gn = nmpc.cost_gradient(problem, rates)
        fd = nmpc.finite_difference_jacobian(
            lambda u: np.array([nmpc.rollout(problem, u.reshape(rates.shape))[2]]), rates.reshape(n), 1e-6
        )[0]
        errs.append(np.linalg.norm(gn - fd) / np.linalg.norm(fd))
    return errs
