"""The nine acceptance criteria, each at its stated tolerance and time budget.

Every test records a one-line verdict in ``ACCEPTANCE_RESULTS``; the terminal
summary prints them in order. Run alone with ``pytest tests/test_acceptance.py -s``.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest

from helpers import (
    ACCEPTANCE_RESULTS,
    canonical_problem,
    free_fall_drop,
    gradient_errors,
    hover_problem,
    regulation_scenario,
    rk4_error_ratio,
)
from omnirelay import canonical_scenario_path, cli, comms, nmpc, sim, vehicle
from omnirelay.scenario_io import load_scenario

pytestmark = pytest.mark.slow


def record(number, passed, text):
    ACCEPTANCE_RESULTS[number] = (bool(passed), text)
    print(f"[{'PASS' if passed else 'FAIL'}] criterion {number}: {text}")
    assert passed, text


@pytest.fixture(scope="module")
def canonical():
    return load_scenario(canonical_scenario_path())


def test_criterion_1_dynamics_order():
    start = time.perf_counter()
    hexa = vehicle.tilted_hexarotor()
    ratio = rk4_error_ratio(hexa, np.random.default_rng(1))
    drop = free_fall_drop(hexa)
    elapsed = time.perf_counter() - start
    ok = 12.0 <= ratio <= 20.0 and abs(drop + 4.905) < 1e-6 and elapsed < 1.0
    record(1, ok, f"RK4 ratio {ratio:.3f} in [12, 20]; free fall {drop:.9f} m; {elapsed:.2f} s")


def test_criterion_2_allocation_structure():
    start = time.perf_counter()
    hexa = vehicle.tilted_hexarotor(tilt_deg=20.0)
    quad = vehicle.planar_quadrotor()
    ranks = (vehicle.allocation_rank(hexa), vehicle.allocation_rank(quad))
    trims = (
        vehicle.hover_trim(vehicle.tilted_hexarotor(tilt_deg=0.0))[0],
        vehicle.hover_trim(hexa)[0],
        vehicle.hover_trim(quad)[0],
    )
    elapsed = time.perf_counter() - start
    ok = (ranks == (6, 4) and all(abs(t - e) < 1e-3 for t, e in zip(trims, (3.27, 3.480, 3.679)))
          and elapsed < 1.0)
    record(2, ok, f"ranks {ranks}; trims {trims[0]:.4f} / {trims[1]:.4f} / {trims[2]:.4f} N; {elapsed:.2f} s")


def test_criterion_3_link_budget():
    start = time.perf_counter()
    fspl = comms.free_space_path_loss(100.0, 2.4e9)
    doubling = comms.free_space_path_loss(200.0, 2.4e9) - fspl
    ant = comms.default_comm_params().relay_antennas[0]
    g0 = comms.antenna_gain(ant, 0.0)
    half = comms.antenna_gain(ant, 0.5 * ant.half_power_beamwidth)
    elapsed = time.perf_counter() - start
    ok = (abs(fspl - 80.05) < 0.01 and abs(doubling - 20.0 * math.log10(2.0)) < 1e-9
          and abs(half - g0 / 2) < 1e-12 and elapsed < 1.0)
    record(3, ok, f"FSPL {fspl:.4f} dB; doubling +{doubling:.6f} dB; "
                  f"half-power error {abs(half - g0 / 2):.1e}; {elapsed:.2f} s")


def test_criterion_4_derivatives(canonical):
    start = time.perf_counter()
    rng = np.random.default_rng(4)
    errs = []
    for t in rng.uniform(0.0, canonical.duration - 1.0, 20):
        errs += gradient_errors(canonical_problem(canonical, t=float(t)), rng, 1)
    elapsed = time.perf_counter() - start
    ok = max(errs) < 1e-4 and elapsed < 30.0
    record(4, ok, f"max relative gradient error {max(errs):.2e} over 20 points; {elapsed:.1f} s")


def test_criterion_5_solver_sanity(canonical):
    start = time.perf_counter()
    hexa = vehicle.tilted_hexarotor()
    comm = comms.default_comm_params()
    at_ref = nmpc.solve(hover_problem(hexa, comm))
    offset = hover_problem(hexa, comm, offset=(1.0, 0.0, 0.0))
    off_sol = nmpc.solve(offset)
    _, _, zero_cost = nmpc.rollout(offset, np.zeros((offset.horizon, 6)))
    wild = nmpc.solve(offset, np.random.default_rng(5).uniform(-500, 500, (offset.horizon, 6)))
    sols = [at_ref, off_sol, wild] + [nmpc.solve(canonical_problem(canonical, t=t)) for t in (0.0, 20.0, 45.0)]
    lo, hi = hexa.thrust_rate_min, hexa.thrust_rate_max
    in_bounds = all(np.all((s.thrust_rate_sequence >= lo) & (s.thrust_rate_sequence <= hi)) for s in sols)
    tol = canonical.nmpc.solver.constraint_tolerance
    feasible = all(s.max_constraint_violation < tol for s in sols if s.converged)
    elapsed = time.perf_counter() - start
    ok = (at_ref.converged and at_ref.cost < 1e-10 and off_sol.cost < zero_cost and in_bounds
          and feasible and elapsed < 30.0)
    record(5, ok, f"at-reference cost {at_ref.cost:.1e} (converged {at_ref.converged}); "
                  f"offset {off_sol.cost:.3f} < zero-rate {zero_cost:.3f}; rates in bounds {in_bounds}; "
                  f"converged runs feasible {feasible}; {elapsed:.1f} s")


def test_criterion_6_regulation():
    start = time.perf_counter()
    comm = comms.default_comm_params()
    offset = np.array([0.6, -0.48, 0.64])  # unit length, all three axes
    log = sim.run_closed_loop(regulation_scenario(comm, offset, duration=8.0), "omni")
    elapsed = time.perf_counter() - start
    err = np.linalg.norm(log.states[:, 0:3] - log.reference_positions, axis=1)
    below = np.nonzero(err < 0.02)[0]
    t_hit = log.time[below[0]] if below.size else math.inf
    final = log.time >= log.time[-1] - 4.0 - 1e-9
    min_margin = float(np.min(log.margins[final, :2]))
    ok = t_hit <= 8.0 and err[-1] < 0.02 and min_margin > 0 and elapsed < 120.0
    record(6, ok, f"|offset| {np.linalg.norm(offset):.3f} m; error < 2 cm at {t_hit:.2f} s, final "
                  f"{1000 * err[-1]:.2f} mm; min margin over final 4 s {min_margin:.4f}; {elapsed:.1f} s")


def test_criterion_7_comparative_thesis(canonical):
    start = time.perf_counter()
    omni = sim.metrics(sim.run_closed_loop(canonical, "omni"))
    under = sim.metrics(sim.run_closed_loop(canonical, "under"))
    elapsed = time.perf_counter() - start
    so, su = omni["alignment_satisfaction_fraction"], under["alignment_satisfaction_fraction"]
    ro, ru = omni["mean_end_to_end_rate_bps_hz"], under["mean_end_to_end_rate_bps_hz"]
    ok = so > su and ro >= ru and so > 0.9 and elapsed < 300.0
    record(7, ok, f"satisfaction omni {so:.3f} vs under {su:.3f}; mean rate {ro:.2f} vs {ru:.2f} "
                  f"bit/s/Hz; {elapsed:.0f} s")


def test_criterion_8_reproducibility(tmp_path):
    text = open(canonical_scenario_path()).read().replace("duration: 60.0", "duration: 10.0")
    path = tmp_path / "scenario.yaml"
    path.write_text(text)
    outs = [tmp_path / "first", tmp_path / "second"]
    codes = [cli.cmd_run(cli.CliConfig(str(path), str(out), vehicle="both", seed=7)) for out in outs]
    names = ("run_omni.csv", "run_under.csv")
    same = all((outs[0] / n).read_bytes() == (outs[1] / n).read_bytes() for n in names)
    ok = codes == [0, 0] and same
    record(8, ok, f"exit codes {codes}; CSV files byte-identical across reruns: {same}")


def test_criterion_9_wind(canonical):
    start = time.perf_counter()
    windy = replace(canonical, wind=sim.WindSpec(sigma=[1.0, 1.0, 1.0], correlation_time=2.0, enabled=True))
    log = sim.run_closed_loop(windy, "omni")
    elapsed = time.perf_counter() - start
    m = sim.metrics(log)
    arrays = (log.states, log.commanded_rates, log.misalignment, log.snr_db, log.margins,
              log.end_to_end_rate, log.cost, log.kkt_residual)
    finite = all(np.all(np.isfinite(a)) for a in arrays) and all(math.isfinite(v) for v in m.values())
    ok = m["solver_convergence_rate"] > 0.8 and finite
    record(9, ok, f"convergence {m['solver_convergence_rate']:.3f}; finite outputs {finite}; "
                  f"satisfaction {m['alignment_satisfaction_fraction']:.3f}; {elapsed:.0f} s")
