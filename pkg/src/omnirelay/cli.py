"""Command-line front end: run scenarios, compare vehicles, inspect one OCP.

Exit codes: 0 success, 1 internal error (a non-finite value reached an output),
2 invalid scenario or arguments, 3 file-system error.
Solver non-convergence never changes the exit status; it shows up in the
metrics instead.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import math
import os
import sys
from dataclasses import dataclass, replace

import numpy as np

from . import nmpc, sim
from .errors import OmniRelayError, ScenarioParseError, ScenarioValidationError
from .scenario_io import load_scenario, parse_scenario, scenario_to_dict, serialize_scenario

__all__ = ["CliConfig", "cmd_run", "cmd_compare", "cmd_solve_ocp", "main", "parse_scenario",
           "serialize_scenario", "csv_header"]

EXIT_OK = 0
EXIT_INTERNAL = 1
EXIT_VALIDATION = 2
EXIT_IO = 3

EMIT_FORMATS = ("csv", "json")

log = logging.getLogger("omnirelay")


@dataclass(frozen=True)
class CliConfig:
    scenario_path: str
    out_dir: str | None = None
    vehicle: str = "both"
    emit: tuple = EMIT_FORMATS
    seed: int | None = None
    verbosity: int = 0


def csv_header(n_rotors: int) -> list:
    """Column names of the per-step CSV, in their documented order."""
    return (
        ["t", "px", "py", "pz", "vx", "vy", "vz", "qw", "qx", "qy", "qz", "wx", "wy", "wz"]
        + [f"thrust_{i + 1}" for i in range(n_rotors)]
        + [f"rate_{i + 1}" for i in range(n_rotors)]
        + ["misalign_bs_rad", "misalign_uav2_rad", "margin_bs", "margin_uav2",
           "snr_bs_db", "snr_uav2_db", "rate_bps_hz", "cost", "kkt", "iters", "converged"]
    )


def _fmt(x: float) -> str:
    x = float(x)
    if not math.isfinite(x):
        raise FloatingPointError(f"refusing to emit non-finite value {x!r}")
    return repr(x)


def _log_rows(log_: sim.SimLog):
    for k in range(len(log_)):
        yield (
            [_fmt(log_.time[k])]
            + [_fmt(v) for v in log_.states[k]]
            + [_fmt(v) for v in log_.commanded_rates[k]]
            + [_fmt(log_.misalignment[k, 0]), _fmt(log_.misalignment[k, 1]),
               _fmt(log_.margins[k, 0]), _fmt(log_.margins[k, 1]),
               _fmt(log_.snr_db[k, 0]), _fmt(log_.snr_db[k, 1]),
               _fmt(log_.end_to_end_rate[k]), _fmt(log_.cost[k]), _fmt(log_.kkt_residual[k]),
               str(int(log_.iterations[k])), str(int(bool(log_.converged[k])))]
        )


def write_csv(path: str, log_: sim.SimLog) -> None:
    n = log_.commanded_rates.shape[1]
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(csv_header(n))
        writer.writerows(_log_rows(log_))


def _finite_tree(obj, where="$"):
    if isinstance(obj, dict):
        for k, v in obj.items():
            _finite_tree(v, f"{where}.{k}")
    elif isinstance(obj, (list, tuple)):
        for i, v in enumerate(obj):
            _finite_tree(v, f"{where}[{i}]")
    elif isinstance(obj, float) and not math.isfinite(obj):
        raise FloatingPointError(f"non-finite value at {where}")


def write_json(path: str, obj) -> None:
    _finite_tree(obj)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=False, allow_nan=False)
        fh.write("\n")


def _metrics_record(scenario: sim.Scenario, log_: sim.SimLog) -> dict:
    summary = sim.metrics(log_, scenario.comm)
    summary["steps"] = len(log_)
    summary["solver_failures"] = int(np.sum(log_.solver_failed))
    return summary


def _load(cfg: CliConfig) -> sim.Scenario:
    scenario = load_scenario(cfg.scenario_path)
    if cfg.seed is not None:
        if not 0 <= cfg.seed < 2**64:
            raise ScenarioValidationError("rng_seed", "expected an integer in [0, 2^64)")
        scenario = replace(scenario, rng_seed=int(cfg.seed))
    return scenario


def _kinds(vehicle: str) -> tuple:
    return sim.VEHICLE_KINDS if vehicle == "both" else (vehicle,)


def _run_and_emit(cfg: CliConfig, scenario: sim.Scenario, kinds) -> dict:
    os.makedirs(cfg.out_dir, exist_ok=True)
    results = {}
    for kind in kinds:
        log.info("running %s vehicle for %.3g s", kind, scenario.duration)
        run_log = sim.run_closed_loop(scenario, kind)
        record = _metrics_record(scenario, run_log)
        results[kind] = record
        if "csv" in cfg.emit:
            write_csv(os.path.join(cfg.out_dir, f"run_{kind}.csv"), run_log)
        if "json" in cfg.emit:
            write_json(os.path.join(cfg.out_dir, f"metrics_{kind}.json"), record)
        log.info("%s: satisfaction %.3f, convergence %.3f", kind,
                 record["alignment_satisfaction_fraction"], record["solver_convergence_rate"])
    if "json" in cfg.emit:
        write_json(os.path.join(cfg.out_dir, "scenario_resolved.json"), scenario_to_dict(scenario))
    return results


def _comparison(results: dict) -> dict:
    keys = list(sim.METRIC_KEYS)
    return {
        "omni": {k: results["omni"][k] for k in keys},
        "under": {k: results["under"][k] for k in keys},
        "delta": {k: results["omni"][k] - results["under"][k] for k in keys},
    }


def cmd_run(cfg: CliConfig) -> int:
    """Run the requested vehicle(s) and write CSV logs, metrics and the resolved scenario.

    With both vehicles, ``comparison.json`` is written as well.
    """
    scenario = _load(cfg)
    results = _run_and_emit(cfg, scenario, _kinds(cfg.vehicle))
    if len(results) == 2 and "json" in cfg.emit:
        write_json(os.path.join(cfg.out_dir, "comparison.json"), _comparison(results))
    return EXIT_OK


def comparison_table(comparison: dict) -> str:
    """Fixed-width table of metric name, omni, under and delta (omni - under)."""
    lines = [f"{'metric':<34} {'omni':>14} {'under':>14} {'delta':>14}"]
    lines.append("-" * len(lines[0]))
    for key in comparison["delta"]:
        lines.append(
            f"{key:<34} {comparison['omni'][key]:>14.6g} "
            f"{comparison['under'][key]:>14.6g} {comparison['delta'][key]:>14.6g}"
        )
    return "\n".join(lines)


def cmd_compare(cfg: CliConfig) -> int:
    """Run both vehicles on the same scenario and seed; write comparison.json and print a table."""
    scenario = _load(cfg)
    results = _run_and_emit(replace(cfg, emit=EMIT_FORMATS), scenario, sim.VEHICLE_KINDS)
    comparison = _comparison(results)
    write_json(os.path.join(cfg.out_dir, "comparison.json"), comparison)
    print(comparison_table(comparison))
    return EXIT_OK


def cmd_solve_ocp(cfg: CliConfig, at: float) -> int:
    """Solve one finite-horizon problem from the scenario's initial state at time ``at``."""
    scenario = _load(cfg)
    if not 0.0 <= at <= scenario.duration:
        raise ScenarioValidationError("--at", f"must lie in [0, {scenario.duration}]")
    kind = "omni" if cfg.vehicle == "both" else cfg.vehicle
    refs, bs, uav2 = sim.prediction_windows(scenario, at)
    problem = nmpc.OcpProblem(scenario.initial_state(kind), refs, scenario.vehicles[kind],
                              scenario.comm, bs, uav2, scenario.nmpc)
    sol = nmpc.solve(problem)
    _, _, zero_cost = nmpc.rollout(problem, np.zeros((problem.horizon, problem.n_rotors)))
    print(f"vehicle                  {kind}")
    print(f"time                     {at:.6g} s")
    print(f"horizon                  {problem.horizon} x {scenario.nmpc.step_dt:g} s")
    print(f"cost                     {sol.cost:.6e}")
    print(f"zero-rate cost           {zero_cost:.6e}")
    print(f"kkt_residual             {sol.kkt_residual:.3e}")
    print(f"max_constraint_violation {sol.max_constraint_violation:.3e}")
    print(f"iterations               {sol.iterations}")
    print(f"converged                {str(sol.converged).lower()}")
    print("first rates [N/s]        " + " ".join(f"{r:+.4f}" for r in sol.thrust_rate_sequence[0]))
    end = sol.predicted_outputs[-1]
    print("terminal outputs         " + " ".join(f"{v:.4f}" for v in end))
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="omnirelay",
        description="NMPC relay positioning with directional antennas: omnidirectional vs quadrotor.",
    )
    parser.add_argument("-v", "--verbose", action="count", default=0, help="more log output (repeatable)")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate one or both vehicles and write logs")
    run.add_argument("--scenario", required=True, help="YAML scenario file")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--vehicle", choices=("omni", "under", "both"), default="both")
    run.add_argument("--seed", type=int, default=None, help="override the scenario rng_seed")
    run.add_argument("--emit", nargs="+", choices=EMIT_FORMATS, default=list(EMIT_FORMATS),
                     help="which outputs to write (default: csv json)")

    cmp_ = sub.add_parser("compare", help="run both vehicles and write comparison.json")
    cmp_.add_argument("--scenario", required=True)
    cmp_.add_argument("--out", required=True)
    cmp_.add_argument("--seed", type=int, default=None)

    ocp = sub.add_parser("solve-ocp", help="solve a single OCP and print a summary")
    ocp.add_argument("--scenario", required=True)
    ocp.add_argument("--at", type=float, required=True, help="mission time in seconds")
    ocp.add_argument("--vehicle", choices=("omni", "under"), default="omni")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    cfg = CliConfig(
        scenario_path=args.scenario,
        out_dir=getattr(args, "out", None),
        vehicle=getattr(args, "vehicle", "both"),
        emit=tuple(getattr(args, "emit", EMIT_FORMATS)),
        seed=getattr(args, "seed", None),
        verbosity=args.verbose,
    )
    try:
        if args.command == "run":
            return cmd_run(cfg)
        if args.command == "compare":
            return cmd_compare(cfg)
        return cmd_solve_ocp(cfg, args.at)
    except FloatingPointError as exc:
        print(f"omnirelay: internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except (ScenarioParseError, ScenarioValidationError) as exc:
        print(f"omnirelay: invalid scenario: {exc}", file=sys.stderr)
        return EXIT_VALIDATION
    except OSError as exc:
        print(f"omnirelay: {exc.strerror or exc}: {exc.filename or ''}".rstrip(": "), file=sys.stderr)
        return EXIT_IO
    except (OmniRelayError, ValueError) as exc:
        print(f"omnirelay: {exc}", file=sys.stderr)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
