"""Compare the compiled and numpy kernels on solver-sized workloads.

The batch shapes match one finite-difference Jacobian sweep of the default
NMPC problem: 2·N·n + 1 rollouts of N = 20 stages on the hexarotor.

    python benchmarks/bench_kernels.py --repeat 20
"""

import argparse
import timeit

import numpy as np

from omnirelay import _kernels_py, comms, quaternion as quat, vehicle

try:
    from omnirelay import _kernels as _compiled
except ImportError:
    _compiled = None


def workloads(horizon=20, seed=0):
    rng = np.random.default_rng(seed)
    params = vehicle.tilted_hexarotor()
    comm = comms.default_comm_params()
    n = params.n_rotors
    batch = 2 * horizon * n + 1
    x0 = vehicle.MravState.at_rest([30.0, 0.0, 15.0], vehicle.hover_trim(params)).to_vector()
    rates = rng.uniform(-20.0, 20.0, (batch, horizon, n))
    rollout_args = (x0, rates, 0.05, params.mass, params.inertia, params.inertia_inv,
                    params.allocation, np.zeros(3))
    states = _kernels_py.augmented_rollout(*rollout_args)
    states[..., 6:10] = quat.normalize(states[..., 6:10])
    bores = np.stack([a.boresight_body for a in comm.relay_antennas])
    targets = np.broadcast_to(np.array([[0.0, 0.0, 0.0], [80.0, 0.0, 20.0]]), (horizon + 1, 2, 3)).copy()
    return {
        "augmented_rollout": rollout_args,
        "pointing_batch": (states, bores, targets),
        "rigid_step": (x0[:13], x0[13:], 0.01, params.mass, params.inertia, params.inertia_inv,
                       params.allocation, np.zeros(3)),
    }


def bench(module, name, args, repeat):
    fn = getattr(module, name)
    fn(*args)
    number = 5 if name != "rigid_step" else 2000
    best = min(timeit.repeat(lambda: fn(*args), number=number, repeat=repeat))
    return best / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=7)
    parser.add_argument("--horizon", type=int, default=20)
    args = parser.parse_args(argv)

    loads = workloads(args.horizon)
    print(f"{'kernel':<20} {'python [ms]':>12} {'cython [ms]':>12} {'speedup':>8}")
    for name, call_args in loads.items():
        t_py = bench(_kernels_py, name, call_args, args.repeat)
        if _compiled is None:
            print(f"{name:<20} {1e3 * t_py:>12.4f} {'n/a':>12} {'':>8}")
            continue
        t_c = bench(_compiled, name, call_args, args.repeat)
        print(f"{name:<20} {1e3 * t_py:>12.4f} {1e3 * t_c:>12.4f} {t_py / t_c:>7.1f}x")


if __name__ == "__main__":
    main()
