import os
import subprocess
import sys

import numpy as np
import pytest

from omnirelay import _kernels_py, quaternion as quat, vehicle

compiled = pytest.importorskip("omnirelay._kernels", reason="compiled kernels not built")


def _rigid_args(params, rng):
    x = np.concatenate([rng.standard_normal(6), quat.normalize(rng.standard_normal(4)), rng.standard_normal(3)])
    return x, params.mass, params.inertia, params.inertia_inv, params.allocation


@pytest.mark.parametrize("maker", [vehicle.tilted_hexarotor, vehicle.planar_quadrotor])
def test_rigid_step_backends_agree(maker, rng):
    params = maker()
    x, m, inertia, inv, alloc = _rigid_args(params, rng)
    t = rng.uniform(-5, 5, params.n_rotors)
    d = rng.standard_normal(3)
    a = _kernels_py.rigid_step(x, t, 0.01, m, inertia, inv, alloc, d)
    b = compiled.rigid_step(x, t, 0.01, m, inertia, inv, alloc, d)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-13)


def test_augmented_rollout_backends_agree(hexa, rng):
    x, m, inertia, inv, alloc = _rigid_args(hexa, rng)
    x0 = np.concatenate([x, rng.uniform(0, 5, 6)])
    rates = rng.uniform(-20, 20, (7, 20, 6))
    a = _kernels_py.augmented_rollout(x0, rates, 0.05, m, inertia, inv, alloc, np.zeros(3))
    b = compiled.augmented_rollout(x0, rates, 0.05, m, inertia, inv, alloc, np.zeros(3))
    assert a.shape == b.shape == (7, 21, 19)
    np.testing.assert_allclose(a, b, rtol=1e-10, atol=1e-10)


def test_augmented_rollout_matches_public_step(hexa, rng):
    x, *_ = _rigid_args(hexa, rng)
    x0 = np.concatenate([x, rng.uniform(0, 5, 6)])
    rates = rng.uniform(-50, 50, (1, 5, 6))
    out = compiled.augmented_rollout(x0, rates, 0.05, hexa.mass, hexa.inertia, hexa.inertia_inv,
                                     hexa.allocation, np.zeros(3))
    s = vehicle.MravState.from_vector(x0)
    for k in range(5):
        s = vehicle.augmented_step(hexa, s, rates[0, k], 0.05)
        np.testing.assert_allclose(out[0, k + 1], s.to_vector(), atol=1e-12)


def test_pointing_batch_backends_agree(rng):
    states = rng.standard_normal((3, 4, 19))
    states[..., 6:10] = quat.normalize(states[..., 6:10])
    bores = quat.normalize(rng.standard_normal((2, 3)))
    targets = rng.standard_normal((4, 2, 3)) * 10
    targets[1, 0] = states[0, 1, 0:3]  # one coincident target
    a = _kernels_py.pointing_batch(states, bores, targets)
    b = compiled.pointing_batch(states, bores, targets)
    for x, y in zip(a, b):
        np.testing.assert_allclose(x, y, rtol=0, atol=1e-12)
    cos_t, theta, dist, axes = a
    assert dist[0, 1, 0] == 0.0 and theta[0, 1, 0] == 0.0
    assert np.all(np.isfinite(axes))


def test_fallback_selected_by_environment():
    code = "from omnirelay._backend import BACKEND; print(BACKEND)"
    env = dict(os.environ, OMNIRELAY_BACKEND="python")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"
