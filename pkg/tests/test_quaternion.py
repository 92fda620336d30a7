import numpy as np
from scipy.spatial.transform import Rotation

from omnirelay import quaternion as quat


def _scipy(q):
    # scipy is scalar-last
    return Rotation.from_quat(np.roll(q, -1))


def test_rotation_matrix_matches_scipy(rng):
    q = quat.normalize(rng.standard_normal((50, 4)))
    for qi in q:
        np.testing.assert_allclose(quat.to_rotation_matrix(qi), _scipy(qi).as_matrix(), atol=1e-14)


def test_rotate_matches_matrix(rng):
    q = quat.normalize(rng.standard_normal((20, 4)))
    v = rng.standard_normal((20, 3))
    expected = np.einsum("kij,kj->ki", quat.to_rotation_matrix(q), v)
    np.testing.assert_allclose(quat.rotate(q, v), expected, atol=1e-13)


def test_multiply_composes_rotations(rng):
    p, q = quat.normalize(rng.standard_normal((2, 4)))
    composed = (_scipy(p) * _scipy(q)).as_matrix()
    np.testing.assert_allclose(quat.to_rotation_matrix(quat.multiply(p, q)), composed, atol=1e-14)


def test_conjugate_inverts():
    q = quat.from_axis_angle([1.0, 2.0, -0.5], 0.7)
    np.testing.assert_allclose(quat.multiply(q, quat.conjugate(q)), [1, 0, 0, 0], atol=1e-15)


def test_from_euler_matches_scipy():
    roll, pitch, yaw = 0.3, -0.4, 1.2
    q = quat.from_euler(roll, pitch, yaw)
    ref = Rotation.from_euler("ZYX", [yaw, pitch, roll]).as_matrix()
    np.testing.assert_allclose(quat.to_rotation_matrix(q), ref, atol=1e-14)
