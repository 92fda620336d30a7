import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.spatial.transform import Rotation

from helpers import free_fall_drop, random_state as _random_state, rk4_error_ratio
from omnirelay import quaternion as quat
from omnirelay import vehicle
from omnirelay.errors import InfeasibleError, InvalidInputError, InvalidStateError
from omnirelay.vehicle import MravState

G = 9.81

finite = st.floats(-20.0, 20.0, allow_nan=False)


def _svd_rank(a, rtol=1e-8):
    s = np.linalg.svd(a, compute_uv=False)
    return int(np.sum(s > rtol * s.max()))


class TestAllocation:
    def test_zero_thrust_zero_wrench(self, hexa):
        w = vehicle.wrench_from_thrusts(hexa, np.zeros(6))
        assert np.all(w.as_vector() == 0.0)

    def test_untilted_hexarotor_pure_lift(self):
        params = vehicle.tilted_hexarotor(tilt_deg=0.0)
        w = vehicle.wrench_from_thrusts(params, np.full(6, 2.5))
        np.testing.assert_allclose(w.force, [0, 0, 15.0], atol=1e-12)
        np.testing.assert_allclose(w.torque, 0.0, atol=1e-12)

    @pytest.mark.parametrize("tilt", [1.0, 10.0, 20.0, 35.0, 45.0])
    def test_hexarotor_rank_six(self, tilt):
        params = vehicle.tilted_hexarotor(tilt_deg=tilt)
        assert _svd_rank(params.allocation) == 6
        assert vehicle.allocation_rank(params) == 6

    def test_quadrotor_rank_four(self, quad):
        assert _svd_rank(quad.allocation) == 4
        assert vehicle.allocation_rank(quad) == 4

    def test_allocation_columns_from_geometry(self, hexa):
        # rebuild column 1 from first principles with scipy's rotation
        p = hexa.rotor_positions[1]
        arm = p / np.linalg.norm(p)
        axis = Rotation.from_rotvec(arm * hexa.rotor_tilt_angles[1]).apply([0, 0, 1])
        torque = np.cross(p, axis) + hexa.spin_directions[1] * hexa.drag_torque_coefficient * axis
        np.testing.assert_allclose(hexa.allocation[:, 1], np.concatenate([axis, torque]), atol=1e-15)

    @settings(max_examples=50, deadline=None)
    @given(st.lists(finite, min_size=6, max_size=6), st.lists(finite, min_size=6, max_size=6),
           finite, finite)
    def test_linearity(self, t1, t2, a, b):
        params = vehicle.tilted_hexarotor()
        t1, t2 = np.array(t1), np.array(t2)
        lhs = vehicle.wrench_from_thrusts(params, a * t1 + b * t2).as_vector()
        rhs = (a * vehicle.wrench_from_thrusts(params, t1).as_vector()
               + b * vehicle.wrench_from_thrusts(params, t2).as_vector())
        scale = 1.0 + np.max(np.abs(rhs))
        np.testing.assert_allclose(lhs, rhs, atol=1e-12 * scale * 400)

    def test_wrong_length(self, hexa):
        with pytest.raises(InvalidInputError):
            vehicle.wrench_from_thrusts(hexa, np.zeros(4))


class TestParams:
    def test_rejects_bad_inertia(self):
        with pytest.raises(InvalidInputError):
            vehicle.tilted_hexarotor(inertia=(0.02, -0.01, 0.04))

    def test_rejects_bad_limits(self):
        with pytest.raises(InvalidInputError):
            vehicle.tilted_hexarotor(thrust_limits=(5.0, 1.0))
        with pytest.raises(InvalidInputError):
            vehicle.tilted_hexarotor(thrust_rate_limits=(1.0, 100.0))

    def test_rejects_rotor_count(self, hexa):
        with pytest.raises(InvalidInputError):
            vehicle.MravParams(
                1.0, np.eye(3), hexa.rotor_positions[:5], np.zeros(5), np.ones(5),
                0.01, 0.0, 1.0, -1.0, 1.0,
            )


class TestDynamics:
    def test_hover_equilibrium_rhs(self, hexa):
        state = MravState.at_rest([0, 0, 10], vehicle.hover_trim(hexa))
        d = vehicle.continuous_dynamics(hexa, state, state.actuator_values)
        np.testing.assert_allclose(d[3:6], 0.0, atol=1e-12)
        np.testing.assert_allclose(d[10:13], 0.0, atol=1e-12)

    def test_free_fall_rhs(self, hexa, rng):
        for _ in range(5):
            d = vehicle.continuous_dynamics(hexa, _random_state(rng, hexa), np.zeros(6))
            np.testing.assert_allclose(d[3:6], [0, 0, -G], atol=1e-14)

    def test_force_oracle(self, hexa, rng):
        for _ in range(20):
            state = _random_state(rng, hexa)
            thrusts = rng.uniform(-10, 10, 6)
            d = vehicle.continuous_dynamics(hexa, state, thrusts)
            f_body = hexa.allocation[:3] @ thrusts
            expected = _scipy_rot(state.attitude).apply(f_body)
            got = hexa.mass * d[3:6] - hexa.mass * np.array([0, 0, -G])
            assert np.linalg.norm(got - expected) <= 1e-12 * np.linalg.norm(expected)

    def test_disturbance_enters_in_world_frame(self, hexa, rng):
        state = _random_state(rng, hexa)
        base = vehicle.continuous_dynamics(hexa, state, np.zeros(6))
        pushed = vehicle.continuous_dynamics(hexa, state, np.zeros(6), disturbance=[2.0, 0, 0])
        np.testing.assert_allclose(pushed[3:6] - base[3:6], [2.0 / hexa.mass, 0, 0], atol=1e-14)

    def test_rejects_non_unit_quaternion(self, hexa):
        state = MravState([0, 0, 0], [0, 0, 0], [1.0, 1e-3, 0, 0], [0, 0, 0], np.zeros(6))
        with pytest.raises(InvalidStateError):
            vehicle.continuous_dynamics(hexa, state, np.zeros(6))

    def test_rejects_rotor_mismatch(self, hexa):
        state = MravState.at_rest([0, 0, 0], np.zeros(4))
        with pytest.raises(InvalidStateError):
            vehicle.step(hexa, state, np.zeros(6), 0.01)


def _scipy_rot(q):
    return Rotation.from_quat([q[1], q[2], q[3], q[0]])


class TestStep:
    def test_free_fall(self, hexa):
        assert abs(free_fall_drop(hexa) + 4.905) < 1e-6

    def test_rk4_order(self, hexa, rng):
        assert 12.0 <= rk4_error_ratio(hexa, rng) <= 20.0

    def test_quaternion_norm_preserved(self, hexa, rng):
        s = _random_state(rng, hexa, spin=5.0)
        for _ in range(1000):
            s = vehicle.step(hexa, s, rng.uniform(-15, 15, 6), 0.01)
            assert abs(np.linalg.norm(s.attitude) - 1.0) < 1e-9

    @pytest.mark.parametrize("dt", [0.0, -0.01])
    def test_nonpositive_dt(self, hexa, dt):
        with pytest.raises(InvalidInputError):
            vehicle.step(hexa, MravState.at_rest([0, 0, 0], np.zeros(6)), np.zeros(6), dt)

    def test_hover_equilibrium_five_seconds(self, hexa):
        s = MravState.at_rest([0, 0, 10], vehicle.hover_trim(hexa))
        for _ in range(500):
            s = vehicle.step(hexa, s, s.actuator_values, 0.01)
        assert np.linalg.norm(s.velocity) < 1e-6
        assert np.linalg.norm(s.angular_velocity) < 1e-6

    def test_energy_without_thrust(self, hexa, rng):
        s = MravState(
            [0, 0, 50.0], rng.standard_normal(3), quat.normalize(rng.standard_normal(4)),
            2.0 * rng.standard_normal(3), np.zeros(6),
        )
        e0 = vehicle.mechanical_energy(hexa, s)
        for _ in range(1000):
            s = vehicle.step(hexa, s, np.zeros(6), 1e-3)
        assert abs(vehicle.mechanical_energy(hexa, s) - e0) / abs(e0) < 1e-6

    def test_deterministic(self, hexa, rng):
        s = _random_state(rng, hexa)
        t = rng.uniform(-5, 5, 6)
        a = vehicle.step(hexa, s, t, 0.01).to_vector()
        b = vehicle.step(hexa, s, t, 0.01).to_vector()
        assert a.tobytes() == b.tobytes()


class TestHoverTrim:
    def test_untilted(self):
        np.testing.assert_allclose(vehicle.hover_trim(vehicle.tilted_hexarotor(tilt_deg=0.0)), 3.27, atol=1e-3)

    def test_tilted(self, hexa):
        expected = 2.0 * G / (6.0 * math.cos(math.radians(20.0)))
        np.testing.assert_allclose(vehicle.hover_trim(hexa), expected, rtol=1e-12)
        np.testing.assert_allclose(vehicle.hover_trim(hexa), 3.480, atol=1e-3)

    def test_quadrotor(self, quad):
        np.testing.assert_allclose(vehicle.hover_trim(quad), 3.679, atol=1e-3)

    def test_zero_net_torque(self, hexa):
        w = vehicle.wrench_from_thrusts(hexa, vehicle.hover_trim(hexa))
        np.testing.assert_allclose(w.torque, 0.0, atol=1e-12)
        np.testing.assert_allclose(w.force, [0, 0, 2.0 * G], atol=1e-12)

    def test_infeasible(self):
        with pytest.raises(InfeasibleError):
            vehicle.hover_trim(vehicle.planar_quadrotor(mass=10.0))


class TestAugmentedStep:
    def test_zero_rates_keep_thrusts(self, hexa, rng):
        s = _random_state(rng, hexa)
        out = vehicle.augmented_step(hexa, s, np.zeros(6), 0.02)
        assert np.array_equal(out.actuator_values, s.actuator_values)

    def test_rates_integrate_exactly(self, hexa, rng):
        s = _random_state(rng, hexa)
        rates = rng.uniform(-100, 100, 6)
        out = vehicle.augmented_step(hexa, s, rates, 0.05)
        np.testing.assert_array_equal(out.actuator_values, s.actuator_values + 0.05 * rates)

    def test_composition(self, hexa, rng):
        for _ in range(10):
            s = _random_state(rng, hexa)
            rates = rng.uniform(-100, 100, 6)
            a = vehicle.augmented_step(hexa, s, rates, 0.05).to_vector()
            b = vehicle.step(hexa, s, s.actuator_values + 0.05 * rates, 0.05).to_vector()
            assert np.max(np.abs(a - b)) < 1e-12

    def test_no_clamping(self, quad):
        s = MravState.at_rest([0, 0, 10], np.full(4, 9.9))
        out = vehicle.augmented_step(quad, s, np.full(4, 100.0), 0.05)
        assert np.all(out.actuator_values > quad.thrust_max)

    def test_nonpositive_dt(self, hexa):
        with pytest.raises(InvalidInputError):
            vehicle.augmented_step(hexa, MravState.at_rest([0, 0, 0], np.zeros(6)), np.zeros(6), 0.0)
