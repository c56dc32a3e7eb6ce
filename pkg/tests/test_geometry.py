import math

import numpy as np
import pytest

from rollfusion.geometry import (
    EulerAngles,
    body_rates_from_euler,
    euler_from_quat,
    quat_from_euler,
    quat_normalize,
    quat_rate_jacobian,
    quat_rate_matrix,
    rot3,
    rotation_from_euler,
    rotation_from_quat,
    wrap_angle,
)
from conftest import fd_jacobian

SQ2 = math.sqrt(2.0) / 2.0


class TestRotationFromEuler:
    def test_identity(self):
        np.testing.assert_allclose(rotation_from_euler(EulerAngles(0, 0, 0)), np.eye(3))

    def test_pure_yaw_matches_elementary_rotation(self):
        # yaw-only attitude must reduce to the single elementary rotation,
        # which maps the inertial x axis onto body -y for a 90 deg yaw
        T = rotation_from_euler(EulerAngles(0, 0, math.pi / 2))
        np.testing.assert_allclose(T, rot3(math.pi / 2), atol=1e-15)
        np.testing.assert_allclose(T @ [1, 0, 0], [0, -1, 0], atol=1e-15)

    def test_elementary_composition(self, rng):
        # against the symbolic product of the three elementary rotations
        from rollfusion.geometry import rot1, rot2

        for _ in range(50):
            phi, theta, psi = rng.uniform(-math.pi, math.pi, 3)
            expected = rot1(phi) @ rot2(theta) @ rot3(psi)
            np.testing.assert_allclose(
                rotation_from_euler(EulerAngles(phi, theta, psi)), expected, atol=1e-14
            )

    def test_orthogonality(self, rng):
        for _ in range(100):
            T = rotation_from_euler(rng.uniform(-math.pi, math.pi, 3))
            np.testing.assert_allclose(T.T @ T, np.eye(3), atol=1e-12)
            assert abs(np.linalg.det(T) - 1.0) < 1e-12


class TestQuatEulerMaps:
    def test_identity(self):
        np.testing.assert_allclose(quat_from_euler(EulerAngles(0, 0, 0)), [1, 0, 0, 0])

    def test_pure_roll_half_angle(self):
        q = quat_from_euler(EulerAngles(math.pi / 2, 0, 0))
        np.testing.assert_allclose(q, [math.cos(math.pi / 4), math.sin(math.pi / 4), 0, 0])

    def test_rotation_equivalence(self, rng):
        for _ in range(100):
            e = rng.uniform(-math.pi, math.pi, 3)
            np.testing.assert_allclose(
                rotation_from_quat(quat_from_euler(e)), rotation_from_euler(e), atol=1e-12
            )

    def test_unit_norm(self, rng):
        for _ in range(50):
            q = quat_from_euler(rng.uniform(-math.pi, math.pi, 3))
            assert abs(np.linalg.norm(q) - 1.0) < 1e-9

    def test_roundtrip(self, rng):
        for _ in range(200):
            e = rng.uniform(-math.pi, math.pi, 3)
            e[1] = rng.uniform(-math.pi / 2 + 1e-3, math.pi / 2 - 1e-3)
            back = euler_from_quat(quat_from_euler(e))
            assert abs(wrap_angle(back.phi - e[0])) < 1e-10
            assert abs(wrap_angle(back.theta - e[1])) < 1e-10
            assert abs(wrap_angle(back.psi - e[2])) < 1e-10

    def test_euler_from_quat_identity(self):
        e = euler_from_quat(np.array([1.0, 0, 0, 0]))
        assert (e.phi, e.theta, e.psi) == (0.0, 0.0, 0.0)
        assert not e.gimbal_degenerate

    def test_euler_from_quat_pure_x(self):
        # (0, 1, 0, 0) is a 180 deg roll
        e = euler_from_quat(np.array([0.0, 1.0, 0, 0]))
        assert abs(abs(e.phi) - math.pi) < 1e-15
        assert abs(e.theta) < 1e-15 and abs(e.psi) < 1e-15

    def test_double_cover(self):
        e = euler_from_quat(np.array([-1.0, 0, 0, 0]))
        assert (e.phi, e.theta, e.psi) == (0.0, 0.0, 0.0)

    def test_sign_ambiguity_roundtrip(self, rng):
        for _ in range(50):
            e = rng.uniform(-1.4, 1.4, 3)
            q = quat_from_euler(e)
            back = quat_from_euler(euler_from_quat(q).as_array())
            agree = min(np.abs(back - q).max(), np.abs(back + q).max())
            assert agree < 1e-12

    def test_gimbal_degenerate_flagged(self):
        q = quat_from_euler(EulerAngles(0.3, math.pi / 2, 0.7))
        e = euler_from_quat(q)
        assert e.gimbal_degenerate
        assert abs(e.theta) <= math.pi / 2

    def test_normalizes_input(self, rng):
        e = rng.uniform(-1.0, 1.0, 3)
        q = quat_from_euler(e)
        scaled = euler_from_quat(3.7 * q)
        plain = euler_from_quat(q)
        np.testing.assert_allclose(scaled.as_array(), plain.as_array(), atol=1e-14)

    def test_zero_quaternion_rejected(self):
        with pytest.raises(ValueError):
            euler_from_quat(np.zeros(4))


class TestQuatRateMatrix:
    def test_identity_roll_rate(self):
        qdot = quat_rate_matrix([1.0, 0, 0, 0]) @ [2.0, 0, 0]
        np.testing.assert_allclose(qdot, [0, 1, 0, 0])

    def test_zero_rate(self, rng):
        q = rng.normal(0, 1, 4)
        np.testing.assert_allclose(quat_rate_matrix(q) @ np.zeros(3), np.zeros(4))

    def test_norm_conservation_identity(self, rng):
        for _ in range(100):
            q = rng.normal(0, 1, 4)
            assert np.abs(q @ quat_rate_matrix(q)).max() < 1e-14

    def test_scaled_isometry(self, rng):
        for _ in range(50):
            q = rng.normal(0, 2, 4)
            M = quat_rate_matrix(q)
            np.testing.assert_allclose(4 * M.T @ M, (q @ q) * np.eye(3), atol=1e-12)

    def test_rk4_norm_drift_fourth_order(self):
        # exact flow keeps the norm; RK4 drift must shrink ~16x per halving
        omega = np.array([0.8, -0.5, 1.1])

        def propagate(h, steps):
            q = np.array([1.0, 0, 0, 0])
            for _ in range(steps):
                k1 = quat_rate_matrix(q) @ omega
                k2 = quat_rate_matrix(q + 0.5 * h * k1) @ omega
                k3 = quat_rate_matrix(q + 0.5 * h * k2) @ omega
                k4 = quat_rate_matrix(q + h * k3) @ omega
                q = q + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
            return abs(np.linalg.norm(q) - 1.0)

        drift1 = propagate(0.05, 40)
        drift2 = propagate(0.025, 80)
        assert drift1 > 0
        assert drift1 / drift2 > 8.0


class TestQuatRateJacobian:
    def test_zero_omega(self):
        np.testing.assert_allclose(quat_rate_jacobian(np.zeros(3)), np.zeros((4, 4)))

    def test_bilinearity(self, rng):
        for _ in range(100):
            q = rng.normal(0, 1, 4)
            w = rng.normal(0, 2, 3)
            np.testing.assert_allclose(
                quat_rate_jacobian(w) @ q, quat_rate_matrix(q) @ w, atol=1e-13
            )

    def test_finite_difference(self, rng):
        for _ in range(20):
            q = rng.normal(0, 1, 4)
            w = rng.normal(0, 2, 3)
            Jfd = fd_jacobian(lambda qq: quat_rate_matrix(qq) @ w, q)
            np.testing.assert_allclose(quat_rate_jacobian(w), Jfd, atol=1e-6)


class TestBodyRates:
    def test_consistency_with_quaternion_flow(self, rng):
        # d/dt quat_from_euler(e(t)) must equal M(q) @ body_rates
        for _ in range(50):
            e = rng.uniform(-1.2, 1.2, 3)
            edot = rng.uniform(-1, 1, 3)
            h = 1e-7
            qdot_fd = (quat_from_euler(e + h * edot) - quat_from_euler(e - h * edot)) / (2 * h)
            qdot = quat_rate_matrix(quat_from_euler(e)) @ body_rates_from_euler(e, edot)
            np.testing.assert_allclose(qdot, qdot_fd, atol=1e-8)


def test_wrap_angle():
    assert wrap_angle(math.pi) == pytest.approx(math.pi)
    assert wrap_angle(-math.pi) == pytest.approx(math.pi)
    assert wrap_angle(3 * math.pi + 0.1) == pytest.approx(-math.pi + 0.1)


def test_quat_normalize_rejects_zero():
    with pytest.raises(ValueError):
        quat_normalize(np.zeros(4))
