"""Euler/quaternion attitude algebra.

Conventions used throughout the package:

- Inertial frame: right-handed, x/y horizontal, z up. Gravity is
  ``(0, 0, -g)``; a resting accelerometer reads ``+g`` on its body z axis.
- Euler sequence 3-2-1 (yaw psi about z, pitch theta about y, roll phi
  about x), with passive (coordinate-transformation) elementary rotations.
  ``rotation_from_euler`` maps inertial coordinates to body coordinates.
- Quaternions are scalar-first ndarrays ``(q0, qx, qy, qz)``. The rotation
  represented equals ``rotation_from_euler`` of the same angles.
- Quaternion kinematics: ``qdot = quat_rate_matrix(q) @ omega`` with omega
  the body angular rate.

Everything here is a pure function over numpy arrays; nothing holds state.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

GIMBAL_TOL = 1e-9


@dataclass
class EulerAngles:
    """Roll/pitch/yaw triple (radians). ``gimbal_degenerate`` flags a clamped pitch."""

    phi: float
    theta: float
    psi: float
    gimbal_degenerate: bool = field(default=False, compare=False)

    def as_array(self) -> np.ndarray:
        return np.array([self.phi, self.theta, self.psi], dtype=float)

    @classmethod
    def from_array(cls, arr) -> "EulerAngles":
        phi, theta, psi = np.asarray(arr, dtype=float)
        return cls(float(phi), float(theta), float(psi))


def wrap_angle(a: float) -> float:
    """Wrap an angle to (-pi, pi]."""
    w = math.fmod(a + math.pi, 2.0 * math.pi)
    if w <= 0.0:
        w += 2.0 * math.pi
    return w - math.pi


def rot1(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, s], [0.0, -s, c]])


def rot2(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def rot3(a: float) -> np.ndarray:
    c, s = math.cos(a), math.sin(a)
    return np.array([[c, s, 0.0], [-s, c, 0.0], [0.0, 0.0, 1.0]])


def rotation_from_euler(e: EulerAngles | np.ndarray) -> np.ndarray:
    """3x3 inertial-to-body rotation matrix for a 3-2-1 Euler triple."""
    if isinstance(e, EulerAngles):
        phi, theta, psi = e.phi, e.theta, e.psi
    else:
        phi, theta, psi = np.asarray(e, dtype=float)
    return rot1(phi) @ rot2(theta) @ rot3(psi)


def quat_from_euler(e: EulerAngles | np.ndarray) -> np.ndarray:
    """Unit quaternion with the same rotation as ``rotation_from_euler``."""
    if isinstance(e, EulerAngles):
        phi, theta, psi = e.phi, e.theta, e.psi
    else:
        phi, theta, psi = np.asarray(e, dtype=float)
    cph, sph = math.cos(phi / 2), math.sin(phi / 2)
    cth, sth = math.cos(theta / 2), math.sin(theta / 2)
    cps, sps = math.cos(psi / 2), math.sin(psi / 2)
    return np.array(
        [
            cph * cth * cps + sph * sth * sps,
            sph * cth * cps - cph * sth * sps,
            cph * sth * cps + sph * cth * sps,
            cph * cth * sps - sph * sth * cps,
        ]
    )


def rotation_from_quat(q: np.ndarray) -> np.ndarray:
    """Rotation matrix of a (not necessarily unit) quaternion, normalized internally."""
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion has no rotation")
    q0, qx, qy, qz = q / n
    return np.array(
        [
            [q0 * q0 + qx * qx - qy * qy - qz * qz, 2 * (qx * qy + q0 * qz), 2 * (qx * qz - q0 * qy)],
            [2 * (qx * qy - q0 * qz), q0 * q0 - qx * qx + qy * qy - qz * qz, 2 * (qy * qz + q0 * qx)],
            [2 * (qx * qz + q0 * qy), 2 * (qy * qz - q0 * qx), q0 * q0 - qx * qx - qy * qy + qz * qz],
        ]
    )


def euler_from_quat(q: np.ndarray) -> EulerAngles:
    """Invert ``quat_from_euler`` (up to the double cover q ~ -q).

    The input is normalized internally, so any nonzero 4-vector is accepted.
    Near gimbal lock (|pitch| -> pi/2) the pitch is clamped and the result is
    flagged ``gimbal_degenerate``; roll/yaw are then individually meaningless
    (only their sum/difference is defined).
    """
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("zero quaternion has no attitude")
    q0, qx, qy, qz = q / n

    # elements of the inertial-to-body matrix
    r02 = 2.0 * (qx * qz - q0 * qy)
    degenerate = abs(r02) >= 1.0 - GIMBAL_TOL
    theta = -math.asin(min(1.0, max(-1.0, r02)))
    if degenerate:
        # roll axis is undefined; fold everything into yaw
        phi = 0.0
        psi = math.atan2(2.0 * (qy * qz - q0 * qx), q0 * q0 + qx * qx - qy * qy - qz * qz)
    else:
        phi = math.atan2(2.0 * (qy * qz + q0 * qx), q0 * q0 - qx * qx - qy * qy + qz * qz)
        psi = math.atan2(2.0 * (qx * qy + q0 * qz), q0 * q0 + qx * qx - qy * qy - qz * qz)
    return EulerAngles(phi, theta, psi, gimbal_degenerate=degenerate)


def quat_rate_matrix(q: np.ndarray) -> np.ndarray:
    """4x3 matrix M(q) with qdot = M(q) @ omega.

    Defined for any 4-vector (the EKF state quaternion carries no norm
    constraint). Identities: q^T M(q) = 0 and 4 M^T M = ||q||^2 I.
    """
    q0, qx, qy, qz = np.asarray(q, dtype=float)
    return 0.5 * np.array(
        [
            [-qx, -qy, -qz],
            [q0, -qz, qy],
            [qz, q0, -qx],
            [-qy, qx, q0],
        ]
    )


def quat_rate_jacobian(omega: np.ndarray) -> np.ndarray:
    """4x4 Jacobian of q -> M(q) @ omega (the map is linear in q)."""
    wx, wy, wz = np.asarray(omega, dtype=float)
    return 0.5 * np.array(
        [
            [0.0, -wx, -wy, -wz],
            [wx, 0.0, wz, -wy],
            [wy, -wz, 0.0, wx],
            [wz, wy, -wx, 0.0],
        ]
    )


def body_rates_from_euler(e: EulerAngles | np.ndarray, edot: np.ndarray) -> np.ndarray:
    """Map 3-2-1 Euler angle rates to body angular rates."""
    if isinstance(e, EulerAngles):
        phi, theta = e.phi, e.theta
    else:
        phi, theta = float(e[0]), float(e[1])
    pd, td, sd = np.asarray(edot, dtype=float)
    cph, sph = math.cos(phi), math.sin(phi)
    cth, sth = math.cos(theta), math.sin(theta)
    return np.array(
        [
            pd - sd * sth,
            td * cph + sd * cth * sph,
            -td * sph + sd * cth * cph,
        ]
    )


def quat_normalize(q: np.ndarray) -> np.ndarray:
    q = np.asarray(q, dtype=float)
    n = np.linalg.norm(q)
    if n == 0.0:
        raise ValueError("cannot normalize the zero quaternion")
    return q / n
