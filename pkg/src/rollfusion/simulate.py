"""Ground-truth trajectory synthesis on a closed track.

Marches time exactly through the speed profile (v^2 is piecewise linear in
arc length, so each grid cell has constant longitudinal acceleration and a
closed-form time law), then builds every kinematic and attitude quantity
pointwise-analytically: roll from the coordinated-turn balance with the
linear rider-offset law, body rates from the exact Euler-rate kinematics,
and the specific force from the attitude and inertial acceleration. Because
every sample is generated from the same angles that the coordinated-
manoeuvre roll formula inverts, the formula reproduces the true roll to
machine precision on these streams; any downstream estimator error is
attributable to noise or reconstruction, never to the truth itself.

A nonzero ``side_slip`` yaws the body away from the velocity direction,
breaking the coordinated-manoeuvre assumption on purpose (model-mismatch
stress knob, not a physical tire model).
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleTrajectoryError
from .kinematics import DEFAULT_COORDINATION_FLOOR, DEFAULT_GRAVITY, gravity_vector
from .track import SpeedProfile, TrackModel, _cell_time


@dataclass
class TrajectoryTruth:
    """Uniformly sampled ground truth, the oracle for every error metric."""

    t: np.ndarray
    s: np.ndarray
    vel: np.ndarray        # (n, 3) inertial velocity
    vel_dot: np.ndarray    # (n, 3) inertial acceleration
    xi_e: np.ndarray       # (n, 6) speed/grade/course and rates (course continuous)
    euler: np.ndarray      # (n, 3) attitude (includes side-slip yaw offset)
    omega: np.ndarray      # (n, 3) body rates
    a_body: np.ndarray     # (n, 3) noise-free specific force
    phi: np.ndarray        # (n,) roll angle
    delta_phi: np.ndarray  # (n,) rider offset
    dt: float
    g_mag: float
    lap_time: float
    track_length: float
    k_rider: float
    side_slip: float = 0.0

    def __len__(self) -> int:
        return len(self.t)

    def quaternions(self) -> np.ndarray:
        """(n, 4) unit quaternions of the attitude series."""
        return quat_array_from_euler(self.euler)


def quat_array_from_euler(euler: np.ndarray) -> np.ndarray:
    """Vectorized scalar-first quaternion from (n, 3) Euler triples."""
    half = 0.5 * np.asarray(euler, dtype=float)
    cph, sph = np.cos(half[:, 0]), np.sin(half[:, 0])
    cth, sth = np.cos(half[:, 1]), np.sin(half[:, 1])
    cps, sps = np.cos(half[:, 2]), np.sin(half[:, 2])
    return np.stack(
        [
            cph * cth * cps + sph * sth * sps,
            sph * cth * cps - cph * sth * sps,
            cph * sth * cps + sph * cth * sps,
            cph * cth * sps - sph * sth * cps,
        ],
        axis=1,
    )


def rotation_array_from_euler(euler: np.ndarray) -> np.ndarray:
    """(n, 3, 3) inertial-to-body rotation matrices."""
    e = np.asarray(euler, dtype=float)
    cph, sph = np.cos(e[:, 0]), np.sin(e[:, 0])
    cth, sth = np.cos(e[:, 1]), np.sin(e[:, 1])
    cps, sps = np.cos(e[:, 2]), np.sin(e[:, 2])
    R = np.empty((len(e), 3, 3))
    R[:, 0, 0] = cth * cps
    R[:, 0, 1] = cth * sps
    R[:, 0, 2] = -sth
    R[:, 1, 0] = sph * sth * cps - cph * sps
    R[:, 1, 1] = sph * sth * sps + cph * cps
    R[:, 1, 2] = sph * cth
    R[:, 2, 0] = cph * sth * cps + sph * sps
    R[:, 2, 1] = cph * sth * sps - sph * cps
    R[:, 2, 2] = cph * cth
    return R


def _march_time(profile: SpeedProfile, duration: float, dt: float):
    """Exact (s, v, a) at uniform times: constant acceleration per profile cell."""
    n_steps = int(round(duration / dt))
    s_out = np.empty(n_steps)
    v_out = np.empty(n_steps)
    a_out = np.empty(n_steps)

    ds = profile.ds
    v2 = profile.v2
    n_cells = len(v2) - 1
    s_total = 0.0  # unwrapped distance
    idx = 0        # current cell
    s_in_cell = 0.0

    def cell_a(i):
        return (v2[i + 1] - v2[i]) / (2.0 * ds)

    for k in range(n_steps):
        v2_here = v2[idx] + (v2[idx + 1] - v2[idx]) * (s_in_cell / ds)
        a_here = cell_a(idx)
        s_out[k] = s_total
        v_out[k] = math.sqrt(v2_here)
        a_out[k] = a_here
        # advance one dt, crossing cells exactly
        remaining = dt
        while remaining > 0.0:
            v_here = math.sqrt(v2[idx] + (v2[idx + 1] - v2[idx]) * (s_in_cell / ds))
            a_here = cell_a(idx)
            t_exit = _cell_time(v_here**2, v2[idx + 1], ds - s_in_cell)
            if t_exit > remaining:
                adv = v_here * remaining + 0.5 * a_here * remaining * remaining
                s_in_cell += adv
                s_total += adv
                remaining = 0.0
            else:
                s_total += ds - s_in_cell
                s_in_cell = 0.0
                idx = (idx + 1) % n_cells
                remaining -= t_exit
    return s_out, v_out, a_out


def generate_truth(
    track: TrackModel,
    profile: SpeedProfile,
    k_rider: float = 0.1,
    dt: float = 0.01,
    n_laps: float = 1.0,
    g_mag: float = DEFAULT_GRAVITY,
    side_slip: float = 0.0,
    duration: float | None = None,
    a_floor: float = DEFAULT_COORDINATION_FLOOR,
) -> TrajectoryTruth:
    """Sample a lap-periodic coordinated-manoeuvre truth at the IMU rate.

    ``duration`` overrides ``n_laps`` when given. Raises
    InfeasibleTrajectoryError if the coordinated-manoeuvre denominator falls
    to its floor anywhere along the path (only checked without side slip).
    """
    lap_time = profile.lap_time
    run_time = duration if duration is not None else n_laps * lap_time
    s, v, a = _march_time(profile, run_time, dt)
    t = np.arange(len(s)) * dt

    kappa = track.kappa_at(s)
    kappa_p = track.kappa_prime_at(s)
    gamma = track.slope_at(s)
    gamma_p = track.slope_prime_at(s)
    chi = track.chi_at(s)

    cg, sg = np.cos(gamma), np.sin(gamma)
    gamma_dot = gamma_p * v
    chi_dot = kappa * v
    v_horiz = v * cg

    # coordinated-turn balance with the linear rider-offset law
    u = v_horiz * chi_dot / g_mag
    u_dot = (kappa_p * v * v * v * cg + 2.0 * kappa * v * a * cg - kappa * v * v * sg * gamma_dot) / g_mag
    phi = -np.arctan(u) / (1.0 + k_rider)
    phi_dot = -u_dot / ((1.0 + k_rider) * (1.0 + u * u))
    delta_phi = k_rider * phi

    euler = np.stack([phi, gamma, chi + side_slip], axis=1)
    euler_dot = np.stack([phi_dot, gamma_dot, chi_dot], axis=1)

    # velocity and acceleration from the aerodynamic parametrization
    cc, sc = np.cos(chi), np.sin(chi)
    vel = np.stack([v * cc * cg, v * sc * cg, -v * sg], axis=1)
    vel_dot = np.stack(
        [
            a * cc * cg - v * sc * cg * chi_dot - v * cc * sg * gamma_dot,
            a * sc * cg + v * cc * cg * chi_dot - v * sc * sg * gamma_dot,
            -a * sg - v * cg * gamma_dot,
        ],
        axis=1,
    )
    xi_e = np.stack([v, gamma, chi, a, gamma_dot, chi_dot], axis=1)

    # body rates through the exact 3-2-1 Euler-rate kinematics
    cph, sph = np.cos(phi), np.sin(phi)
    cth, sth = cg, sg
    omega = np.stack(
        [
            phi_dot - chi_dot * sth,
            gamma_dot * cph + chi_dot * cth * sph,
            -gamma_dot * sph + chi_dot * cth * cph,
        ],
        axis=1,
    )

    R = rotation_array_from_euler(euler)
    a_body = np.einsum("nij,nj->ni", R, vel_dot - gravity_vector(g_mag))

    if side_slip == 0.0:
        p = g_mag * cg - v * gamma_dot
        r = v * chi_dot * cg
        den = p * a_body[:, 2] + r * a_body[:, 1]
        if np.any(den <= a_floor):
            raise InfeasibleTrajectoryError(
                f"coordinated-manoeuvre denominator fell to {den.min():.3g} on the path"
            )

    return TrajectoryTruth(
        t=t,
        s=s,
        vel=vel,
        vel_dot=vel_dot,
        xi_e=xi_e,
        euler=euler,
        omega=omega,
        a_body=a_body,
        phi=phi,
        delta_phi=delta_phi,
        dt=dt,
        g_mag=g_mag,
        lap_time=lap_time,
        track_length=track.length,
        k_rider=k_rider,
        side_slip=side_slip,
    )
