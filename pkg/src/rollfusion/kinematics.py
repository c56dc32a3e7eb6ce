"""Speed/grade/course kinematics and the coordinated-manoeuvre roll formulas.

The extended kinematic state bundles the inertial speed magnitude, grade
angle, continuous course angle and their time derivatives. Its defining map
to inertial velocity is

    v = v_mag * (cos(chi) cos(gamma), sin(chi) cos(gamma), -sin(gamma))

which is bijective (given a course winding count) whenever the horizontal
speed stays above a floor. The roll formulas assume the coordinated-manoeuvre
condition: body-frame velocity purely longitudinal. Under that condition
``phi_av`` recovers the roll angle exactly from the specific force and the
extended kinematic state; ``phi_v``/``phi_a`` are its flat-turn split into
the equilibrium turn angle and the rider-offset correction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import CoordinationError, DegenerateCourseError
from .geometry import EulerAngles

DEFAULT_GRAVITY = 9.80665
DEFAULT_SPEED_FLOOR = 1.0       # m/s, horizontal-speed floor for course operations
DEFAULT_COORDINATION_FLOOR = 0.5  # m^2/s^4 floor on the phi_av denominator


def gravity_vector(g_mag: float = DEFAULT_GRAVITY) -> np.ndarray:
    """Inertial gravity vector: z up, gravity pulls toward -z."""
    return np.array([0.0, 0.0, -float(g_mag)])


@dataclass
class GravityModel:
    g_mag: float = DEFAULT_GRAVITY

    @property
    def g_vec(self) -> np.ndarray:
        return gravity_vector(self.g_mag)


@dataclass
class LapCounters:
    """Course-seam crossing counters keeping the course angle continuous."""

    n_plus: int = 0
    n_minus: int = 0

    @property
    def winding(self) -> int:
        return self.n_plus - self.n_minus


@dataclass
class KinematicStateExtended:
    """Speed magnitude, grade, course and their time derivatives."""

    v_mag: float
    gamma: float
    chi: float
    v_mag_dot: float = 0.0
    gamma_dot: float = 0.0
    chi_dot: float = 0.0

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.v_mag, self.gamma, self.chi, self.v_mag_dot, self.gamma_dot, self.chi_dot]
        )

    @classmethod
    def from_array(cls, arr) -> "KinematicStateExtended":
        a = np.asarray(arr, dtype=float)
        return cls(*(float(x) for x in a))


@dataclass
class InertialVelocityExtended:
    """Inertial velocity and acceleration vectors."""

    v: np.ndarray
    v_dot: np.ndarray

    def as_array(self) -> np.ndarray:
        return np.concatenate([self.v, self.v_dot])


def velocity_from_aero(xi: KinematicStateExtended | np.ndarray) -> np.ndarray:
    """Inertial velocity vector of an extended kinematic state (speed/grade/course only)."""
    if isinstance(xi, KinematicStateExtended):
        v_mag, gamma, chi = xi.v_mag, xi.gamma, xi.chi
    else:
        v_mag, gamma, chi = (float(x) for x in np.asarray(xi, dtype=float)[:3])
    cg = math.cos(gamma)
    return v_mag * np.array([math.cos(chi) * cg, math.sin(chi) * cg, -math.sin(gamma)])


def velocity_jacobian(v_mag: float, gamma: float, chi: float) -> np.ndarray:
    """3x3 Jacobian of velocity_from_aero wrt (v_mag, gamma, chi)."""
    cg, sg = math.cos(gamma), math.sin(gamma)
    cc, sc = math.cos(chi), math.sin(chi)
    return np.array(
        [
            [cc * cg, -v_mag * cc * sg, -v_mag * sc * cg],
            [sc * cg, -v_mag * sc * sg, v_mag * cc * cg],
            [-sg, -v_mag * cg, 0.0],
        ]
    )


def velocity_hessian(v_mag: float, gamma: float, chi: float) -> np.ndarray:
    """Second derivatives H[i, j, l] = d2 v_i / (dxi_j dxi_l) of velocity_from_aero."""
    cg, sg = math.cos(gamma), math.sin(gamma)
    cc, sc = math.cos(chi), math.sin(chi)
    H = np.zeros((3, 3, 3))
    # d/dv_mag rows are the first derivatives of the unit direction
    H[0, 0, 1] = H[0, 1, 0] = -cc * sg
    H[0, 0, 2] = H[0, 2, 0] = -sc * cg
    H[1, 0, 1] = H[1, 1, 0] = -sc * sg
    H[1, 0, 2] = H[1, 2, 0] = cc * cg
    H[2, 0, 1] = H[2, 1, 0] = -cg
    # pure second derivatives in (gamma, chi)
    H[0, 1, 1] = -v_mag * cc * cg
    H[0, 1, 2] = H[0, 2, 1] = v_mag * sc * sg
    H[0, 2, 2] = -v_mag * cc * cg
    H[1, 1, 1] = -v_mag * sc * cg
    H[1, 1, 2] = H[1, 2, 1] = -v_mag * cc * sg
    H[1, 2, 2] = -v_mag * sc * cg
    H[2, 1, 1] = v_mag * sg
    return H


def course_continuous(v: np.ndarray, laps: LapCounters) -> float:
    """Continuous (unwrapped) course angle: atan2 plus the 2*pi winding count."""
    v = np.asarray(v, dtype=float)
    if math.hypot(v[0], v[1]) == 0.0:
        raise DegenerateCourseError("zero horizontal speed: course undefined")
    return math.atan2(v[1], v[0]) + 2.0 * math.pi * laps.winding


def aero_from_velocity(
    ve: InertialVelocityExtended,
    laps: LapCounters,
    v_floor: float = DEFAULT_SPEED_FLOOR,
) -> KinematicStateExtended:
    """Invert the velocity map (with derivatives) into an extended kinematic state.

    Raises DegenerateCourseError when the horizontal speed is at or below
    ``v_floor``; callers hold their last estimate in that case.
    """
    v = np.asarray(ve.v, dtype=float)
    v_dot = np.asarray(ve.v_dot, dtype=float)
    if math.hypot(v[0], v[1]) <= v_floor:
        raise DegenerateCourseError(
            f"horizontal speed {math.hypot(v[0], v[1]):.3f} m/s at or below floor {v_floor}"
        )
    v_mag = float(np.linalg.norm(v))
    gamma = -math.asin(v[2] / v_mag)
    chi = course_continuous(v, laps)
    xi_dot = np.linalg.solve(velocity_jacobian(v_mag, gamma, chi), v_dot)
    return KinematicStateExtended(v_mag, gamma, chi, *(float(x) for x in xi_dot))


def aero_jacobian(xi: KinematicStateExtended) -> np.ndarray:
    """6x6 Jacobian of aero_from_velocity wrt (v, v_dot), evaluated at the state xi.

    Uses the inverse-function theorem on the forward map
    (v, v_dot) = (h(xi), J_h(xi) xi_dot), which is block lower-triangular.
    """
    J = velocity_jacobian(xi.v_mag, xi.gamma, xi.chi)
    H = velocity_hessian(xi.v_mag, xi.gamma, xi.chi)
    xi_dot = np.array([xi.v_mag_dot, xi.gamma_dot, xi.chi_dot])
    K = np.einsum("ijl,j->il", H, xi_dot)  # d(J_h xi_dot)/dxi
    Jinv = np.linalg.inv(J)
    out = np.zeros((6, 6))
    out[:3, :3] = Jinv
    out[3:, :3] = -Jinv @ K @ Jinv
    out[3:, 3:] = Jinv
    return out


def _phi_av_terms(a, xi_e: KinematicStateExtended, g_mag: float):
    a = np.asarray(a, dtype=float)
    cg = math.cos(xi_e.gamma)
    p = g_mag * cg - xi_e.v_mag * xi_e.gamma_dot
    r = xi_e.v_mag * xi_e.chi_dot * cg
    num = p * a[1] - r * a[2]
    den = p * a[2] + r * a[1]
    return num, den


def phi_av(
    a,
    xi_e: KinematicStateExtended,
    g_mag: float = DEFAULT_GRAVITY,
    a_floor: float = DEFAULT_COORDINATION_FLOOR,
    last_valid: float | None = None,
) -> float:
    """Roll angle from specific force and kinematics, exact on coordinated manoeuvres.

    The denominator must exceed ``a_floor`` (non-ballistic manoeuvre floor);
    otherwise a CoordinationError carrying ``last_valid`` is raised.
    """
    num, den = _phi_av_terms(a, xi_e, g_mag)
    if den <= a_floor:
        raise CoordinationError(
            f"manoeuvre denominator {den:.3g} at or below floor {a_floor}", last_valid
        )
    return math.atan(num / den)


def phi_av_gradient(a, xi_e: KinematicStateExtended, g_mag: float = DEFAULT_GRAVITY) -> np.ndarray:
    """Gradient of phi_av wrt the 10-vector (a, xi_e, g_mag)."""
    a = np.asarray(a, dtype=float)
    vm, gamma = xi_e.v_mag, xi_e.gamma
    gd, cd = xi_e.gamma_dot, xi_e.chi_dot
    cg, sg = math.cos(gamma), math.sin(gamma)
    p = g_mag * cg - vm * gd
    r = vm * cd * cg
    num = p * a[1] - r * a[2]
    den = p * a[2] + r * a[1]

    # (num, den) partials wrt (ax, ay, az, v, gamma, chi, vdot, gammadot, chidot, g)
    dnum = np.array(
        [0.0, p, -r,
         -gd * a[1] - cd * cg * a[2],
         -g_mag * sg * a[1] + vm * cd * sg * a[2],
         0.0, 0.0,
         -vm * a[1],
         -vm * cg * a[2],
         cg * a[1]]
    )
    dden = np.array(
        [0.0, r, p,
         -gd * a[2] + cd * cg * a[1],
         -g_mag * sg * a[2] - vm * cd * sg * a[1],
         0.0, 0.0,
         -vm * a[2],
         vm * cg * a[1],
         cg * a[2]]
    )
    return (den * dnum - num * dden) / (num * num + den * den)


def phi_v(xi_e: KinematicStateExtended, g_mag: float = DEFAULT_GRAVITY) -> float:
    """Equilibrium roll of a flat-coordinated turn, -atan(V chi_dot / g)."""
    v_horiz = xi_e.v_mag * math.cos(xi_e.gamma)
    return -math.atan(v_horiz * xi_e.chi_dot / g_mag)


def phi_a(a) -> float:
    """Rider-offset roll correction from body specific force, atan(a_y / a_z)."""
    a = np.asarray(a, dtype=float)
    if a[2] == 0.0:
        raise CoordinationError("a_z = 0: rider-offset angle undefined")
    return math.atan(a[1] / a[2])


def f_theta(
    a,
    xi_e: KinematicStateExtended,
    g_mag: float = DEFAULT_GRAVITY,
    a_floor: float = DEFAULT_COORDINATION_FLOOR,
    last_valid: float | None = None,
) -> EulerAngles:
    """Attitude triple (phi_av, grade, course) of a coordinated manoeuvre."""
    roll = phi_av(a, xi_e, g_mag, a_floor=a_floor, last_valid=last_valid)
    return EulerAngles(roll, xi_e.gamma, xi_e.chi)


def f_theta_jacobian(a, xi_e: KinematicStateExtended, g_mag: float = DEFAULT_GRAVITY) -> np.ndarray:
    """3x10 Jacobian of f_theta wrt (a, xi_e, g_mag)."""
    J = np.zeros((3, 10))
    J[0] = phi_av_gradient(a, xi_e, g_mag)
    J[1, 4] = 1.0  # grade is the gamma component of xi_e
    J[2, 5] = 1.0  # course is the chi component
    return J
