"""First observer stage: GNSS reconstructor, continuous course, attitude quaternion.

A sliding window of the ``n`` most recent GNSS velocity samples is fit with a
weighted least-squares quadratic (one polynomial per axis). The fit is
extrapolated over the next GNSS period to preview inertial velocity and
acceleration at IMU rate. Course-seam crossings are found analytically from
the fitted polynomial and drive two lap counters that keep the course angle
continuous through the +/-pi seam. Combining the reconstructed kinematics
with the accelerometer through the coordinated-manoeuvre roll formula yields
the measurement quaternion consumed by the EKF, together with its
covariance R(t) built from the GNSS->velocity->kinematics->attitude chain.
"""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import (
    CoordinationError,
    DegenerateCourseError,
    IllConditionedError,
    InsufficientDataError,
    SpdViolationError,
)
from .geometry import EulerAngles, quat_from_euler, quat_rate_matrix
from .kinematics import (
    DEFAULT_COORDINATION_FLOOR,
    DEFAULT_GRAVITY,
    DEFAULT_SPEED_FLOOR,
    InertialVelocityExtended,
    KinematicStateExtended,
    LapCounters,
    aero_from_velocity,
    aero_jacobian,
    f_theta_jacobian,
    phi_av,
)

TWO_PI = 2.0 * math.pi


# ---------------------------------------------------------------------------
# least-squares design and fit
# ---------------------------------------------------------------------------

@dataclass
class LsqDesign:
    """Precomputed design/gain pair for the sliding-window quadratic fit."""

    n: int
    tau: float
    r_nu_s: np.ndarray   # 3x3 SPD GNSS velocity noise covariance
    C: np.ndarray        # (3n)x9
    Ks: np.ndarray       # 9x(3n), left inverse of C


@dataclass
class PolyCoeffs:
    """Per-axis quadratic coefficients anchored at epoch ``k`` (time k*tau)."""

    c2: np.ndarray
    c1: np.ndarray
    c0: np.ndarray
    epoch: int

    @classmethod
    def from_vector(cls, zeta: np.ndarray, epoch: int) -> "PolyCoeffs":
        zeta = np.asarray(zeta, dtype=float)
        return cls(zeta[0:3].copy(), zeta[3:6].copy(), zeta[6:9].copy(), epoch)


def build_design(n: int, tau: float, r_nu_s: np.ndarray) -> LsqDesign:
    """Assemble the window design matrix and its weighted left inverse.

    Sample j of the window sits at polynomial time -j*tau (newest first), so
    row j of the scalar design is [j^2 tau^2, -j tau, 1].
    """
    if n < 3:
        raise InsufficientDataError(f"window length {n} < 3: quadratic fit underdetermined")
    if tau <= 0.0:
        raise IllConditionedError("GNSS period must be positive")
    r_nu_s = np.asarray(r_nu_s, dtype=float)
    base = np.array([[(j * tau) ** 2, -j * tau, 1.0] for j in range(n)])
    C = np.kron(base, np.eye(3))
    try:
        w = np.kron(np.eye(n), np.linalg.inv(r_nu_s))
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError("GNSS noise covariance is singular") from exc
    normal = C.T @ w @ C
    try:
        Ks = np.linalg.solve(normal, C.T @ w)
    except np.linalg.LinAlgError as exc:
        raise IllConditionedError("singular normal matrix in GNSS fit design") from exc
    if not np.allclose(Ks @ C, np.eye(9), atol=1e-10):
        raise IllConditionedError("design gain failed the left-inverse identity")
    return LsqDesign(n=n, tau=tau, r_nu_s=r_nu_s, C=C, Ks=Ks)


class GnssWindow:
    """Ring buffer of the n most recent GNSS samples on a consecutive epoch grid.

    A gap in the epoch sequence invalidates the stored samples (the design
    matrix assumes n consecutive tau-spaced samples), so the buffer restarts.
    """

    def __init__(self, n: int, tau: float):
        self.n = n
        self.tau = tau
        self._epochs: deque[int] = deque(maxlen=n)
        self._samples: deque[np.ndarray] = deque(maxlen=n)

    def __len__(self) -> int:
        return len(self._samples)

    @property
    def full(self) -> bool:
        return len(self._samples) == self.n

    @property
    def latest_epoch(self) -> int | None:
        return self._epochs[-1] if self._epochs else None

    def push(self, epoch: int, y_s: np.ndarray) -> None:
        if self._epochs:
            if epoch <= self._epochs[-1]:
                raise ValueError(f"epoch {epoch} not increasing past {self._epochs[-1]}")
            if epoch != self._epochs[-1] + 1:
                self.clear()
        self._epochs.append(int(epoch))
        self._samples.append(np.asarray(y_s, dtype=float).copy())

    def clear(self) -> None:
        self._epochs.clear()
        self._samples.clear()

    def stacked(self) -> np.ndarray:
        """Measurement vector, newest sample first."""
        return np.concatenate(list(self._samples)[::-1])


def fit(window: GnssWindow, design: LsqDesign) -> PolyCoeffs:
    """Weighted least-squares fit of the current window."""
    if not window.full:
        raise InsufficientDataError(f"window holds {len(window)}/{design.n} samples")
    zeta = design.Ks @ window.stacked()
    return PolyCoeffs.from_vector(zeta, window.latest_epoch)


def evaluate(coeffs: PolyCoeffs, t: float, tau: float) -> tuple[InertialVelocityExtended, bool]:
    """Polynomial velocity/acceleration at absolute time t.

    Returns the evaluation together with an in-window flag; evaluating
    outside [k*tau, (k+1)*tau) is allowed (held coefficients after a GNSS
    dropout) but flagged stale.
    """
    tt = t - coeffs.epoch * tau
    v = coeffs.c2 * tt * tt + coeffs.c1 * tt + coeffs.c0
    v_dot = 2.0 * coeffs.c2 * tt + coeffs.c1
    return InertialVelocityExtended(v, v_dot), 0.0 <= tt < tau


# ---------------------------------------------------------------------------
# course-seam crossings and lap counters
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Crossing:
    """A predicted course-seam crossing: absolute time and direction (+1/-1)."""

    t: float
    direction: int


def _quadratic_roots(a2: float, a1: float, a0: float) -> list[float]:
    """Real roots of a2 x^2 + a1 x + a0, numerically stable, tangential roots dropped."""
    if a2 == 0.0:
        if a1 == 0.0:
            return []
        return [-a0 / a1]
    disc = a1 * a1 - 4.0 * a2 * a0
    if disc <= 0.0:
        return []  # double roots are tangential: treated as non-crossings
    sq = math.sqrt(disc)
    q = -0.5 * (a1 + math.copysign(sq, a1)) if a1 != 0.0 else 0.5 * sq
    roots = [q / a2]
    if q != 0.0:
        roots.append(a0 / q)
    return roots


def detect_crossings(coeffs: PolyCoeffs, tau: float) -> list[Crossing]:
    """Seam crossings of the fitted velocity within the extrapolation window.

    A crossing needs the fitted v_y to cross zero while v_x < 0; the sign of
    the fitted v_y rate gives the direction (+: decreasing through zero).
    """
    out = []
    for tt in _quadratic_roots(coeffs.c2[1], coeffs.c1[1], coeffs.c0[1]):
        if not 0.0 <= tt < tau:
            continue
        vy_dot = 2.0 * coeffs.c2[1] * tt + coeffs.c1[1]
        if vy_dot == 0.0:
            continue  # tangential
        vx = coeffs.c2[0] * tt * tt + coeffs.c1[0] * tt + coeffs.c0[0]
        if vx >= 0.0:
            continue
        out.append(Crossing(t=coeffs.epoch * tau + tt, direction=+1 if vy_dot < 0.0 else -1))
    out.sort(key=lambda c: c.t)
    return out


def update_lap_counters(
    laps: LapCounters,
    crossings: list[Crossing],
    last_counted: float | None,
    refractory: float = 1.0,
) -> tuple[LapCounters, float | None]:
    """Apply crossings to the counters with a refractory debounce.

    Crossings closer than ``refractory`` seconds to the previously counted
    one are duplicates from overlapping extrapolation windows and are dropped.
    """
    n_plus, n_minus = laps.n_plus, laps.n_minus
    for c in sorted(crossings, key=lambda c: c.t):
        if last_counted is not None and c.t - last_counted < refractory:
            continue
        if c.direction > 0:
            n_plus += 1
        else:
            n_minus += 1
        last_counted = c.t
    return LapCounters(n_plus, n_minus), last_counted


# ---------------------------------------------------------------------------
# covariance chain
# ---------------------------------------------------------------------------

def phi_matrix(t_offset: float) -> np.ndarray:
    """6x9 evaluation matrix mapping stacked coefficients to (v, v_dot)."""
    tt = float(t_offset)
    base = np.array([[tt * tt, tt, 1.0], [2.0 * tt, 1.0, 0.0]])
    return np.kron(base, np.eye(3))


def covariance_rv(design: LsqDesign, t_offset: float) -> np.ndarray:
    """Covariance of the reconstructed (v, v_dot) at an offset into the window."""
    phi = phi_matrix(t_offset)
    w = np.kron(np.eye(design.n), design.r_nu_s)
    core = design.Ks @ w @ design.Ks.T
    rv = phi @ core @ phi.T
    return 0.5 * (rv + rv.T)


def covariance_rv_bar(design: LsqDesign) -> np.ndarray:
    """Worst-case (end-of-window) reconstruction covariance."""
    return covariance_rv(design, design.tau)


def covariance_rtheta(
    r_v: np.ndarray,
    y_a: np.ndarray,
    xi_e_hat: KinematicStateExtended,
    r_nu_a: np.ndarray,
    g_hat: float = DEFAULT_GRAVITY,
) -> np.ndarray:
    """Covariance of the attitude triple through the Jacobian chain.

    Propagates the reconstruction covariance through the velocity->kinematics
    inverse map, then stacks it with the accelerometer noise (gravity is
    treated as exact) through the attitude-map Jacobian.
    """
    j_xe = aero_jacobian(xi_e_hat)
    r_xe = j_xe @ np.asarray(r_v, dtype=float) @ j_xe.T
    j_th = f_theta_jacobian(y_a, xi_e_hat, g_hat)
    blk = np.zeros((10, 10))
    blk[0:3, 0:3] = np.asarray(r_nu_a, dtype=float)
    blk[3:9, 3:9] = r_xe
    r_theta = j_th @ blk @ j_th.T
    return 0.5 * (r_theta + r_theta.T)


def beta_from_spread(mat: np.ndarray) -> float:
    """Average of the smallest and largest singular values of a symmetric matrix."""
    sv = np.abs(np.linalg.eigvalsh(np.asarray(mat, dtype=float)))
    return 0.5 * float(sv.min() + sv.max())


def covariance_r(q1: np.ndarray, r_theta_bar: np.ndarray, beta_r: float | None = None) -> np.ndarray:
    """Quaternion-level measurement covariance, regularized along q1.

    The attitude covariance mapped through the quaternion rate matrix is
    rank-deficient along q1 (unit-norm constraint); the beta term restores
    full rank. beta defaults to the mean of the extreme singular values of
    the attitude covariance.
    """
    q1 = np.asarray(q1, dtype=float)
    if beta_r is None:
        beta_r = beta_from_spread(r_theta_bar)
    m = quat_rate_matrix(q1)
    r = beta_r * beta_r * np.outer(q1, q1) + m @ np.asarray(r_theta_bar, dtype=float) @ m.T
    return 0.5 * (r + r.T)


def is_spd(mat: np.ndarray, tol: float = 0.0) -> bool:
    mat = np.asarray(mat, dtype=float)
    if not np.allclose(mat, mat.T, atol=1e-12 * max(1.0, float(np.abs(mat).max()))):
        return False
    return bool(np.linalg.eigvalsh(mat).min() > tol)


# ---------------------------------------------------------------------------
# stateful pre-filter pipeline
# ---------------------------------------------------------------------------

@dataclass
class PrefilterConfig:
    n: int = 5
    tau: float = 0.1
    r_nu_s: np.ndarray = field(default_factory=lambda: np.diag([1.1e-2**2, 1.1e-2**2, 1.0e-1**2]))
    r_nu_a: np.ndarray = field(default_factory=lambda: (3.3e-3 / math.sqrt(1.0e-2)) ** 2 * np.eye(3))
    g_hat: float = DEFAULT_GRAVITY
    v_floor: float = DEFAULT_SPEED_FLOOR
    a_floor: float = DEFAULT_COORDINATION_FLOOR
    refractory: float = 1.0
    max_staleness: int = 10
    force_flat: bool = False      # pin grade and grade rate to zero (no vertical GNSS)
    r_floor: float = 1e-12        # SPD floor added to R(t) for zero-noise configurations


@dataclass
class PrefilterOutput:
    t: float
    q1: np.ndarray
    xi_e_hat: KinematicStateExtended
    r_t: np.ndarray
    staleness: int
    phi_av: float
    held: bool = False  # hold-last semantics were applied this step


class PreFilter:
    """Single-writer stateful pipeline from raw GNSS/accelerometer to (q1, R).

    One instance per run; feed GNSS epochs via :meth:`on_gnss` /
    :meth:`on_gnss_missing` and poll at IMU rate via :meth:`step`.
    """

    def __init__(self, config: PrefilterConfig | None = None):
        self.config = config or PrefilterConfig()
        cfg = self.config
        self.design = build_design(cfg.n, cfg.tau, cfg.r_nu_s)
        self.window = GnssWindow(cfg.n, cfg.tau)
        self.laps = LapCounters()
        self.coeffs: PolyCoeffs | None = None
        self.staleness = 0
        self._pending: list[Crossing] = []
        self._last_counted: float | None = None
        self._r_v_bar = covariance_rv_bar(self.design)
        self._chi_prev: float | None = None
        self._last_phi: float | None = None
        self._last_output: PrefilterOutput | None = None

    # -- GNSS epoch events ---------------------------------------------------

    def on_gnss(self, epoch: int, y_s: np.ndarray) -> None:
        """Ingest the GNSS sample of epoch k (time k*tau)."""
        self._apply_crossings_up_to(epoch * self.config.tau)
        self.window.push(epoch, y_s)
        if self.window.full:
            self.coeffs = fit(self.window, self.design)
            self.staleness = 0
            self._pending = detect_crossings(self.coeffs, self.config.tau)
        # while refilling after a gap the held coefficients keep the staleness
        # accumulated by the gap itself

    def on_gnss_missing(self, epoch: int) -> None:
        """Note a missed GNSS epoch: hold coefficients, grow staleness."""
        self._apply_crossings_up_to(epoch * self.config.tau)
        self.window.clear()
        self.staleness += 1

    @property
    def available(self) -> bool:
        return self.coeffs is not None and self.staleness <= self.config.max_staleness

    # -- IMU-rate step ---------------------------------------------------------

    def step(self, t: float, y_a: np.ndarray) -> PrefilterOutput | None:
        """Produce the attitude quaternion and its covariance at time t.

        Returns None while warming up or after too many missed GNSS epochs
        (the caller's filter then coasts on gyro propagation alone).
        """
        if not self.available:
            return None
        cfg = self.config
        self._apply_crossings_up_to(t)
        ve, _ = evaluate(self.coeffs, t, cfg.tau)

        try:
            xi = aero_from_velocity(ve, self.laps, cfg.v_floor)
        except DegenerateCourseError:
            return self._hold_last(t)
        if cfg.force_flat:
            xi = replace(xi, gamma=0.0, gamma_dot=0.0)

        xi = self._guard_course_continuity(xi)

        try:
            roll = phi_av(y_a, xi, cfg.g_hat, a_floor=cfg.a_floor, last_valid=self._last_phi)
            held = False
        except CoordinationError as err:
            if err.last_valid is None:
                return self._hold_last(t)
            roll = err.last_valid
            held = True

        q1 = quat_from_euler(EulerAngles(roll, xi.gamma, xi.chi))
        r_theta_bar = covariance_rtheta(self._r_v_bar, y_a, xi, cfg.r_nu_a, cfg.g_hat)
        r_t = covariance_r(q1, r_theta_bar)
        r_t = r_t * (1 + self.staleness) ** 2 + cfg.r_floor * np.eye(4)
        if not is_spd(r_t):
            raise SpdViolationError("pre-filter emitted a non-SPD measurement covariance")

        self._chi_prev = xi.chi
        self._last_phi = roll
        out = PrefilterOutput(
            t=t, q1=q1, xi_e_hat=xi, r_t=r_t, staleness=self.staleness, phi_av=roll, held=held
        )
        self._last_output = out
        return out

    # -- internals -------------------------------------------------------------

    def _hold_last(self, t: float) -> PrefilterOutput | None:
        if self._last_output is None:
            return None
        return replace(self._last_output, t=t, held=True)

    def _apply_crossings_up_to(self, t: float) -> None:
        due = [c for c in self._pending if c.t <= t]
        if due:
            self._pending = [c for c in self._pending if c.t > t]
            self.laps, self._last_counted = update_lap_counters(
                self.laps, due, self._last_counted, self.config.refractory
            )

    def _guard_course_continuity(self, xi: KinematicStateExtended) -> KinematicStateExtended:
        """Backstop for Lemma-2 continuity: undo any 2*pi winding mismatch.

        A course jump larger than pi between IMU samples is physically
        impossible, so it can only be a missed or double-counted seam
        crossing; correct the counters by the corresponding winding.
        """
        if self._chi_prev is None:
            return xi
        delta = xi.chi - self._chi_prev
        if abs(delta) <= math.pi:
            return xi
        k = round(delta / TWO_PI)
        if k > 0:
            self.laps = LapCounters(self.laps.n_plus, self.laps.n_minus + k)
        else:
            self.laps = LapCounters(self.laps.n_plus - k, self.laps.n_minus)
        return replace(xi, chi=xi.chi - TWO_PI * k)
