"""Second observer stage: 7-state continuous-time EKF with Riccati information dynamics.

State: 3 gyro-bias components plus a 4-component quaternion that carries no
norm constraint (normalization happens only in the output map). The gain is
S^{-1} H^T R^{-1} where S solves the information-form differential Riccati
equation driven by the process-diffusion structure g(x) = g1 + g2 + g3:
the gyro-noise channel through -M(q), an identity block that keeps
g Q g^T positive definite for every state, and a q-aligned column that keeps
it well conditioned near unit norm.

Both ODEs integrate with fixed-step RK4 at the IMU rate; the Riccati step
freezes the linearization state and the state step freezes (S, R, q1), so
each step solves a smooth frozen-coefficient ODE at full RK4 order. S is
symmetrized after every step and checked SPD.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import SpdViolationError, StepSizeError
from .geometry import (
    euler_from_quat,
    quat_normalize,
    quat_rate_jacobian,
    quat_rate_matrix,
)
from .noise import NoiseParams

H = np.hstack([np.zeros((4, 3)), np.eye(4)])

DEFAULT_LAMBDA = 1.0
DEFAULT_S0 = 1.0
DEFAULT_EPS_FACTOR = 1e-6
DEFAULT_BIAS_WALK_PSD = 5e-7


@dataclass
class ObserverState:
    """Bias estimate, unconstrained quaternion estimate, and information matrix."""

    b_g: np.ndarray
    q: np.ndarray
    S: np.ndarray

    def x(self) -> np.ndarray:
        return np.concatenate([self.b_g, self.q])


@dataclass
class EkfOutput:
    phi_hat: float
    q_hat_normalized: np.ndarray
    s_eig_min: float
    s_eig_max: float


@dataclass
class EkfTuning:
    """Weights of the Riccati equation; lam is the only hand-tuned scalar."""

    lam: float
    Q: np.ndarray              # 11x11 SPD process-noise weight
    epsilon: float
    beta_q: float

    @classmethod
    def from_gyro(
        cls,
        gyro: NoiseParams,
        lam: float = DEFAULT_LAMBDA,
        eps_factor: float = DEFAULT_EPS_FACTOR,
        bias_walk_psd: float = DEFAULT_BIAS_WALK_PSD,
        epsilon: float | None = None,
    ) -> "EkfTuning":
        Q, beta_q, eps = build_q(
            gyro, eps_factor=eps_factor, bias_walk_psd=bias_walk_psd, epsilon=epsilon
        )
        return cls(lam=lam, Q=Q, epsilon=eps, beta_q=beta_q)


def build_q(
    gyro: NoiseParams,
    eps_factor: float = DEFAULT_EPS_FACTOR,
    bias_walk_psd: float = DEFAULT_BIAS_WALK_PSD,
    epsilon: float | None = None,
) -> tuple[np.ndarray, float, float]:
    """Assemble the 11x11 block-diagonal process weight from the gyro noise model.

    Blocks: bias random walk (3), epsilon-identity (4), gyro white plus
    worst-case coloured-noise covariance (3), and the scalar beta_q^2 for the
    q-aligned diffusion column. The bias-walk block is floored at
    ``bias_walk_psd`` so Q stays SPD when the datasheet walk level is zero.
    """
    e_wb = max(gyro.walk**2, bias_walk_psd)
    e_wz = gyro.gm_drive_psd()
    e_zg = 0.4365**2 * gyro.tau_corr**2 * e_wz
    nu_block = float(np.mean(gyro.white_psd())) + e_zg
    beta_q = nu_block  # isotropic block: smallest and largest singular values agree
    if epsilon is None:
        epsilon = eps_factor * nu_block
    if epsilon <= 0.0 or nu_block <= 0.0:
        raise ValueError("process-noise blocks must be positive")
    Q = np.zeros((11, 11))
    Q[0:3, 0:3] = e_wb * np.eye(3)
    Q[3:7, 3:7] = epsilon * np.eye(4)
    Q[7:10, 7:10] = nu_block * np.eye(3)
    Q[10, 10] = beta_q**2
    return Q, beta_q, epsilon


def drift(x: np.ndarray, y_g: np.ndarray) -> np.ndarray:
    """State drift: constant bias, quaternion rate from the corrected gyro."""
    b_g, q = x[:3], x[3:]
    out = np.zeros(7)
    out[3:] = quat_rate_matrix(q) @ (np.asarray(y_g, dtype=float) - b_g)
    return out


def jacobian_a(x: np.ndarray, y_g: np.ndarray) -> np.ndarray:
    """7x7 Jacobian of the drift wrt the state."""
    b_g, q = x[:3], x[3:]
    A = np.zeros((7, 7))
    A[3:, :3] = -quat_rate_matrix(q)
    A[3:, 3:] = quat_rate_jacobian(np.asarray(y_g, dtype=float) - b_g)
    return A


def diffusion_g(x: np.ndarray) -> np.ndarray:
    """7x11 diffusion structure [I 0 0 0; 0 I -M(q) q]."""
    q = x[3:]
    G = np.zeros((7, 11))
    G[0:3, 0:3] = np.eye(3)
    G[3:7, 3:7] = np.eye(4)
    G[3:7, 7:10] = -quat_rate_matrix(q)
    G[3:7, 10] = q
    return G


def _rk4(f, y: np.ndarray, dt: float) -> np.ndarray:
    k1 = f(y)
    k2 = f(y + 0.5 * dt * k1)
    k3 = f(y + 0.5 * dt * k2)
    k4 = f(y + dt * k3)
    return y + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def riccati_step(
    S: np.ndarray,
    x: np.ndarray,
    y_g: np.ndarray,
    tuning: EkfTuning,
    r_t: np.ndarray | None,
    dt: float,
) -> np.ndarray:
    """One RK4 step of the information Riccati equation with frozen linearization.

    ``r_t=None`` integrates without the measurement term (coasting during
    GNSS outages). Raises StepSizeError if the step destroys positive
    definiteness; callers halve dt.
    """
    A = jacobian_a(x, y_g)
    G = diffusion_g(x)
    gqg = G @ tuning.Q @ G.T
    if r_t is None:
        ht_rinv_h = np.zeros((7, 7))
    else:
        ht_rinv_h = H.T @ np.linalg.solve(r_t, H)

    def rhs(s):
        return -s @ A - A.T @ s - tuning.lam * s @ gqg @ s + ht_rinv_h

    s_new = _rk4(rhs, S, dt)
    s_new = 0.5 * (s_new + s_new.T)
    if not np.isfinite(s_new).all():
        raise StepSizeError("Riccati step diverged")
    try:
        spd = np.linalg.eigvalsh(s_new)[0] > 0.0
    except np.linalg.LinAlgError:
        spd = False
    if not spd:
        raise StepSizeError("Riccati step lost positive definiteness")
    return s_new


def state_step(
    x: np.ndarray,
    S: np.ndarray,
    q1: np.ndarray | None,
    y_g: np.ndarray,
    r_t: np.ndarray | None,
    dt: float,
) -> np.ndarray:
    """One RK4 step of the state ODE with frozen gain ingredients (S, R, q1)."""
    if q1 is None:
        gain = None
    else:
        try:
            gain = np.linalg.solve(S, H.T @ np.linalg.solve(r_t, np.eye(4)))
        except np.linalg.LinAlgError as exc:
            raise SpdViolationError("information matrix not invertible") from exc

    def rhs(xx):
        dx = drift(xx, y_g)
        if gain is not None:
            dx = dx + gain @ (q1 - H @ xx)
        return dx

    return _rk4(rhs, x, dt)


def output(state: ObserverState) -> EkfOutput:
    """Roll estimate from the normalized quaternion, plus the S spectrum range."""
    q = state.q
    if np.linalg.norm(q) == 0.0:
        raise SpdViolationError("quaternion estimate collapsed to zero")
    eigs = np.linalg.eigvalsh(state.S)
    e = euler_from_quat(q)
    return EkfOutput(
        phi_hat=e.phi,
        q_hat_normalized=quat_normalize(q),
        s_eig_min=float(eigs[0]),
        s_eig_max=float(eigs[-1]),
    )


class RollObserver:
    """Run-level wrapper: initialization, stepping with dt-halving retries."""

    def __init__(self, tuning: EkfTuning, s0: float = DEFAULT_S0, max_halvings: int = 6):
        self.tuning = tuning
        self.s0 = s0
        self.max_halvings = max_halvings
        self.state: ObserverState | None = None

    @property
    def initialized(self) -> bool:
        return self.state is not None

    def initialize(self, q1: np.ndarray) -> None:
        self.state = ObserverState(
            b_g=np.zeros(3), q=np.asarray(q1, dtype=float).copy(), S=self.s0 * np.eye(7)
        )

    def step(
        self,
        y_g: np.ndarray,
        dt: float,
        q1: np.ndarray | None = None,
        r_t: np.ndarray | None = None,
    ) -> ObserverState:
        if self.state is None:
            raise SpdViolationError("observer not initialized")
        self.state = self._step_recursive(self.state, y_g, dt, q1, r_t, self.max_halvings)
        return self.state

    def _step_recursive(self, st, y_g, dt, q1, r_t, halvings_left) -> ObserverState:
        x = st.x()
        try:
            s_new = riccati_step(st.S, x, y_g, self.tuning, r_t, dt)
        except StepSizeError:
            if halvings_left == 0:
                raise SpdViolationError(
                    f"Riccati step failed SPD down to dt={dt:.2e}"
                ) from None
            half = self._step_recursive(st, y_g, dt / 2.0, q1, r_t, halvings_left - 1)
            return self._step_recursive(half, y_g, dt / 2.0, q1, r_t, halvings_left - 1)
        # the state gain uses the measurement-updated S so the correction rate
        # stays bounded by the information already absorbed (~1/dt at worst)
        x_new = state_step(x, s_new, q1, y_g, r_t, dt)
        if not np.isfinite(x_new).all():
            if halvings_left == 0:
                raise SpdViolationError(f"state step diverged at dt={dt:.2e}")
            half = self._step_recursive(st, y_g, dt / 2.0, q1, r_t, halvings_left - 1)
            return self._step_recursive(half, y_g, dt / 2.0, q1, r_t, halvings_left - 1)
        return ObserverState(b_g=x_new[:3], q=x_new[3:], S=s_new)

    def output(self) -> EkfOutput:
        if self.state is None:
            raise SpdViolationError("observer not initialized")
        return output(self.state)
