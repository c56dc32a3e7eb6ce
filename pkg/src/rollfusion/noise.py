"""Stochastic sensor-error synthesis and measurement-stream corruption.

Each sensor error is the output of a per-axis linear system with two states:
a random-walk bias (driven at PSD ``walk^2``) and a first-order coloured
noise of time constant ``tau_corr`` whose drive level is derived from the
bias-instability figure, plus an additive white component. The continuous
model is discretized exactly (closed-form zero-order-hold transition and
discrete noise covariance for the diagonal per-axis system), so changing the
sample period introduces no artefacts.

White-noise semantics differ per sensor family and are controlled by
``white_is_density``: for IMU channels ``white`` is a noise density and the
per-sample std is ``white / sqrt(ts)`` (this is what puts the Allan
deviation's white slope at ``white / sqrt(tau)``); for GNSS ``white`` is the
User Range Rate Error, a per-sample std used directly (and squared into the
reconstructor's weighting matrix).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import ConfigError

# PSD factor mapping a bias-instability level B and correlation time tau to
# the drive of the first-order coloured state: psd = GM_DRIVE_COEFF * B^2 / tau^2,
# which puts the coloured state's stationary variance at (2 log 2 / pi) B^2.
GM_DRIVE_COEFF = 2.0 * math.log(2.0) / (math.pi * 0.4365**2)


@dataclass
class NoiseParams:
    """Noise model of one triaxial sensor."""

    white: float | np.ndarray   # N: density (IMU) or per-sample std (GNSS), per axis
    bias_instability: float     # B
    tau_corr: float             # correlation time of the coloured state (s)
    walk: float                 # K: random-walk drive level
    sigma0: float               # std of the initial coloured state
    ts: float                   # sample period (s)
    white_is_density: bool = True

    def white_vector(self) -> np.ndarray:
        w = np.asarray(self.white, dtype=float)
        return np.broadcast_to(w, (3,)).astype(float)

    def white_sample_std(self) -> np.ndarray:
        """Per-axis std of one white-noise sample."""
        w = self.white_vector()
        return w / math.sqrt(self.ts) if self.white_is_density else w

    def white_psd(self) -> np.ndarray:
        """Per-axis PSD of the white component."""
        w = self.white_vector()
        return w**2 if self.white_is_density else w**2 * self.ts

    def gm_drive_psd(self) -> float:
        """PSD of the coloured-state drive derived from the bias instability."""
        if self.tau_corr <= 0.0:
            return 0.0
        return GM_DRIVE_COEFF * self.bias_instability**2 / self.tau_corr**2


TABLE_I_GYRO = NoiseParams(
    white=8.5e-3, bias_instability=3.3e-3, tau_corr=20.0, walk=0.0, sigma0=5.0e-2, ts=1.0e-2
)
TABLE_I_ACCEL = NoiseParams(
    white=3.3e-3, bias_instability=2.0e-4, tau_corr=30.0, walk=3.3e-3, sigma0=1.0e-1, ts=1.0e-2
)
TABLE_I_GNSS = NoiseParams(
    white=np.array([1.1e-2, 1.1e-2, 1.0e-1]),
    bias_instability=0.0,
    tau_corr=0.0,
    walk=0.0,
    sigma0=0.0,
    ts=1.0e-1,
    white_is_density=False,
)


def gnss_r_from_params(params: NoiseParams) -> np.ndarray:
    """GNSS velocity covariance for the reconstructor weights, diag(N^2)."""
    std = params.white_sample_std()
    return np.diag(std**2)


@dataclass
class SensorErrorState:
    """Bias states of one sensor: random-walk part and coloured part."""

    b_bar: np.ndarray = field(default_factory=lambda: np.zeros(3))
    z: np.ndarray = field(default_factory=lambda: np.zeros(3))


def init_error_state(params: NoiseParams, rng: np.random.Generator) -> SensorErrorState:
    z0 = rng.normal(0.0, params.sigma0, 3) if params.sigma0 > 0.0 else np.zeros(3)
    return SensorErrorState(b_bar=np.zeros(3), z=z0)


def _gm_discrete(params: NoiseParams, dt: float) -> tuple[float, float]:
    """Exact ZOH transition and noise std of the coloured state over dt."""
    if params.tau_corr <= 0.0:
        return 0.0, 0.0
    a = math.exp(-dt / params.tau_corr)
    psd = params.gm_drive_psd()
    var = psd * params.tau_corr / 2.0 * (1.0 - a * a)
    return a, math.sqrt(var)


def step_error(
    state: SensorErrorState, params: NoiseParams, dt: float, rng: np.random.Generator
) -> tuple[SensorErrorState, np.ndarray]:
    """Propagate the bias states over dt and emit the error sample at the new time."""
    b_bar = state.b_bar + rng.normal(0.0, params.walk * math.sqrt(dt), 3)
    a, sz = _gm_discrete(params, dt)
    z = a * state.z + (rng.normal(0.0, sz, 3) if sz > 0.0 else 0.0)
    new = SensorErrorState(b_bar=b_bar, z=z)
    nu = b_bar + z + rng.normal(0.0, 1.0, 3) * params.white_sample_std()
    return new, nu


def error_series(
    params: NoiseParams,
    n: int,
    rng: np.random.Generator,
    dt: float | None = None,
    bias_init: np.ndarray | None = None,
) -> np.ndarray:
    """(n, 3) error samples on a uniform grid, sample 0 at the initial state."""
    dt = params.ts if dt is None else dt
    state = init_error_state(params, rng)
    if bias_init is not None:
        state.b_bar = np.asarray(bias_init, dtype=float).copy()
    a, sz = _gm_discrete(params, dt)
    walk_std = params.walk * math.sqrt(dt)
    white_std = params.white_sample_std()

    b = np.empty((n, 3))
    z = np.empty((n, 3))
    b[0] = state.b_bar
    z[0] = state.z
    wb = rng.normal(0.0, 1.0, (n - 1, 3)) * walk_std if n > 1 else np.zeros((0, 3))
    wz = rng.normal(0.0, 1.0, (n - 1, 3)) * sz if n > 1 else np.zeros((0, 3))
    for k in range(1, n):
        b[k] = b[k - 1] + wb[k - 1]
        z[k] = a * z[k - 1] + wz[k - 1]
    white = rng.normal(0.0, 1.0, (n, 3)) * white_std
    return b + z + white


@dataclass
class SensorStream:
    """Timestamped corrupted measurements with their generating noise models."""

    t: np.ndarray
    y_a: np.ndarray                 # (n, 3) accelerometer
    y_g: np.ndarray                 # (n, 3) gyroscope
    y_s: np.ndarray                 # (n, 3) GNSS velocity, NaN rows between epochs
    gnss_present: np.ndarray        # (n,) bool
    gyro_params: NoiseParams | None = None
    accel_params: NoiseParams | None = None
    gnss_params: NoiseParams | None = None

    def __len__(self) -> int:
        return len(self.t)


def corrupt(
    truth,
    gyro: NoiseParams = TABLE_I_GYRO,
    accel: NoiseParams = TABLE_I_ACCEL,
    gnss: NoiseParams = TABLE_I_GNSS,
    seed: int = 0,
    gyro_bias_init: np.ndarray | None = None,
) -> SensorStream:
    """Corrupt a TrajectoryTruth into a measurement stream, deterministic per seed.

    GNSS samples are emitted every tau/Ts-th frame (the ratio must be an
    integer). ``gyro_bias_init`` seeds the gyroscope's random-walk bias state
    with a constant offset (bias-recovery experiments).
    """
    dt = truth.dt
    ratio = gnss.ts / dt
    if abs(ratio - round(ratio)) > 1e-9:
        raise ConfigError(f"GNSS period {gnss.ts} is not an integer multiple of IMU period {dt}")
    ratio = int(round(ratio))

    n = len(truth.t)
    rng_g, rng_a, rng_s = (
        np.random.default_rng(s) for s in np.random.SeedSequence(seed).spawn(3)
    )
    nu_g = error_series(gyro, n, rng_g, dt=dt, bias_init=gyro_bias_init)
    nu_a = error_series(accel, n, rng_a, dt=dt)

    y_g = truth.omega + nu_g
    y_a = truth.a_body + nu_a

    present = np.zeros(n, dtype=bool)
    present[::ratio] = True
    y_s = np.full((n, 3), np.nan)
    n_gnss = int(present.sum())
    nu_s = rng_s.normal(0.0, 1.0, (n_gnss, 3)) * gnss.white_sample_std()
    y_s[present] = truth.vel[present] + nu_s

    return SensorStream(
        t=truth.t.copy(),
        y_a=y_a,
        y_g=y_g,
        y_s=y_s,
        gnss_present=present,
        gyro_params=gyro,
        accel_params=accel,
        gnss_params=gnss,
    )
