"""Run orchestration: simulate, estimate, compare.

``estimate`` is the single causal loop shared by the CLI and the in-memory
API: it replays a measurement stream sample by sample through the pre-filter
and the EKF exactly as an online implementation would, so estimating from a
CSV file and estimating from the in-memory stream produce identical output.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .baselines import baseline_series
from .config import RunConfig
from .ekf import EkfTuning, RollObserver
from .analysis import SpectrumReport, error_stats, spectrum
from .noise import SensorStream, corrupt, gnss_r_from_params
from .prefilter import PreFilter, PrefilterConfig
from .simulate import TrajectoryTruth, generate_truth
from .track import SpeedProfileLimits, build_track, speed_profile


def build_scene(cfg: RunConfig):
    """Track and speed profile from a config."""
    track = build_track(
        cfg.track.segments,
        grades=cfg.track.grades,
        ramp_length=cfg.track.ramp_length,
        ds=cfg.track.ds,
        heading0=cfg.track.heading0,
    )
    limits = SpeedProfileLimits(
        mu_max=cfg.limits.mu_max,
        a_long_max=cfg.limits.a_long_max,
        p_max=cfg.limits.p_max,
        mass=cfg.limits.mass,
        cda=cfg.limits.cda,
        rho=cfg.limits.rho,
    )
    profile = speed_profile(track, limits, g_mag=cfg.sim.gravity)
    return track, profile


def simulate(cfg: RunConfig) -> tuple[TrajectoryTruth, SensorStream]:
    """Generate ground truth and the corrupted measurement stream."""
    track, profile = build_scene(cfg)
    truth = generate_truth(
        track,
        profile,
        k_rider=cfg.sim.k_rider,
        dt=cfg.sim.dt,
        n_laps=cfg.sim.n_laps,
        g_mag=cfg.sim.gravity,
        side_slip=cfg.sim.side_slip,
        duration=cfg.sim.duration,
        a_floor=cfg.prefilter.a_floor,
    )
    bias_init = cfg.sensors.gyro_bias_init
    stream = corrupt(
        truth,
        gyro=cfg.sensors.gyro.to_params(),
        accel=cfg.sensors.accel.to_params(),
        gnss=cfg.sensors.gnss.to_params(),
        seed=cfg.sim.seed,
        gyro_bias_init=np.asarray(bias_init, dtype=float) if bias_init is not None else None,
    )
    return truth, stream


@dataclass
class EstimateResult:
    """Per-sample filter telemetry; NaN before the pre-filter warms up."""

    t: np.ndarray
    phi_hat: np.ndarray
    phi_av: np.ndarray
    q_hat: np.ndarray          # (n, 4) normalized
    b_g_hat: np.ndarray        # (n, 3)
    s_eig_min: np.ndarray
    s_eig_max: np.ndarray
    r_trace: np.ndarray
    staleness: np.ndarray
    v_mag_hat: np.ndarray      # reconstructed speed magnitude
    chi_hat: np.ndarray        # continuous course estimate
    valid: np.ndarray          # bool: EKF output defined at this sample
    laps_plus: int = 0         # final lap-counter values
    laps_minus: int = 0

    def columns(self) -> dict[str, np.ndarray]:
        cols = {"t": self.t, "phi_hat": self.phi_hat, "phi_av": self.phi_av}
        for j, name in enumerate(("q_hat_0", "q_hat_x", "q_hat_y", "q_hat_z")):
            cols[name] = self.q_hat[:, j]
        for j, name in enumerate(("b_g_hat_x", "b_g_hat_y", "b_g_hat_z")):
            cols[name] = self.b_g_hat[:, j]
        cols["s_eig_min"] = self.s_eig_min
        cols["s_eig_max"] = self.s_eig_max
        cols["r_trace"] = self.r_trace
        cols["staleness"] = self.staleness
        cols["v_mag_hat"] = self.v_mag_hat
        cols["chi_hat"] = self.chi_hat
        return cols


def _prefilter_config(cfg: RunConfig) -> PrefilterConfig:
    accel = cfg.sensors.accel.to_params()
    r_nu_a = float(np.mean(accel.white_sample_std() ** 2)) * np.eye(3)
    return PrefilterConfig(
        n=cfg.prefilter.n,
        tau=cfg.prefilter.tau,
        r_nu_s=gnss_r_from_params(cfg.sensors.gnss.to_params()),
        r_nu_a=r_nu_a,
        g_hat=cfg.sim.gravity,
        v_floor=cfg.prefilter.v_floor,
        a_floor=cfg.prefilter.a_floor,
        refractory=cfg.prefilter.refractory,
        max_staleness=cfg.prefilter.max_staleness,
        force_flat=cfg.prefilter.force_flat,
    )


def run_prefilter(stream: SensorStream, cfg: RunConfig) -> tuple[np.ndarray, np.ndarray, PreFilter]:
    """Causal pre-filter-only pass: (course series, roll series, filter instance).

    NaN where the pre-filter is warming up or unavailable; the returned
    instance exposes the final lap counters.
    """
    n = len(stream)
    ratio = int(round(cfg.prefilter.tau / cfg.sim.dt))
    pf = PreFilter(_prefilter_config(cfg))
    chi = np.full(n, np.nan)
    roll = np.full(n, np.nan)
    for i in range(n):
        if i % ratio == 0:
            epoch = i // ratio
            if stream.gnss_present[i]:
                pf.on_gnss(epoch, stream.y_s[i])
            else:
                pf.on_gnss_missing(epoch)
        out = pf.step(stream.t[i], stream.y_a[i])
        if out is not None:
            chi[i] = out.xi_e_hat.chi
            roll[i] = out.phi_av
    return chi, roll, pf


def estimate(stream: SensorStream, cfg: RunConfig) -> EstimateResult:
    """Causal pre-filter + EKF pass over a measurement stream."""
    n = len(stream)
    dt = cfg.sim.dt
    tau = cfg.prefilter.tau
    ratio = int(round(tau / dt))
    dropouts = [tuple(iv) for iv in cfg.sensors.gnss_dropouts]

    pf = PreFilter(_prefilter_config(cfg))
    tuning = EkfTuning.from_gyro(
        cfg.sensors.gyro.to_params(),
        lam=cfg.ekf.lam,
        eps_factor=cfg.ekf.eps_factor,
        bias_walk_psd=cfg.ekf.bias_walk_psd,
    )
    observer = RollObserver(tuning, s0=cfg.ekf.s0)

    out = EstimateResult(
        t=stream.t.copy(),
        phi_hat=np.full(n, np.nan),
        phi_av=np.full(n, np.nan),
        q_hat=np.full((n, 4), np.nan),
        b_g_hat=np.full((n, 3), np.nan),
        s_eig_min=np.full(n, np.nan),
        s_eig_max=np.full(n, np.nan),
        r_trace=np.full(n, np.nan),
        staleness=np.full(n, np.nan),
        v_mag_hat=np.full(n, np.nan),
        chi_hat=np.full(n, np.nan),
        valid=np.zeros(n, dtype=bool),
    )

    for i in range(n):
        t = stream.t[i]
        if i % ratio == 0:
            epoch = i // ratio
            present = bool(stream.gnss_present[i])
            if present and any(t0 <= t < t1 for t0, t1 in dropouts):
                present = False
            if present:
                pf.on_gnss(epoch, stream.y_s[i])
            else:
                pf.on_gnss_missing(epoch)

        pf_out = pf.step(t, stream.y_a[i])
        if pf_out is not None:
            out.phi_av[i] = pf_out.phi_av
            out.r_trace[i] = float(np.trace(pf_out.r_t))
            out.staleness[i] = pf_out.staleness
            out.v_mag_hat[i] = pf_out.xi_e_hat.v_mag
            out.chi_hat[i] = pf_out.xi_e_hat.chi

        if not observer.initialized:
            if pf_out is not None:
                observer.initialize(pf_out.q1)
        else:
            if pf_out is not None:
                observer.step(stream.y_g[i], dt, q1=pf_out.q1, r_t=pf_out.r_t)
            else:
                observer.step(stream.y_g[i], dt)  # coast on gyro propagation

        if observer.initialized:
            rec = observer.output()
            out.phi_hat[i] = rec.phi_hat
            out.q_hat[i] = rec.q_hat_normalized
            out.b_g_hat[i] = observer.state.b_g
            out.s_eig_min[i] = rec.s_eig_min
            out.s_eig_max[i] = rec.s_eig_max
            out.valid[i] = True
    out.laps_plus = pf.laps.n_plus
    out.laps_minus = pf.laps.n_minus
    return out


@dataclass
class CompareResult:
    t: np.ndarray
    errors: dict[str, np.ndarray]          # aligned error series, NaN where undefined
    spectra: dict[str, SpectrumReport]
    stats: dict[str, tuple[float, float]]  # steady-state (mean, std)
    steady_mask: np.ndarray


def compare(truth: TrajectoryTruth, stream: SensorStream, cfg: RunConfig) -> CompareResult:
    """Error series, spectra, and steady-state stats for all estimators."""
    est = estimate(stream, cfg)
    if cfg.compare.baseline_speed == "reconstructed":
        v_x_body = np.where(np.isnan(est.v_mag_hat), truth.xi_e[:, 0], est.v_mag_hat)
    else:
        v_x_body = truth.xi_e[:, 0]
    bases = baseline_series(v_x_body, stream.y_g, g_mag=cfg.sim.gravity)

    errors: dict[str, np.ndarray] = {}
    errors["phi_av"] = est.phi_av - truth.phi
    errors["phi_hat"] = est.phi_hat - truth.phi
    for name, series in bases.items():
        errors[name] = series - truth.phi

    # common window where every estimator is defined
    valid = est.valid & ~np.isnan(est.phi_av)
    first = int(np.argmax(valid)) if valid.any() else len(truth.t)
    window = slice(first, len(truth.t))
    spectra = {
        name: spectrum(truth.t[window], np.nan_to_num(err[window]), f_lo=cfg.compare.f_lo)
        for name, err in errors.items()
    }

    steady = truth.t >= cfg.compare.settle_laps * truth.lap_time
    steady &= valid
    stats = {}
    for name, err in errors.items():
        sel = err[steady]
        stats[name] = error_stats(sel[~np.isnan(sel)]) if np.sum(steady) > 2 else (np.nan, np.nan)
    return CompareResult(
        t=truth.t, errors=errors, spectra=spectra, stats=stats, steady_mask=steady
    )
