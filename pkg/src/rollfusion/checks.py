"""Invariant suite behind the ``validate`` CLI command.

Each check re-verifies one of the package's structural invariants at runtime
(finite-difference Jacobian agreement, algebraic identities, integration
order, Monte-Carlo covariance agreement, SPD guarantees). The pytest suite
asserts the same properties independently with frozen oracles; this module
exists so a deployed artifact can self-check without the test tree.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from . import ekf
from .analysis import allan_deviation, mc_reconstructor_covariance
from .config import RunConfig, default_config
from .geometry import (
    EulerAngles,
    euler_from_quat,
    quat_from_euler,
    quat_rate_jacobian,
    quat_rate_matrix,
    rotation_from_euler,
    rotation_from_quat,
    wrap_angle,
)
from .kinematics import (
    InertialVelocityExtended,
    KinematicStateExtended,
    LapCounters,
    aero_from_velocity,
    aero_jacobian,
    f_theta_jacobian,
    phi_a,
    phi_av,
    phi_v,
    velocity_from_aero,
    velocity_jacobian,
)
from .noise import TABLE_I_GYRO, error_series
from .pipeline import estimate, run_prefilter, simulate
from .prefilter import build_design
from .simulate import generate_truth, quat_array_from_euler
from .analysis import seam_crossing_counts


@dataclass
class CheckResult:
    name: str
    passed: bool
    detail: str


def _fd_jacobian(f, x, h=1e-6):
    x = np.asarray(x, dtype=float)
    f0 = np.asarray(f(x))
    J = np.zeros((f0.size, x.size))
    for j in range(x.size):
        dx = np.zeros_like(x)
        dx[j] = h
        J[:, j] = (np.asarray(f(x + dx)) - np.asarray(f(x - dx))) / (2 * h)
    return J


def check_lsq_identity() -> CheckResult:
    design = build_design(5, 0.1, np.diag([1.1e-2**2, 1.1e-2**2, 1.0e-1**2]))
    err = float(np.abs(design.Ks @ design.C - np.eye(9)).max())
    return CheckResult("lsq-left-inverse", err < 1e-10, f"max |KsC - I| = {err:.2e}")


def check_rotation_roundtrip() -> CheckResult:
    rng = np.random.default_rng(7)
    worst_orth, worst_rt, worst_eq = 0.0, 0.0, 0.0
    for _ in range(200):
        e = EulerAngles(*rng.uniform(-1.4, 1.4, 3))
        T = rotation_from_euler(e)
        worst_orth = max(worst_orth, float(np.abs(T.T @ T - np.eye(3)).max()))
        worst_orth = max(worst_orth, abs(np.linalg.det(T) - 1.0))
        q = quat_from_euler(e)
        worst_eq = max(worst_eq, float(np.abs(rotation_from_quat(q) - T).max()))
        back = euler_from_quat(q)
        worst_rt = max(
            worst_rt,
            abs(wrap_angle(back.phi - e.phi)),
            abs(wrap_angle(back.theta - e.theta)),
            abs(wrap_angle(back.psi - e.psi)),
        )
    ok = worst_orth < 1e-12 and worst_eq < 1e-12 and worst_rt < 1e-10
    return CheckResult(
        "rotation-roundtrip", ok,
        f"orth {worst_orth:.1e}, quat-equiv {worst_eq:.1e}, roundtrip {worst_rt:.1e}",
    )


def check_jacobians() -> CheckResult:
    rng = np.random.default_rng(11)
    worst = 0.0
    for _ in range(25):
        # quaternion-rate jacobian
        q = rng.normal(0, 1, 4)
        w = rng.normal(0, 1, 3)
        J = quat_rate_jacobian(w)
        Jfd = _fd_jacobian(lambda qq: quat_rate_matrix(qq) @ w, q)
        worst = max(worst, float(np.abs(J - Jfd).max()))
        # EKF drift jacobian
        x = np.concatenate([rng.normal(0, 0.1, 3), rng.normal(0, 1, 4)])
        yg = rng.normal(0, 1, 3)
        worst = max(
            worst,
            float(np.abs(ekf.jacobian_a(x, yg) - _fd_jacobian(lambda xx: ekf.drift(xx, yg), x)).max()),
        )
        # kinematic inverse-map jacobian
        xi = KinematicStateExtended(
            rng.uniform(8, 50), rng.uniform(-0.3, 0.3), rng.uniform(-2, 2),
            rng.uniform(-4, 4), rng.uniform(-0.1, 0.1), rng.uniform(-0.4, 0.4),
        )
        ve = np.concatenate(
            [velocity_from_aero(xi),
             velocity_jacobian(xi.v_mag, xi.gamma, xi.chi)
             @ [xi.v_mag_dot, xi.gamma_dot, xi.chi_dot]]
        )

        def f_xe(v6):
            st = aero_from_velocity(
                InertialVelocityExtended(v6[:3], v6[3:]), LapCounters(), v_floor=0.1
            )
            return st.as_array()

        worst = max(worst, float(np.abs(aero_jacobian(xi) - _fd_jacobian(f_xe, ve)).max()))
        # attitude-map jacobian
        a = rng.normal([0, 0, 12], 3)
        z = np.concatenate([a, xi.as_array(), [9.80665]])

        def f_th(zz):
            st = KinematicStateExtended.from_array(zz[3:9])
            return np.array(
                [phi_av(zz[0:3], st, zz[9], a_floor=-np.inf), st.gamma, st.chi]
            )

        worst = max(
            worst, float(np.abs(f_theta_jacobian(a, xi, 9.80665) - _fd_jacobian(f_th, z)).max())
        )
    return CheckResult("fd-jacobians", worst < 1e-6, f"max FD disagreement {worst:.2e}")


def _small_truth(seed_heading=0.0, n_laps=1.0, cfg: RunConfig | None = None):
    cfg = cfg or default_config()
    cfg = replace_heading(cfg, seed_heading)
    from .pipeline import build_scene

    track, profile = build_scene(cfg)
    return cfg, generate_truth(
        track, profile, k_rider=cfg.sim.k_rider, dt=cfg.sim.dt,
        n_laps=n_laps, g_mag=cfg.sim.gravity,
    )


def replace_heading(cfg: RunConfig, heading0: float) -> RunConfig:
    cfg = replace(cfg)
    cfg.track = replace(cfg.track, heading0=heading0)
    return cfg


def seam_config() -> RunConfig:
    """Gentle wide-radius circuit whose course sweeps the +/-pi seam once per lap.

    Radii and ramps are sized so the quadratic reconstructor's model error at
    fit updates stays inside the sample-to-sample continuity bound; GNSS
    noise is scaled down so the check isolates the lap-counter mechanism.
    """
    cfg = default_config()
    cfg.track = replace(
        cfg.track,
        segments=[
            ["straight", 500.0],
            ["arc", 200.0, math.pi],
            ["straight", 500.0],
            ["arc", 200.0, math.pi],
        ],
        ramp_length=40.0,
        heading0=3 * math.pi / 4,
    )
    cfg.limits = replace(cfg.limits, a_long_max=3.0)
    cfg.sim = replace(cfg.sim, n_laps=3.2, seed=4)
    cfg.sensors.gnss.white = [1.1e-4, 1.1e-4, 1.0e-3]
    return cfg


def check_lemma1() -> CheckResult:
    _, truth = _small_truth()
    worst = 0.0
    for i in range(0, len(truth), 7):
        xi = KinematicStateExtended.from_array(truth.xi_e[i])
        worst = max(worst, abs(phi_av(truth.a_body[i], xi, truth.g_mag) - truth.phi[i]))
    return CheckResult("lemma1-exactness", worst < 1e-9, f"max |phi_av - phi| = {worst:.2e}")


def check_flat_turn_identity() -> CheckResult:
    rng = np.random.default_rng(3)
    worst = 0.0
    g = 9.80665
    for _ in range(200):
        v = rng.uniform(5, 50)
        cd = rng.uniform(-0.5, 0.5)
        chi = rng.uniform(-math.pi, math.pi)
        dphi = rng.uniform(-0.15, 0.15)
        roll = phi_v(KinematicStateExtended(v, 0, chi, 0, 0, cd), g) - dphi
        vdot = v * cd * np.array([-math.sin(chi), math.cos(chi), 0.0])
        a = rotation_from_euler(EulerAngles(roll, 0.0, chi)) @ (vdot - np.array([0, 0, -g]))
        xi = KinematicStateExtended(v, 0, chi, 0, 0, cd)
        lhs = phi_av(a, xi, g, a_floor=0.0)
        rhs = phi_a(a) + phi_v(xi, g)
        worst = max(worst, abs(lhs - rhs), abs(lhs - roll))
    return CheckResult("flat-turn-decomposition", worst < 1e-12, f"max defect {worst:.2e}")


def check_quat_ode_consistency() -> CheckResult:
    _, truth = _small_truth()
    q = quat_array_from_euler(truth.euler)
    dt = truth.dt
    qdot_fd = (q[2:] - q[:-2]) / (2 * dt)
    qdot = np.stack(
        [quat_rate_matrix(q[i]) @ truth.omega[i] for i in range(1, len(q) - 1)]
    )
    err = np.abs(qdot_fd - qdot).max(axis=1)
    # central differences are O(dt^2); curvature-ramp kinks add isolated outliers
    bound = 5e-3
    frac_bad = float(np.mean(err > bound))
    return CheckResult(
        "quat-ode-consistency", float(np.quantile(err, 0.99)) < bound and frac_bad < 0.02,
        f"99th-percentile FD defect {np.quantile(err, 0.99):.2e}",
    )


def check_rk4_order() -> CheckResult:
    # frozen-coefficient Riccati step: halving dt must shrink the error ~16x
    rng = np.random.default_rng(5)
    x = np.concatenate([[0.01, -0.02, 0.03], quat_from_euler(EulerAngles(0.3, 0.1, -0.8))])
    y_g = np.array([0.2, -0.1, 0.4])
    tuning = ekf.EkfTuning.from_gyro(TABLE_I_GYRO)
    r_t = 1e-4 * np.eye(4)
    S0 = np.eye(7) + 0.1 * np.diag(rng.uniform(0, 1, 7))

    def integrate(dt, steps):
        S = S0.copy()
        for _ in range(steps):
            S = ekf.riccati_step(S, x, y_g, tuning, r_t, dt)
        return S

    ref = integrate(0.04 / 64, 64)
    err1 = np.linalg.norm(integrate(0.04, 1) - ref)
    err2 = np.linalg.norm(integrate(0.02, 2) - ref)
    ratio = err1 / err2 if err2 > 0 else np.inf
    return CheckResult("rk4-order", ratio > 8.0, f"halving reduced error {ratio:.1f}x")


def check_mc_rv() -> CheckResult:
    design = build_design(5, 0.1, np.diag([1.1e-2**2, 1.1e-2**2, 1.0e-1**2]))
    rep = mc_reconstructor_covariance(design, trials=4000, seed=2)
    return CheckResult(
        "mc-reconstructor-covariance",
        rep["relative_frobenius"] < 0.15,
        f"relative Frobenius gap {rep['relative_frobenius']:.3f}",
    )


def check_spd_run() -> CheckResult:
    cfg = default_config()
    cfg.sim = replace(cfg.sim, n_laps=0.4, seed=99)
    truth, stream = simulate(cfg)
    est = estimate(stream, cfg)
    pos = est.s_eig_min[est.valid]
    ok = bool(len(pos) > 0 and np.all(pos > 0) and np.isfinite(est.r_trace[est.valid]).all())
    return CheckResult(
        "spd-run", ok,
        f"min S eigenvalue {pos.min():.3e}" if len(pos) else "no valid samples",
    )


def check_allan() -> CheckResult:
    rng = np.random.default_rng(17)
    series = error_series(TABLE_I_GYRO, 12_000, rng)[:, 0]
    taus, devs = allan_deviation(series, TABLE_I_GYRO.ts, m_list=[10])
    expected = float(np.asarray(TABLE_I_GYRO.white)) / math.sqrt(taus[0])
    rel = abs(devs[0] - expected) / expected
    return CheckResult("allan-white-slope", rel < 0.15, f"relative slope error {rel:.3f}")


def check_seam_continuity() -> CheckResult:
    """Drive the pre-filter through the course seam at low GNSS noise.

    The stated jump bound isolates the lap-counter mechanism, so the GNSS
    noise is scaled down until reconstruction jitter is negligible against
    the bound (fit-update jitter at full noise is an inherent reconstructor
    property, not a continuity defect).
    """
    cfg = seam_config()
    cfg.sim = replace(cfg.sim, n_laps=1.2)
    truth, stream = simulate(cfg)
    chi, _, pf = run_prefilter(stream, cfg)
    laps = pf.laps
    chi_dot_max = float(np.abs(truth.xi_e[:, 5]).max())
    jumps = np.abs(np.diff(chi[~np.isnan(chi)]))
    n_true = sum(seam_crossing_counts(truth.vel))
    n_counted = laps.n_plus + laps.n_minus
    ok = bool(np.all(jumps <= chi_dot_max * truth.dt * 1.5)) and n_counted == n_true
    return CheckResult(
        "seam-continuity", ok and n_true >= 1,
        f"{n_true} true crossings, {n_counted} counted, max course step {jumps.max():.2e}",
    )


ALL_CHECKS = [
    check_lsq_identity,
    check_rotation_roundtrip,
    check_jacobians,
    check_lemma1,
    check_flat_turn_identity,
    check_quat_ode_consistency,
    check_rk4_order,
    check_mc_rv,
    check_spd_run,
    check_allan,
    check_seam_continuity,
]


def run_all() -> list[CheckResult]:
    return [fn() for fn in ALL_CHECKS]
