import math

import numpy as np
import pytest

import rollfusion as rf
from rollfusion.errors import IllConditionedError, InsufficientDataError
from rollfusion.geometry import euler_from_quat, quat_from_euler
from rollfusion.kinematics import KinematicStateExtended, LapCounters
from rollfusion.noise import TABLE_I_GNSS, gnss_r_from_params
from rollfusion.prefilter import (
    Crossing,
    GnssWindow,
    PolyCoeffs,
    PreFilter,
    PrefilterConfig,
    beta_from_spread,
    build_design,
    covariance_r,
    covariance_rtheta,
    covariance_rv,
    covariance_rv_bar,
    detect_crossings,
    evaluate,
    fit,
    is_spd,
    phi_matrix,
    update_lap_counters,
)

R_GNSS = gnss_r_from_params(TABLE_I_GNSS)
TAU = 0.1


def make_window(n, tau, values, k0=0):
    """Window filled with samples y[j] at epochs k0+j (chronological order)."""
    w = GnssWindow(n, tau)
    for j, y in enumerate(values):
        w.push(k0 + j, y)
    return w


def quadratic_samples(c2, c1, c0, n, tau, k_last):
    """Exact samples of u(t) = c2 t~^2 + c1 t~ + c0 anchored at epoch k_last."""
    out = []
    for k in range(k_last - n + 1, k_last + 1):
        tt = (k - k_last) * tau
        out.append(c2 * tt * tt + c1 * tt + c0)
    return out


class TestBuildDesign:
    def test_left_inverse(self):
        design = build_design(3, TAU, np.eye(3))
        np.testing.assert_allclose(design.Ks @ design.C, np.eye(9), atol=1e-10)

    def test_left_inverse_weighted(self):
        design = build_design(5, TAU, R_GNSS)
        np.testing.assert_allclose(design.Ks @ design.C, np.eye(9), atol=1e-10)

    def test_weight_scale_invariance(self):
        d1 = build_design(5, TAU, R_GNSS)
        d2 = build_design(5, TAU, 7.3 * R_GNSS)
        np.testing.assert_allclose(d1.Ks, d2.Ks, atol=1e-12)

    def test_exact_quadratic_recovery(self, rng):
        design = build_design(5, TAU, R_GNSS)
        c2, c1, c0 = rng.normal(0, 3, (3, 3))
        w = make_window(5, TAU, quadratic_samples(c2, c1, c0, 5, TAU, 4))
        coeffs = fit(w, design)
        np.testing.assert_allclose(coeffs.c2, c2, atol=1e-10)
        np.testing.assert_allclose(coeffs.c1, c1, atol=1e-10)
        np.testing.assert_allclose(coeffs.c0, c0, atol=1e-10)

    def test_underdetermined(self):
        with pytest.raises(InsufficientDataError):
            build_design(2, TAU, np.eye(3))

    def test_singular_weight(self):
        with pytest.raises(IllConditionedError):
            build_design(5, TAU, np.zeros((3, 3)))


class TestWindow:
    def test_strictly_increasing(self):
        w = make_window(3, TAU, [np.zeros(3)] * 2)
        with pytest.raises(ValueError):
            w.push(1, np.zeros(3))

    def test_gap_restarts(self):
        w = make_window(5, TAU, [np.zeros(3)] * 4)
        w.push(10, np.ones(3))
        assert len(w) == 1

    def test_fit_requires_full(self):
        design = build_design(5, TAU, R_GNSS)
        w = make_window(5, TAU, [np.zeros(3)] * 4)
        with pytest.raises(InsufficientDataError):
            fit(w, design)


class TestFit:
    def test_constant_samples(self):
        design = build_design(5, TAU, R_GNSS)
        vbar = np.array([3.0, -1.0, 0.5])
        coeffs = fit(make_window(5, TAU, [vbar] * 5), design)
        np.testing.assert_allclose(coeffs.c2, 0, atol=1e-10)
        np.testing.assert_allclose(coeffs.c1, 0, atol=1e-10)
        np.testing.assert_allclose(coeffs.c0, vbar, atol=1e-12)

    def test_linear_samples_exact(self, rng):
        design = build_design(4, TAU, R_GNSS)
        c1, c0 = rng.normal(0, 2, (2, 3))
        coeffs = fit(make_window(4, TAU, quadratic_samples(np.zeros(3), c1, c0, 4, TAU, 3)), design)
        np.testing.assert_allclose(coeffs.c2, 0, atol=1e-10)
        np.testing.assert_allclose(coeffs.c1, c1, atol=1e-10)

    def test_monte_carlo_unbiased(self):
        # zero-mean GNSS noise must leave the coefficient estimates unbiased;
        # band: 3 sigma of the mean over the trials
        design = build_design(5, TAU, R_GNSS)
        rng = np.random.default_rng(123)
        zeta = rng.normal(0, 2, 9)
        trials = 10_000
        chol = np.linalg.cholesky(R_GNSS)
        noise = rng.normal(0, 1, (trials, 5, 3)) @ chol.T
        y = (design.C @ zeta)[None, :] + noise.reshape(trials, -1)
        zeta_hat = y @ design.Ks.T
        cov = design.Ks @ np.kron(np.eye(5), R_GNSS) @ design.Ks.T
        band = 3.0 * np.sqrt(np.diag(cov) / trials)
        assert np.all(np.abs(zeta_hat.mean(axis=0) - zeta) < band)


class TestEvaluate:
    def test_at_epoch(self, rng):
        c2, c1, c0 = rng.normal(0, 2, (3, 3))
        coeffs = PolyCoeffs(c2, c1, c0, epoch=7)
        ve, in_window = evaluate(coeffs, 7 * TAU, TAU)
        assert in_window
        np.testing.assert_allclose(ve.v, c0)
        np.testing.assert_allclose(ve.v_dot, c1)

    def test_at_window_end(self, rng):
        c2, c1, c0 = rng.normal(0, 2, (3, 3))
        coeffs = PolyCoeffs(c2, c1, c0, epoch=0)
        ve, in_window = evaluate(coeffs, TAU, TAU)
        assert not in_window  # boundary belongs to the next window
        np.testing.assert_allclose(ve.v, c2 * TAU**2 + c1 * TAU + c0)

    def test_exact_on_quadratic_trajectory(self, rng):
        # noise-free quadratic motion: reconstruction exact across the window
        design = build_design(5, TAU, R_GNSS)
        c2, c1, c0 = rng.normal(0, 3, (3, 3))
        coeffs = fit(make_window(5, TAU, quadratic_samples(c2, c1, c0, 5, TAU, 4), k0=0), design)
        for tt in np.linspace(0, TAU, 11):
            t = 4 * TAU + tt
            ve, _ = evaluate(coeffs, t, TAU)
            np.testing.assert_allclose(ve.v, c2 * tt * tt + c1 * tt + c0, atol=1e-9)
            np.testing.assert_allclose(ve.v_dot, 2 * c2 * tt + c1, atol=1e-9)


class TestDetectCrossings:
    def test_no_root(self):
        coeffs = PolyCoeffs(np.zeros(3), np.zeros(3), np.array([-5.0, 1.0, 0.0]), epoch=0)
        assert detect_crossings(coeffs, TAU) == []

    def test_linear_crossing(self):
        # v_y = -(t - 0.04), v_x < 0: one positive-direction crossing
        coeffs = PolyCoeffs(
            np.zeros(3), np.array([0.0, -1.0, 0.0]), np.array([-5.0, 0.04, 0.0]), epoch=0
        )
        out = detect_crossings(coeffs, TAU)
        assert len(out) == 1
        assert out[0].direction == +1
        assert out[0].t == pytest.approx(0.04)

    def test_quadratic_two_roots(self):
        # v_y = (t - 0.02)(t - 0.07): roots with opposite slopes, v_x < 0
        c2y, c1y, c0y = 1.0, -0.09, 0.0014
        coeffs = PolyCoeffs(
            np.array([0.0, c2y, 0.0]),
            np.array([0.0, c1y, 0.0]),
            np.array([-5.0, c0y, 0.0]),
            epoch=0,
        )
        out = detect_crossings(coeffs, TAU)
        assert [c.direction for c in out] == [+1, -1]
        np.testing.assert_allclose([c.t for c in out], [0.02, 0.07], atol=1e-12)
        # dense-grid sign-change oracle agrees
        tt = np.linspace(0, TAU, 100_001)
        vy = c2y * tt * tt + c1y * tt + c0y
        flips = np.where(np.sign(vy[1:]) != np.sign(vy[:-1]))[0]
        assert len(flips) == 2

    def test_positive_vx_not_a_crossing(self):
        coeffs = PolyCoeffs(
            np.zeros(3), np.array([0.0, -1.0, 0.0]), np.array([5.0, 0.04, 0.0]), epoch=0
        )
        assert detect_crossings(coeffs, TAU) == []

    def test_tangential_root_skipped(self):
        # double root at 0.05: grazes zero, no sign change
        coeffs = PolyCoeffs(
            np.array([0.0, 1.0, 0.0]),
            np.array([0.0, -0.1, 0.0]),
            np.array([-5.0, 0.0025, 0.0]),
            epoch=0,
        )
        assert detect_crossings(coeffs, TAU) == []

    def test_root_outside_window(self):
        coeffs = PolyCoeffs(
            np.zeros(3), np.array([0.0, -1.0, 0.0]), np.array([-5.0, 0.2, 0.0]), epoch=0
        )
        assert detect_crossings(coeffs, TAU) == []


class TestLapCounters:
    def test_no_crossings(self):
        laps, last = update_lap_counters(LapCounters(1, 2), [], None)
        assert (laps.n_plus, laps.n_minus) == (1, 2) and last is None

    def test_single_positive(self):
        laps, last = update_lap_counters(LapCounters(), [Crossing(5.0, +1)], None)
        assert (laps.n_plus, laps.n_minus) == (1, 0) and last == 5.0

    def test_refractory_drops_duplicate(self):
        laps, last = update_lap_counters(
            LapCounters(), [Crossing(5.0, +1), Crossing(5.4, +1)], None, refractory=1.0
        )
        assert (laps.n_plus, laps.n_minus) == (1, 0) and last == 5.0

    def test_separated_crossings_both_count(self):
        laps, _ = update_lap_counters(
            LapCounters(), [Crossing(5.0, +1), Crossing(7.0, -1)], None, refractory=1.0
        )
        assert (laps.n_plus, laps.n_minus) == (1, 1)


class TestCovarianceRv:
    def test_zero_noise_limit(self):
        design = build_design(5, TAU, 1e-18 * np.eye(3))
        assert np.abs(covariance_rv(design, 0.05)).max() < 1e-12

    def test_window_end_dominates(self):
        design = build_design(5, TAU, R_GNSS)
        assert np.trace(covariance_rv(design, TAU)) > np.trace(covariance_rv(design, 0.0))
        np.testing.assert_allclose(
            covariance_rv_bar(design), covariance_rv(design, TAU), atol=0
        )

    def test_psd_and_symmetric(self):
        design = build_design(5, TAU, R_GNSS)
        rv = covariance_rv(design, 0.07)
        assert is_spd(rv + 1e-15 * np.eye(6))

    def test_monte_carlo_agreement(self):
        from rollfusion.analysis import mc_reconstructor_covariance

        design = build_design(5, TAU, R_GNSS)
        rep = mc_reconstructor_covariance(design, trials=10_000, t_offset=0.05, seed=11)
        assert rep["relative_frobenius"] < 0.10


class TestCovarianceChain:
    def setup_method(self):
        self.design = build_design(5, TAU, R_GNSS)
        self.xi = KinematicStateExtended(25.0, 0.02, 0.8, 0.5, 0.0, 0.3)
        self.y_a = np.array([0.4, -4.0, 11.0])
        self.r_nu_a = 1.1e-3 * np.eye(3)

    def test_rtheta_spd(self):
        r_v = covariance_rv_bar(self.design)
        r_th = covariance_rtheta(r_v, self.y_a, self.xi, self.r_nu_a)
        assert r_th.shape == (3, 3)
        assert is_spd(r_th)

    def test_r_eigenstructure_isotropic(self):
        # R_theta = s2*I: beta defaults to s2, so eigenvalues are {s2^2, s2/4 x3}
        s2 = 0.01
        q1 = quat_from_euler(rf.EulerAngles(-0.4, 0.05, 1.3))
        r = covariance_r(q1, s2 * np.eye(3))
        np.testing.assert_allclose(
            np.sort(np.linalg.eigvalsh(r)), [s2 * s2, s2 / 4, s2 / 4, s2 / 4], atol=1e-12
        )

    def test_r_rank_one_structure(self):
        q1 = np.array([1.0, 0.0, 0.0, 0.0])
        r = covariance_r(q1, np.zeros((3, 3)), beta_r=1.0)
        expected = np.zeros((4, 4))
        expected[0, 0] = 1.0
        np.testing.assert_allclose(r, expected, atol=1e-15)

    def test_beta_from_spread(self):
        m = np.diag([1.0, 4.0, 9.0])
        assert beta_from_spread(m) == pytest.approx(5.0)

    def test_emitted_r_spd(self):
        r_v = covariance_rv_bar(self.design)
        r_th = covariance_rtheta(r_v, self.y_a, self.xi, self.r_nu_a)
        q1 = quat_from_euler(rf.EulerAngles(-0.4, 0.02, 0.8))
        assert is_spd(covariance_r(q1, r_th))


def test_phi_matrix_shape_and_values():
    p = phi_matrix(0.05)
    assert p.shape == (6, 9)
    np.testing.assert_allclose(p[0, :3], [0.0025, 0, 0])
    np.testing.assert_allclose(p[3, :3], [0.1, 0, 0])


# ---------------------------------------------------------------------------
# stateful pipeline
# ---------------------------------------------------------------------------

def drive(pf, stream_tuples):
    """Feed (kind, payload) events: ('gnss', (k, y)) / ('miss', k) / ('imu', (t, y_a))."""
    outputs = []
    for kind, payload in stream_tuples:
        if kind == "gnss":
            pf.on_gnss(*payload)
        elif kind == "miss":
            pf.on_gnss_missing(payload)
        else:
            outputs.append(pf.step(*payload))
    return outputs


def steady_turn_events(n_epochs, V=20.0, chi_dot=0.35, g=9.80665, k_rider=0.0,
                       dt=0.01, tau=TAU, chi0=0.0):
    """Noise-free flat coordinated turn: GNSS + accelerometer event stream."""
    from rollfusion.geometry import rot1, rot3
    from rollfusion.kinematics import gravity_vector, phi_v

    events = []
    roll = phi_v(KinematicStateExtended(V, 0, 0, 0, 0, chi_dot), g) / (1.0 + k_rider)
    steps = int(round(tau / dt))
    for k in range(n_epochs):
        chi_k = chi0 + chi_dot * k * tau
        events.append(("gnss", (k, V * np.array([math.cos(chi_k), math.sin(chi_k), 0.0]))))
        for i in range(steps):
            t = k * tau + i * dt
            chi = chi0 + chi_dot * t
            v_dot = V * chi_dot * np.array([-math.sin(chi), math.cos(chi), 0.0])
            a = rot1(roll * (1 + k_rider)) @ rot3(chi) @ (v_dot - gravity_vector(g))
            events.append(("imu", (t, a)))
    return events, roll * (1 + k_rider)


class TestPreFilterPipeline:
    def test_warmup_returns_none(self):
        pf = PreFilter(PrefilterConfig())
        assert pf.step(0.0, np.array([0, 0, 9.8])) is None

    def test_straight_cruise_quaternion(self):
        # constant northbound velocity, static specific force: q1 = h(0, 0, 0)
        pf = PreFilter(PrefilterConfig())
        g = pf.config.g_hat
        events = []
        for k in range(6):
            events.append(("gnss", (k, np.array([20.0, 0.0, 0.0]))))
            for i in range(10):
                events.append(("imu", (k * TAU + i * 0.01, np.array([0.0, 0.0, g]))))
        outs = [o for o in drive(pf, events) if o is not None]
        assert outs
        np.testing.assert_allclose(outs[-1].q1, [1, 0, 0, 0], atol=1e-9)
        assert outs[-1].phi_av == pytest.approx(0.0, abs=1e-12)

    def test_flat_turn_tracks_truth_roll(self):
        # noise-free coordinated turn: reconstruction-limited roll agreement
        pf = PreFilter(PrefilterConfig())
        events, roll = steady_turn_events(30)
        outs = [o for o in drive(pf, events) if o is not None]
        errs = [abs(o.phi_av - roll) for o in outs[50:]]
        assert max(errs) < math.radians(0.2)

    def test_emitted_r_always_spd(self):
        pf = PreFilter(PrefilterConfig())
        events, _ = steady_turn_events(12)
        for o in drive(pf, events):
            if o is not None:
                assert is_spd(o.r_t)

    def test_staleness_inflates_r_and_expires(self):
        cfg = PrefilterConfig(max_staleness=10)
        pf = PreFilter(cfg)
        events, _ = steady_turn_events(8)
        outs = drive(pf, events)
        base = [o for o in outs if o is not None][-1]
        assert base.staleness == 0

        # three missed epochs: R inflated by (1+s)^2, still available
        t0 = 8 * TAU
        for j in range(3):
            pf.on_gnss_missing(8 + j)
        out = pf.step(t0 + 0.25, base_accel())
        assert out is not None and out.staleness == 3
        ratio = np.trace(out.r_t) / np.trace(base.r_t)
        assert ratio == pytest.approx((1 + 3) ** 2, rel=0.35)

        # push past the availability limit
        for j in range(3, 14):
            pf.on_gnss_missing(8 + j)
        assert pf.step(8 * TAU + 1.4, base_accel()) is None

    def test_recovery_after_dropout(self):
        pf = PreFilter(PrefilterConfig())
        events, roll = steady_turn_events(8)
        drive(pf, events)
        for j in range(12):
            pf.on_gnss_missing(8 + j)
        assert not pf.available
        # refill with fresh epochs: available again after n consecutive samples
        V, chi_dot = 20.0, 0.35
        for k in range(20, 26):
            chi_k = chi_dot * k * TAU
            pf.on_gnss(k, V * np.array([math.cos(chi_k), math.sin(chi_k), 0.0]))
        assert pf.available
        out = pf.step(25 * TAU, base_accel())
        assert out is not None and out.staleness == 0

    def test_hold_last_when_slow(self):
        # next evaluation below the speed floor: previous output re-stamped
        pf = PreFilter(PrefilterConfig())
        events, _ = steady_turn_events(8, V=20.0)
        outs = [o for o in drive(pf, events) if o is not None]
        last = outs[-1]
        pf.coeffs.c0[:] = [0.1, 0.0, 0.0]  # crawl below the 1 m/s floor
        pf.coeffs.c1[:] = 0.0
        pf.coeffs.c2[:] = 0.0
        held = pf.step(last.t + 0.01, base_accel())
        assert held is not None and held.held
        np.testing.assert_allclose(held.q1, last.q1)


def base_accel():
    return np.array([0.0, 0.0, 9.80665])


class TestSeamContinuity:
    def test_crossing_counted_and_course_continuous(self):
        # constant-rate left turn passing the +pi seam once
        pf = PreFilter(PrefilterConfig())
        events, _ = steady_turn_events(40, chi0=math.pi - 0.6, chi_dot=0.35)
        outs = [o for o in drive(pf, events) if o is not None]
        chi = np.array([o.xi_e_hat.chi for o in outs])
        assert pf.laps.n_plus == 1 and pf.laps.n_minus == 0
        assert np.abs(np.diff(chi)).max() < 0.35 * 0.01 * 1.5
        # course kept increasing through the seam (no 2*pi fallback)
        assert chi[-1] > math.pi

    def test_lemma2_slope_continuity(self):
        # forward-difference slope of the course stays near the true rate
        pf = PreFilter(PrefilterConfig())
        events, _ = steady_turn_events(40, chi0=math.pi - 0.6, chi_dot=0.35)
        outs = [o for o in drive(pf, events) if o is not None]
        chi = np.array([o.xi_e_hat.chi for o in outs])
        slopes = np.diff(chi) / 0.01
        assert np.abs(slopes - 0.35).max() < 0.05


class TestPrefilterOutputQuaternion:
    def test_q1_unit_norm_and_consistent(self):
        pf = PreFilter(PrefilterConfig())
        events, _ = steady_turn_events(20)
        for o in drive(pf, events):
            if o is None:
                continue
            assert abs(np.linalg.norm(o.q1) - 1.0) < 1e-12
            e = euler_from_quat(o.q1)
            assert e.phi == pytest.approx(o.phi_av, abs=1e-9)
            assert e.psi == pytest.approx(
                math.remainder(o.xi_e_hat.chi, 2 * math.pi), abs=1e-9
            )
