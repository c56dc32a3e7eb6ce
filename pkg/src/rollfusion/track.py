"""Closed-track geometry and the physics-limited speed profile.

Tracks are built from straight/arc segment lists. Curvature transitions are
smoothed with linear ramps so heading is C1 and the generated body rates
stay bounded. Heading closure (arc angles summing to +/-2 pi) must hold in
the spec; position closure is restored exactly by a least-norm adjustment of
the straight lengths, which is a linear problem because moving a straight's
length translates everything downstream along its (fixed) heading.

The speed profile is the classic two-pass limit-curve method: an apex speed
ceiling from lateral grip, then interleaved backward (braking) and forward
(traction/power) passes iterated around the loop until lap-periodic. The
friction ellipse couples longitudinal to lateral demand; wheelie limiting is
the flat longitudinal cap.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import InfeasibleProfileError, TrackGeometryError
from .kinematics import DEFAULT_GRAVITY

# 5-point Gauss-Legendre nodes/weights on [0, 1]; per-cell quadrature of
# cos/sin of the (quadratic-in-s) heading is then exact to machine precision
_GL_X = 0.5 * (1.0 + np.array([-0.906179845938664, -0.538469310105683, 0.0,
                               0.538469310105683, 0.906179845938664]))
_GL_W = 0.5 * np.array([0.236926885056189, 0.478628670499366, 0.568888888888889,
                        0.478628670499366, 0.236926885056189])

HEADING_CLOSURE_TOL = 1e-8
POSITION_CLOSURE_TOL = 1e-9


@dataclass(frozen=True)
class Segment:
    """One track piece: a straight (length) or an arc (radius, signed angle)."""

    kind: str
    length: float = 0.0
    radius: float = 0.0
    angle: float = 0.0

    @classmethod
    def straight(cls, length: float) -> "Segment":
        if length <= 0:
            raise TrackGeometryError("straight length must be positive")
        return cls("straight", length=float(length))

    @classmethod
    def arc(cls, radius: float, angle: float) -> "Segment":
        if radius <= 0 or angle == 0:
            raise TrackGeometryError("arc needs positive radius and nonzero angle")
        return cls("arc", length=abs(angle) * radius, radius=float(radius), angle=float(angle))

    @property
    def curvature(self) -> float:
        return 0.0 if self.kind == "straight" else math.copysign(1.0 / self.radius, self.angle)


def parse_segments(spec) -> list[Segment]:
    """Parse [("straight", L), ("arc", R, angle), ...] style segment lists."""
    out = []
    for item in spec:
        if isinstance(item, Segment):
            out.append(item)
            continue
        kind = item[0]
        if kind == "straight":
            out.append(Segment.straight(item[1]))
        elif kind == "arc":
            out.append(Segment.arc(item[1], item[2]))
        else:
            raise TrackGeometryError(f"unknown segment kind {kind!r}")
    return out


@dataclass
class TrackModel:
    """Arc-length sampled closed circuit: curvature, heading, slope, plan view."""

    s: np.ndarray
    kappa: np.ndarray        # node curvature, piecewise linear between nodes
    chi: np.ndarray          # node heading, exact integral of kappa
    slope: np.ndarray        # node grade angle
    x: np.ndarray
    y: np.ndarray
    length: float
    ds: float
    heading0: float = 0.0

    def _wrap(self, s) -> np.ndarray:
        return np.mod(s, self.length)

    def _cell(self, s) -> tuple[np.ndarray, np.ndarray]:
        sw = self._wrap(s)
        idx = np.minimum((sw / self.ds).astype(int), len(self.s) - 2)
        return idx, (sw - self.s[idx]) / self.ds

    def kappa_at(self, s):
        idx, f = self._cell(s)
        return (1.0 - f) * self.kappa[idx] + f * self.kappa[idx + 1]

    def kappa_prime_at(self, s):
        idx, _ = self._cell(s)
        return (self.kappa[idx + 1] - self.kappa[idx]) / self.ds

    def chi_at(self, s):
        """Heading, continuous in total distance (not wrapped to a lap)."""
        s = np.asarray(s, dtype=float)
        lap = np.floor(s / self.length)
        idx, f = self._cell(s)
        winding = self.chi[-1] - self.chi[0]
        k0, k1 = self.kappa[idx], self.kappa_at(s)
        # exact integral of the piecewise-linear curvature within the cell
        part = self.ds * f * 0.5 * (k0 + k1)
        return self.chi[idx] + part + lap * winding

    def slope_at(self, s):
        idx, f = self._cell(s)
        return (1.0 - f) * self.slope[idx] + f * self.slope[idx + 1]

    def slope_prime_at(self, s):
        idx, _ = self._cell(s)
        return (self.slope[idx + 1] - self.slope[idx]) / self.ds

    @property
    def heading_winding(self) -> float:
        return float(self.chi[-1] - self.chi[0])

    @property
    def position_closure(self) -> float:
        return float(math.hypot(self.x[-1] - self.x[0], self.y[-1] - self.y[0]))


def _kappa_nodes(segments: list[Segment], grades: np.ndarray, ramp: float, ds: float):
    """Node curvature/slope profiles with linear transition ramps at boundaries."""
    lengths = np.array([seg.length for seg in segments])
    if ramp > 0 and np.any(lengths < ramp):
        raise TrackGeometryError("every segment must be longer than the transition ramp")
    total = float(lengths.sum())
    n = int(round(total / ds))
    ds_eff = total / n
    s_nodes = np.arange(n + 1) * ds_eff
    bounds = np.concatenate([[0.0], np.cumsum(lengths)])
    kappas = np.array([seg.curvature for seg in segments])

    def profile(values):
        out = np.empty(n + 1)
        for i, s in enumerate(s_nodes):
            seg = min(np.searchsorted(bounds, s, side="right") - 1, len(segments) - 1)
            v = values[seg]
            if ramp > 0:
                d_start = s - bounds[seg]
                d_end = bounds[seg + 1] - s
                if d_start < ramp / 2:
                    prev = values[seg - 1] if seg > 0 else values[-1]
                    f = 0.5 + d_start / ramp
                    v = (1 - f) * prev + f * values[seg]
                elif d_end < ramp / 2:
                    nxt = values[(seg + 1) % len(segments)]
                    f = 0.5 + d_end / ramp
                    v = (1 - f) * nxt + f * values[seg]
            out[i] = v
        return out

    return s_nodes, profile(kappas), profile(grades), ds_eff, bounds


def _integrate_plan(s, kappa, chi0, ds):
    """Heading (exact) and plan coordinates (Gauss-Legendre) on the node grid."""
    n = len(s) - 1
    chi = np.empty(n + 1)
    chi[0] = chi0
    chi[1:] = chi0 + np.cumsum(0.5 * ds * (kappa[:-1] + kappa[1:]))
    k0 = kappa[:-1][:, None]
    dk = (kappa[1:] - kappa[:-1])[:, None]
    # heading inside cell i at fraction f: chi_i + ds*(k0*f + dk*f^2/2)
    f = _GL_X[None, :]
    chi_q = chi[:-1][:, None] + ds * (k0 * f + 0.5 * dk * f * f)
    x = np.concatenate([[0.0], np.cumsum(ds * (np.cos(chi_q) @ _GL_W))])
    y = np.concatenate([[0.0], np.cumsum(ds * (np.sin(chi_q) @ _GL_W))])
    return chi, x, y


def build_track(
    spec,
    grades=None,
    ramp_length: float = 15.0,
    ds: float = 0.25,
    heading0: float = 0.0,
) -> TrackModel:
    """Build a closed C1 track from a segment list.

    ``grades`` optionally gives a per-segment grade angle (rad), smoothed
    with the same ramps as curvature. Raises TrackGeometryError if the
    heading does not close to +/-2 pi or position closure cannot be restored.
    """
    segments = parse_segments(spec)
    if not segments:
        raise TrackGeometryError("empty segment list")
    winding = sum(seg.angle for seg in segments)
    if not (abs(abs(winding) - 2.0 * math.pi) < HEADING_CLOSURE_TOL):
        raise TrackGeometryError(f"arc angles sum to {winding:.6f}, not +/-2 pi")
    grades = np.zeros(len(segments)) if grades is None else np.asarray(grades, dtype=float)
    if len(grades) != len(segments):
        raise TrackGeometryError("grades must match the segment count")

    straights = [i for i, seg in enumerate(segments) if seg.kind == "straight"]
    target_winding = math.copysign(2.0 * math.pi, winding)

    def assemble(segs):
        s, kappa, slope, ds_eff, _ = _kappa_nodes(segs, grades, ramp_length, ds)
        # node sampling of the ramps cuts corners at ~1e-7 rad; spread the
        # defect uniformly so the heading winding closes exactly
        total = float(s[-1])
        got = float(np.trapz(kappa, dx=ds_eff))
        kappa = kappa + (target_winding - got) / total
        chi, x, y = _integrate_plan(s, kappa, heading0, ds_eff)
        return TrackModel(
            s=s, kappa=kappa, chi=chi, slope=slope, x=x, y=y,
            length=total, ds=ds_eff, heading0=heading0,
        )

    def scale_arcs(segs, factor):
        return [
            Segment.arc(seg.radius * factor, seg.angle) if seg.kind == "arc" else seg
            for seg in segs
        ]

    track = assemble(segments)
    for _ in range(8):
        gap = np.array([track.x[-1] - track.x[0], track.y[-1] - track.y[0]])
        if np.linalg.norm(gap) <= 0.5 * POSITION_CLOSURE_TOL:
            break
        # least-norm tweak of the straight lengths plus a common arc-radius
        # scale (angles untouched, so heading closure is preserved); the
        # endpoint is linear in the lengths and near-linear in the scale,
        # hence the short Newton iteration
        bounds = np.concatenate([[0.0], np.cumsum([seg.length for seg in segments])])
        mids = 0.5 * (bounds[:-1] + bounds[1:])
        cols = [
            np.array([math.cos(track.chi_at(mids[i])), math.sin(track.chi_at(mids[i]))])
            for i in straights
        ]
        h = 1e-6
        bumped = assemble(scale_arcs(segments, 1.0 + h))
        cols.append(
            np.array(
                [
                    (bumped.x[-1] - bumped.x[0]) - gap[0],
                    (bumped.y[-1] - bumped.y[0]) - gap[1],
                ]
            )
            / h
        )
        A = np.stack(cols, axis=1)
        delta, *_ = np.linalg.lstsq(A, -gap, rcond=None)
        new_segments = list(segments)
        for i, d in zip(straights, delta[:-1]):
            new_len = segments[i].length + float(d)
            if new_len <= max(ramp_length, 0.0):
                raise TrackGeometryError("closure correction would erase a straight")
            new_segments[i] = Segment.straight(new_len)
        segments = scale_arcs(new_segments, 1.0 + float(delta[-1]))
        track = assemble(segments)
    if track.position_closure > POSITION_CLOSURE_TOL:
        raise TrackGeometryError(
            f"position closure residual {track.position_closure:.3e} after adjustment"
        )
    return track


# ---------------------------------------------------------------------------
# speed profile
# ---------------------------------------------------------------------------

@dataclass
class SpeedProfileLimits:
    mu_max: float = 0.8          # tire cohesion
    a_long_max: float = 4.0      # wheelie-limited longitudinal cap, m/s^2
    p_max: float = 120e3         # engine power, W
    mass: float = 250.0          # bike + rider, kg
    cda: float = 0.45            # drag area, m^2
    rho: float = 1.225           # air density, kg/m^3

    def __post_init__(self):
        if min(self.mu_max, self.a_long_max, self.p_max, self.mass, self.cda, self.rho) <= 0:
            raise InfeasibleProfileError("all speed-profile limits must be positive")

    @property
    def terminal_speed(self) -> float:
        """Speed where drag absorbs the full engine power."""
        return (2.0 * self.p_max / (self.rho * self.cda)) ** (1.0 / 3.0)


@dataclass
class SpeedProfile:
    """Lap-periodic speed along the track: v^2 piecewise linear in s."""

    s: np.ndarray
    v2: np.ndarray
    ds: float
    length: float

    def _cell(self, s):
        sw = np.mod(s, self.length)
        idx = np.minimum((sw / self.ds).astype(int), len(self.s) - 2)
        return idx, (sw - self.s[idx]) / self.ds

    def v_at(self, s):
        idx, f = self._cell(s)
        return np.sqrt((1.0 - f) * self.v2[idx] + f * self.v2[idx + 1])

    def a_at(self, s):
        """Longitudinal acceleration dv/dt = d(v^2)/ds / 2, constant per cell."""
        idx, _ = self._cell(s)
        return (self.v2[idx + 1] - self.v2[idx]) / (2.0 * self.ds)

    @property
    def lap_time(self) -> float:
        t = 0.0
        for i in range(len(self.s) - 1):
            t += _cell_time(self.v2[i], self.v2[i + 1], self.ds)
        return t


def _cell_time(v2a: float, v2b: float, ds: float) -> float:
    a = (v2b - v2a) / (2.0 * ds)
    va = math.sqrt(v2a)
    if abs(a) < 1e-12:
        return ds / va
    return (math.sqrt(v2b) - va) / a


def speed_profile(
    track: TrackModel,
    limits: SpeedProfileLimits,
    g_mag: float = DEFAULT_GRAVITY,
    max_sweeps: int = 40,
    tol: float = 1e-10,
) -> SpeedProfile:
    """Two-pass limit-curve speed profile, iterated to lap periodicity."""
    kappa = np.abs(track.kappa)
    mu_g = limits.mu_max * g_mag
    with np.errstate(divide="ignore"):
        v_lat2 = np.where(kappa > 0, mu_g / np.maximum(kappa, 1e-12), np.inf)
    v_cap2 = np.minimum(v_lat2, limits.terminal_speed**2)
    if np.any(v_cap2 <= 0.25):
        raise InfeasibleProfileError("apex speed limit collapsed below 0.5 m/s")

    ds = track.ds
    n = len(v_cap2) - 1

    def drag_acc(v2):
        return 0.5 * limits.rho * limits.cda * v2 / limits.mass

    def tire_budget(v2, k):
        lat = k * v2 / mu_g
        return mu_g * math.sqrt(max(0.0, 1.0 - lat * lat))

    v2 = v_cap2.copy()
    v2[-1] = v2[0]
    for _ in range(max_sweeps):
        prev = v2.copy()
        # backward: braking feasibility (wraps around the lap)
        for i in range(2 * n, 0, -1):
            j1, j0 = i % n, (i - 1) % n
            vb2 = v2[j1]
            a_br = min(limits.a_long_max, tire_budget(vb2, kappa[j1]) + drag_acc(vb2))
            v2[j0] = min(v2[j0], vb2 + 2.0 * a_br * ds, v_cap2[j0])
        # forward: traction/power feasibility
        for i in range(2 * n):
            j0, j1 = i % n, (i + 1) % n
            va2 = v2[j0]
            va = math.sqrt(va2)
            a_eng = limits.p_max / (limits.mass * va) - drag_acc(va2)
            a_fw = min(limits.a_long_max, a_eng, tire_budget(va2, kappa[j0]))
            v2[j1] = min(v2[j1], va2 + 2.0 * max(a_fw, 0.0) * ds, v_cap2[j1])
        v2[n] = v2[0]
        if np.max(np.abs(v2 - prev)) < tol:
            break
    else:
        raise InfeasibleProfileError("speed profile failed to reach a periodic fixed point")

    if np.any(v2 <= 0.25):
        raise InfeasibleProfileError("speed profile collapsed below 0.5 m/s")
    return SpeedProfile(s=track.s.copy(), v2=v2, ds=ds, length=track.length)


def stadium_track(
    straight: float = 400.0,
    radius: float = 60.0,
    heading0: float = 0.0,
    ramp_length: float = 15.0,
    ds: float = 0.25,
) -> TrackModel:
    """Two straights joined by two half circles; the package's standard circuit."""
    spec = [
        ("straight", straight),
        ("arc", radius, math.pi),
        ("straight", straight),
        ("arc", radius, math.pi),
    ]
    return build_track(spec, ramp_length=ramp_length, ds=ds, heading0=heading0)
