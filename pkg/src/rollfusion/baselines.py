"""Reference roll estimators from the comparison literature.

Five closed-form (or implicit) roll estimates computed from the body-axis
speed projection and raw gyroscope channels. They share the flat-coordinated-
turn modelling territory with the main estimator but ignore the rider offset
and consume gyro noise/bias directly, which is what puts low-frequency
content into their error spectra.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import OutOfRangeError
from .kinematics import DEFAULT_GRAVITY

PHI4_TOL = 1e-10


@dataclass
class BaselineInput:
    v_x_body: float          # speed projection on the body x axis, m/s
    y_g: np.ndarray          # raw gyroscope sample, rad/s
    g_mag: float = DEFAULT_GRAVITY


def phi_1(inp: BaselineInput) -> float:
    """Yaw-rate estimator: -atan(v inhibited by the z gyro over g)."""
    return -math.atan(inp.v_x_body * inp.y_g[2] / inp.g_mag)


def phi_2(inp: BaselineInput) -> float:
    """Pitch-rate estimator via the half-angle identity on the y gyro."""
    big_phi = inp.v_x_body * abs(inp.y_g[1]) / (2.0 * inp.g_mag)
    arg = math.sqrt(1.0 + big_phi * big_phi) - big_phi
    # algebraic identity: sqrt(1 + x^2) - x is in (0, 1] for x >= 0
    assert 0.0 < arg <= 1.0
    return -_sign(inp.y_g[2]) * math.acos(arg)


def phi_3(inp: BaselineInput) -> float:
    """Combined y/z gyro magnitude estimator."""
    rate = _sign(inp.y_g[2]) * math.hypot(inp.y_g[1], inp.y_g[2])
    return -math.atan(inp.v_x_body * rate / inp.g_mag)


def _phi4_lhs(x: float) -> float:
    return math.tan(0.9 * x) * math.cos(x)


def _phi4_dlhs(x: float) -> float:
    c9 = math.cos(0.9 * x)
    return 0.9 * math.cos(x) / (c9 * c9) - math.tan(0.9 * x) * math.sin(x)


@lru_cache(maxsize=1)
def _phi4_peak() -> tuple[float, float]:
    """Argmax of tan(0.9 x) cos(x) on (0, pi/1.8); the lhs is monotone inside."""
    lo, hi = 0.5, math.pi / 1.8 - 1e-9
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if _phi4_dlhs(mid) > 0.0:
            lo = mid
        else:
            hi = mid
    xp = 0.5 * (lo + hi)
    return xp, _phi4_lhs(xp)


def phi4_bracket() -> tuple[float, float]:
    """Symmetric bracket on which the implicit equation has a unique root."""
    xp, _ = _phi4_peak()
    return -xp, xp


def phi_4(inp: BaselineInput) -> float:
    """Heuristically warped yaw-rate estimator, solved implicitly.

    Bisection on the monotone bracket with a Newton polish; targets beyond
    the lhs range raise OutOfRangeError.
    """
    target = -(inp.v_x_body * inp.y_g[2] / inp.g_mag)
    xp, peak = _phi4_peak()
    if abs(target) > peak:
        raise OutOfRangeError(f"phi_4 target {target:.4f} outside attainable range ±{peak:.4f}")
    lo, hi = -xp, xp
    for _ in range(60):
        mid = 0.5 * (lo + hi)
        if _phi4_lhs(mid) < target:
            lo = mid
        else:
            hi = mid
    x = 0.5 * (lo + hi)
    for _ in range(4):
        f = _phi4_lhs(x) - target
        d = _phi4_dlhs(x)
        if d == 0.0:
            break
        step = f / d
        x_new = x - step
        if not lo <= x_new <= hi:
            break
        x = x_new
        if abs(step) < PHI4_TOL / 4:
            break
    if abs(_phi4_lhs(x) - target) > PHI4_TOL:
        raise OutOfRangeError("phi_4 refinement failed to meet tolerance")
    return x


def phi_4_clamped(inp: BaselineInput) -> float:
    """phi_4 with targets beyond the formula's range saturated at the bracket edge.

    Raw gyro noise routinely pushes the implicit equation's target outside
    its attainable range; the comparison pipeline needs a defined series.
    """
    try:
        return phi_4(inp)
    except OutOfRangeError:
        target = -(inp.v_x_body * inp.y_g[2] / inp.g_mag)
        xp, _ = _phi4_peak()
        return math.copysign(xp, target)


def phi_5(inp: BaselineInput) -> float:
    """Gaussian-weighted blend of phi_1 with an arcsine of the gyro direction."""
    p1 = phi_1(inp)
    w = math.exp(-25.0 * p1 * p1)
    norm = math.hypot(inp.y_g[1], inp.y_g[2])
    if norm == 0.0:
        return w * p1
    arcs = math.asin(inp.y_g[1] / norm)
    return w * p1 - (1.0 - w) * _sign(inp.y_g[2]) * arcs


def _sign(x: float) -> float:
    return math.copysign(1.0, x) if x != 0.0 else 0.0


ALL_BASELINES = {
    "phi_1": phi_1,
    "phi_2": phi_2,
    "phi_3": phi_3,
    "phi_4": phi_4_clamped,
    "phi_5": phi_5,
}


def baseline_series(
    v_x_body: np.ndarray, y_g: np.ndarray, g_mag: float = DEFAULT_GRAVITY
) -> dict[str, np.ndarray]:
    """Evaluate all five baselines along a run."""
    n = len(v_x_body)
    out = {name: np.empty(n) for name in ALL_BASELINES}
    for i in range(n):
        inp = BaselineInput(float(v_x_body[i]), y_g[i], g_mag)
        for name, fn in ALL_BASELINES.items():
            out[name][i] = fn(inp)
    return out
