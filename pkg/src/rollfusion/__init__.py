"""Motorbike roll-angle estimation from GNSS and inertial data.

A two-stage observer (coordinated-manoeuvre pre-filter feeding a quaternion
EKF), a synthetic trajectory/sensor simulator, literature baseline
estimators, and analysis tooling for comparative evaluation.
"""

from .config import RunConfig, default_config, load_config
from .ekf import EkfTuning, ObserverState, RollObserver
from .geometry import (
    EulerAngles,
    euler_from_quat,
    quat_from_euler,
    quat_rate_jacobian,
    quat_rate_matrix,
    rotation_from_euler,
)
from .kinematics import (
    GravityModel,
    InertialVelocityExtended,
    KinematicStateExtended,
    LapCounters,
    aero_from_velocity,
    course_continuous,
    f_theta,
    phi_a,
    phi_av,
    phi_v,
    velocity_from_aero,
)
from .noise import NoiseParams, SensorStream, TABLE_I_ACCEL, TABLE_I_GNSS, TABLE_I_GYRO, corrupt
from .pipeline import CompareResult, EstimateResult, compare, estimate, simulate
from .prefilter import PreFilter, PrefilterConfig, PrefilterOutput, build_design
from .simulate import TrajectoryTruth, generate_truth
from .track import SpeedProfileLimits, build_track, speed_profile, stadium_track

__version__ = "0.1.0"

__all__ = [
    "RunConfig",
    "default_config",
    "load_config",
    "EkfTuning",
    "ObserverState",
    "RollObserver",
    "EulerAngles",
    "euler_from_quat",
    "quat_from_euler",
    "quat_rate_jacobian",
    "quat_rate_matrix",
    "rotation_from_euler",
    "GravityModel",
    "InertialVelocityExtended",
    "KinematicStateExtended",
    "LapCounters",
    "aero_from_velocity",
    "course_continuous",
    "f_theta",
    "phi_a",
    "phi_av",
    "phi_v",
    "velocity_from_aero",
    "NoiseParams",
    "SensorStream",
    "TABLE_I_ACCEL",
    "TABLE_I_GNSS",
    "TABLE_I_GYRO",
    "corrupt",
    "CompareResult",
    "EstimateResult",
    "compare",
    "estimate",
    "simulate",
    "PreFilter",
    "PrefilterConfig",
    "PrefilterOutput",
    "build_design",
    "TrajectoryTruth",
    "generate_truth",
    "SpeedProfileLimits",
    "build_track",
    "speed_profile",
    "stadium_track",
]
