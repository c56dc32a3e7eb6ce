"""Run configuration: defaults, YAML loading, and dotted-path overrides."""

from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import yaml

from .errors import ConfigError
from .kinematics import (
    DEFAULT_COORDINATION_FLOOR,
    DEFAULT_GRAVITY,
    DEFAULT_SPEED_FLOOR,
)
from .noise import NoiseParams, TABLE_I_ACCEL, TABLE_I_GNSS, TABLE_I_GYRO


@dataclass
class TrackSection:
    segments: list = field(
        default_factory=lambda: [
            ["straight", 400.0],
            ["arc", 60.0, math.pi],
            ["straight", 400.0],
            ["arc", 60.0, math.pi],
        ]
    )
    grades: list | None = None
    ramp_length: float = 15.0
    ds: float = 0.25
    heading0: float = 0.0


@dataclass
class LimitsSection:
    mu_max: float = 0.8
    a_long_max: float = 4.0
    p_max: float = 120e3
    mass: float = 250.0
    cda: float = 0.45
    rho: float = 1.225


@dataclass
class SimSection:
    dt: float = 0.01
    n_laps: float = 2.0
    k_rider: float = 0.1
    side_slip: float = 0.0
    gravity: float = DEFAULT_GRAVITY
    seed: int = 12345
    duration: float | None = None


@dataclass
class SensorSection:
    white: list | float = 0.0
    bias_instability: float = 0.0
    tau_corr: float = 0.0
    walk: float = 0.0
    sigma0: float = 0.0
    ts: float = 0.01
    white_is_density: bool = True

    def to_params(self) -> NoiseParams:
        white = np.asarray(self.white, dtype=float) if isinstance(self.white, list) else float(self.white)
        return NoiseParams(
            white=white,
            bias_instability=self.bias_instability,
            tau_corr=self.tau_corr,
            walk=self.walk,
            sigma0=self.sigma0,
            ts=self.ts,
            white_is_density=self.white_is_density,
        )

    @classmethod
    def from_params(cls, p: NoiseParams) -> "SensorSection":
        w = p.white
        return cls(
            white=list(np.asarray(w, dtype=float)) if np.ndim(w) else float(w),
            bias_instability=p.bias_instability,
            tau_corr=p.tau_corr,
            walk=p.walk,
            sigma0=p.sigma0,
            ts=p.ts,
            white_is_density=p.white_is_density,
        )


@dataclass
class SensorsSection:
    gyro: SensorSection = field(default_factory=lambda: SensorSection.from_params(TABLE_I_GYRO))
    accel: SensorSection = field(default_factory=lambda: SensorSection.from_params(TABLE_I_ACCEL))
    gnss: SensorSection = field(default_factory=lambda: SensorSection.from_params(TABLE_I_GNSS))
    gyro_bias_init: list | None = None
    gnss_dropouts: list = field(default_factory=list)  # [[t_start, t_end], ...]


@dataclass
class PrefilterSection:
    n: int = 5
    tau: float = 0.1
    v_floor: float = DEFAULT_SPEED_FLOOR
    a_floor: float = DEFAULT_COORDINATION_FLOOR
    refractory: float = 1.0
    max_staleness: int = 10
    force_flat: bool = False


@dataclass
class EkfSection:
    lam: float = 1.0
    s0: float = 1.0
    eps_factor: float = 1e-6
    bias_walk_psd: float = 5e-7


@dataclass
class CompareSection:
    f_lo: float = 0.5
    baseline_speed: str = "truth"  # "truth" or "reconstructed" v_x^B source
    settle_laps: float = 1.0       # laps excluded from steady-state statistics


@dataclass
class RunConfig:
    track: TrackSection = field(default_factory=TrackSection)
    limits: LimitsSection = field(default_factory=LimitsSection)
    sim: SimSection = field(default_factory=SimSection)
    sensors: SensorsSection = field(default_factory=SensorsSection)
    prefilter: PrefilterSection = field(default_factory=PrefilterSection)
    ekf: EkfSection = field(default_factory=EkfSection)
    compare: CompareSection = field(default_factory=CompareSection)
    output_dir: str = "out"

    def validate(self) -> "RunConfig":
        if self.prefilter.n < 3:
            raise ConfigError("prefilter.n must be at least 3")
        ratio = self.prefilter.tau / self.sim.dt
        if abs(ratio - round(ratio)) > 1e-9:
            raise ConfigError("prefilter.tau must be an integer multiple of sim.dt")
        if self.sensors.gnss.ts != self.prefilter.tau:
            raise ConfigError("sensors.gnss.ts must equal prefilter.tau")
        if self.compare.baseline_speed not in ("truth", "reconstructed"):
            raise ConfigError("compare.baseline_speed must be 'truth' or 'reconstructed'")
        for iv in self.sensors.gnss_dropouts:
            if len(iv) != 2 or iv[0] >= iv[1]:
                raise ConfigError("gnss_dropouts entries must be [t_start, t_end) with t_start < t_end")
        return self


def default_config() -> RunConfig:
    return RunConfig()


def _from_dict(cls, data: dict):
    if not isinstance(data, dict):
        raise ConfigError(f"expected a mapping for {cls.__name__}, got {type(data).__name__}")
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(data) - set(fields)
    if unknown:
        raise ConfigError(f"unknown keys in {cls.__name__}: {sorted(unknown)}")
    kwargs = {}
    for name, value in data.items():
        ftype = fields[name].type
        if dataclasses.is_dataclass(_SECTION_TYPES.get(name)) and isinstance(value, dict):
            kwargs[name] = _from_dict(_SECTION_TYPES[name], value)
        else:
            kwargs[name] = value
    return cls(**kwargs)


_SECTION_TYPES = {
    "track": TrackSection,
    "limits": LimitsSection,
    "sim": SimSection,
    "sensors": SensorsSection,
    "prefilter": PrefilterSection,
    "ekf": EkfSection,
    "compare": CompareSection,
    "gyro": SensorSection,
    "accel": SensorSection,
    "gnss": SensorSection,
}


def config_from_dict(data: dict) -> RunConfig:
    return _from_dict(RunConfig, data or {}).validate()


def config_to_dict(cfg: RunConfig) -> dict:
    return dataclasses.asdict(cfg)


def load_config(path: str | Path | None) -> RunConfig:
    """Load a YAML config file; missing keys take the documented defaults."""
    if path is None:
        return default_config().validate()
    try:
        with open(path, "r", encoding="utf-8") as fh:
            data = yaml.safe_load(fh)
    except FileNotFoundError as exc:
        raise ConfigError(f"config file not found: {path}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from exc
    try:
        return config_from_dict(data or {})
    except TypeError as exc:
        raise ConfigError(str(exc)) from exc


def dump_config(cfg: RunConfig) -> str:
    return yaml.safe_dump(config_to_dict(cfg), sort_keys=False)


def apply_override(cfg: RunConfig, dotted: str) -> RunConfig:
    """Apply one 'a.b.c=value' override; values parse as YAML scalars."""
    if "=" not in dotted:
        raise ConfigError(f"override {dotted!r} is not of the form key.path=value")
    path, raw = dotted.split("=", 1)
    value = yaml.safe_load(raw)
    data = config_to_dict(cfg)
    node = data
    keys = path.strip().split(".")
    for key in keys[:-1]:
        if key not in node or not isinstance(node[key], dict):
            raise ConfigError(f"unknown config section {key!r} in override {dotted!r}")
        node = node[key]
    if keys[-1] not in node:
        raise ConfigError(f"unknown config key {keys[-1]!r} in override {dotted!r}")
    node[keys[-1]] = value
    return config_from_dict(data)
