"""CSV telemetry schemas: sensor streams, truth, estimates, errors, spectra.

All files are UTF-8 CSV with a header row, '.' decimal separator, SI units,
angles in radians. Floats are written with repr-level precision so identical
runs produce byte-identical files.
"""

from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import DataError
from .noise import SensorStream
from .simulate import TrajectoryTruth

_FMT = "%.17g"

TELEMETRY_BASE = [
    "t",
    "y_a_x", "y_a_y", "y_a_z",
    "y_g_x", "y_g_y", "y_g_z",
    "y_s_x", "y_s_y", "y_s_z",
]
TELEMETRY_TRUTH = ["phi", "theta", "psi", "omega_x", "omega_y", "omega_z", "v_x", "v_y", "v_z"]

TRUTH_COLUMNS = (
    ["t", "s"]
    + ["v_x", "v_y", "v_z", "vdot_x", "vdot_y", "vdot_z"]
    + ["v_mag", "gamma", "chi", "v_mag_dot", "gamma_dot", "chi_dot"]
    + ["phi", "theta", "psi", "omega_x", "omega_y", "omega_z"]
    + ["a_x", "a_y", "a_z", "delta_phi"]
)


def _fmt(x: float) -> str:
    if np.isnan(x):
        return ""
    return _FMT % x


def _write_rows(path, header, rows) -> None:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def write_telemetry(path, stream: SensorStream, truth: TrajectoryTruth | None = None) -> None:
    """Write a measurement stream, optionally with aligned truth columns."""
    header = list(TELEMETRY_BASE)
    if truth is not None:
        if len(truth) != len(stream):
            raise DataError("truth and stream lengths differ")
        header += TELEMETRY_TRUTH
    rows = []
    for i in range(len(stream)):
        row = [_fmt(stream.t[i])]
        row += [_fmt(v) for v in stream.y_a[i]]
        row += [_fmt(v) for v in stream.y_g[i]]
        row += [_fmt(v) for v in stream.y_s[i]]
        if truth is not None:
            row += [_fmt(v) for v in truth.euler[i]]
            row += [_fmt(v) for v in truth.omega[i]]
            row += [_fmt(v) for v in truth.vel[i]]
        rows.append(row)
    _write_rows(path, header, rows)


def read_telemetry(path) -> SensorStream:
    """Read a telemetry CSV back into a SensorStream (truth columns ignored)."""
    try:
        with open(path, "r", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader, None)
            if header is None:
                raise DataError(f"{path}: empty telemetry file")
            if header[: len(TELEMETRY_BASE)] != TELEMETRY_BASE:
                raise DataError(f"{path}: unexpected telemetry header {header[:10]}")
            raw = list(reader)
    except OSError as exc:
        raise DataError(f"cannot read telemetry: {exc}") from exc
    if not raw:
        raise DataError(f"{path}: telemetry has no samples")

    n = len(raw)
    t = np.empty(n)
    y_a = np.empty((n, 3))
    y_g = np.empty((n, 3))
    y_s = np.full((n, 3), np.nan)
    for i, row in enumerate(raw):
        if len(row) < len(TELEMETRY_BASE):
            raise DataError(f"{path}: short row {i + 2}")
        t[i] = float(row[0])
        y_a[i] = [float(v) for v in row[1:4]]
        y_g[i] = [float(v) for v in row[4:7]]
        if row[7] != "":
            y_s[i] = [float(v) for v in row[7:10]]
    if np.any(np.diff(t) <= 0):
        raise DataError(f"{path}: time column is not strictly increasing")
    present = ~np.isnan(y_s[:, 0])
    return SensorStream(t=t, y_a=y_a, y_g=y_g, y_s=y_s, gnss_present=present)


def write_truth(path, truth: TrajectoryTruth) -> None:
    rows = []
    for i in range(len(truth)):
        row = [truth.t[i], truth.s[i], *truth.vel[i], *truth.vel_dot[i],
               *truth.xi_e[i], *truth.euler[i], *truth.omega[i],
               *truth.a_body[i], truth.delta_phi[i]]
        rows.append([_fmt(v) for v in row])
    _write_rows(path, TRUTH_COLUMNS, rows)


def read_truth(path) -> TrajectoryTruth:
    try:
        data = np.genfromtxt(path, delimiter=",", names=True)
    except OSError as exc:
        raise DataError(f"cannot read truth: {exc}") from exc
    if data.size == 0:
        raise DataError(f"{path}: truth file has no samples")
    cols = {name: np.atleast_1d(data[name]) for name in data.dtype.names}
    missing = [c for c in ("t", "s", "phi") if c not in cols]
    if missing:
        raise DataError(f"{path}: truth file missing columns {missing}")
    t = cols["t"]
    dt = float(t[1] - t[0]) if len(t) > 1 else 0.01
    stack3 = lambda a, b, c: np.stack([cols[a], cols[b], cols[c]], axis=1)
    xi_e = np.stack(
        [cols[k] for k in ("v_mag", "gamma", "chi", "v_mag_dot", "gamma_dot", "chi_dot")], axis=1
    )
    return TrajectoryTruth(
        t=t,
        s=cols["s"],
        vel=stack3("v_x", "v_y", "v_z"),
        vel_dot=stack3("vdot_x", "vdot_y", "vdot_z"),
        xi_e=xi_e,
        euler=stack3("phi", "theta", "psi"),
        omega=stack3("omega_x", "omega_y", "omega_z"),
        a_body=stack3("a_x", "a_y", "a_z"),
        phi=cols["phi"],
        delta_phi=cols["delta_phi"],
        dt=dt,
        g_mag=float("nan"),
        lap_time=float("nan"),
        track_length=float("nan"),
        k_rider=float("nan"),
    )


def write_table(path, columns: dict[str, np.ndarray]) -> None:
    """Write named columns (estimates, errors, spectra) as CSV."""
    names = list(columns)
    arrays = [np.asarray(columns[k], dtype=float) for k in names]
    n = len(arrays[0])
    if any(len(a) != n for a in arrays):
        raise DataError("table columns have differing lengths")
    rows = ([_fmt(a[i]) for a in arrays] for i in range(n))
    _write_rows(path, names, rows)
