"""Command-line entry point: simulate | estimate | compare | validate | config.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 invariant
violation (including validate failures).
"""

from __future__ import annotations

import argparse
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import checks, pipeline, telemetry
from .config import RunConfig, apply_override, dump_config, load_config
from .errors import ConfigError, DataError, InvariantViolation, RollFusionError


def _load(args) -> RunConfig:
    cfg = load_config(args.config)
    for item in args.set or []:
        cfg = apply_override(cfg, item)
    if getattr(args, "seed", None) is not None:
        cfg.sim = replace(cfg.sim, seed=args.seed)
    if getattr(args, "laps", None) is not None:
        cfg.sim = replace(cfg.sim, n_laps=args.laps)
    if getattr(args, "lam", None) is not None:
        cfg.ekf = replace(cfg.ekf, lam=args.lam)
    if getattr(args, "out", None) is not None:
        cfg.output_dir = args.out
    return cfg.validate()


def cmd_simulate(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    truth, stream = pipeline.simulate(cfg)
    telemetry.write_truth(out / "truth.csv", truth)
    telemetry.write_telemetry(out / "telemetry.csv", stream)
    print(f"simulated {len(truth)} samples ({truth.t[-1]:.1f} s, lap {truth.lap_time:.2f} s)")
    print(f"wrote {out / 'truth.csv'} and {out / 'telemetry.csv'}")
    return 0


def cmd_estimate(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    stream = telemetry.read_telemetry(args.telemetry)
    est = pipeline.estimate(stream, cfg)
    telemetry.write_table(out / "estimates.csv", est.columns())
    n_valid = int(est.valid.sum())
    print(f"estimated {n_valid}/{len(stream)} samples; wrote {out / 'estimates.csv'}")
    return 0


def cmd_compare(args) -> int:
    cfg = _load(args)
    out = Path(cfg.output_dir)
    trials = max(1, args.trials)
    rows = []
    for k in range(trials):
        run_cfg = cfg
        if trials > 1:
            run_cfg = replace(cfg)
            run_cfg.sim = replace(cfg.sim, seed=cfg.sim.seed + k)
        if args.telemetry is not None and trials == 1:
            stream = telemetry.read_telemetry(args.telemetry)
            truth = telemetry.read_truth(args.truth)
        else:
            truth, stream = pipeline.simulate(run_cfg)
        res = pipeline.compare(truth, stream, run_cfg)
        suffix = "" if trials == 1 else f"_{k}"
        telemetry.write_table(
            out / f"errors{suffix}.csv", {"t": res.t, **res.errors}
        )
        spec_cols = {"freq": next(iter(res.spectra.values())).freq}
        for name, rep in res.spectra.items():
            spec_cols[f"amp_{name}"] = rep.amplitude
        telemetry.write_table(out / f"spectra{suffix}.csv", spec_cols)

        print(f"seed {run_cfg.sim.seed}: steady-state roll error (deg) and low-band energy:")
        for name, (mean, std) in res.stats.items():
            low = res.spectra[name].low_band_energy
            rows.append((run_cfg.sim.seed, name, mean, std, low))
            print(
                f"  {name:8s} mean {math.degrees(mean):+7.3f}  std {math.degrees(std):6.3f}"
                f"  low-band {low:.3e} rad^2"
            )
    telemetry.write_table(
        out / "stats.csv",
        {
            "seed": np.array([r[0] for r in rows], dtype=float),
            "estimator": np.arange(len(rows), dtype=float),  # index; names in order printed
            "mean_rad": np.array([r[2] for r in rows]),
            "std_rad": np.array([r[3] for r in rows]),
            "low_band_energy": np.array([r[4] for r in rows]),
        },
    )
    return 0


def cmd_validate(args) -> int:
    _ = _load(args)  # surface config errors with exit code 2
    results = checks.run_all()
    width = max(len(r.name) for r in results)
    failed = 0
    for r in results:
        status = "PASS" if r.passed else "FAIL"
        print(f"{r.name:<{width}}  {status}  {r.detail}")
        failed += 0 if r.passed else 1
    print(f"{len(results) - failed}/{len(results)} checks passed")
    return 0 if failed == 0 else 4


def cmd_config(args) -> int:
    cfg = _load(args)
    print(dump_config(cfg), end="")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="rollfusion",
        description="Motorbike roll-angle estimation: simulate, estimate, compare, validate.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, seedable=True):
        p.add_argument("-c", "--config", help="YAML run configuration", default=None)
        p.add_argument("--set", action="append", metavar="KEY.PATH=VALUE",
                       help="override a config key (repeatable)")
        p.add_argument("-o", "--out", help="output directory", default=None)
        if seedable:
            p.add_argument("--seed", type=int, default=None)
            p.add_argument("--laps", type=float, default=None)
            p.add_argument("--lam", type=float, default=None,
                           help="EKF inter-matrix weight (the hand-tuned scalar)")

    p_sim = sub.add_parser("simulate", help="generate truth.csv and telemetry.csv")
    common(p_sim)
    p_sim.set_defaults(func=cmd_simulate)

    p_est = sub.add_parser("estimate", help="run the observer over a telemetry file")
    p_est.add_argument("telemetry", help="telemetry.csv from simulate (or recorded)")
    common(p_est)
    p_est.set_defaults(func=cmd_estimate)

    p_cmp = sub.add_parser("compare", help="error series and spectra for all estimators")
    p_cmp.add_argument("telemetry", nargs="?", default=None,
                       help="telemetry.csv (omit to simulate internally)")
    p_cmp.add_argument("truth", nargs="?", default=None, help="truth.csv matching the telemetry")
    p_cmp.add_argument("--trials", type=int, default=1,
                       help="fan out N independent seeded simulate+compare runs")
    common(p_cmp)
    p_cmp.set_defaults(func=cmd_compare)

    p_val = sub.add_parser("validate", help="run the module invariant suite")
    common(p_val, seedable=False)
    p_val.set_defaults(func=cmd_validate)

    p_cfg = sub.add_parser("config", help="print the effective configuration")
    common(p_cfg)
    p_cfg.set_defaults(func=cmd_config)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    if getattr(args, "command", None) == "compare":
        if (args.telemetry is None) != (args.truth is None):
            print("compare needs both telemetry and truth files, or neither", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 3
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 4
    except RollFusionError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
