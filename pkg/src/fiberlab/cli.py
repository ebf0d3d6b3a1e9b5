"""Command-line front end: ``fiberlab run | report | validate``.

Configs are JSON files mirroring :class:`fiberlab.experiment.ExperimentConfig`
(nested objects for link/pulse/wdm/shaping/selection/dbp/cpr/forward_plan;
omitted fields take their defaults).  The cache directory comes from
``--cache-dir`` or the ``FIBERLAB_CACHE_DIR`` environment variable.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .experiment import (CSV_COLUMNS, ResultRecord, config_from_dict,
                         config_hash, emit_report, peak_se, run_step_sweep,
                         run_sweep, validate_config)


def _load_config(path: str):
    data = json.loads(Path(path).read_text())
    return config_from_dict(data)


def _cmd_run(args) -> int:
    cfg = _load_config(args.config)
    powers = None
    if args.powers:
        powers = [float(p) for p in args.powers.split(",") if p.strip()]
    out = Path(args.out)

    if args.dbp_steps:
        step_grid = [int(s) for s in args.dbp_steps.split(",") if s.strip()]
        series, records = run_step_sweep(cfg, step_grid, powers=powers,
                                         cache_dir=args.cache_dir,
                                         jobs=args.jobs)
        emit_report(records, out)
        lines = ["n_steps,rm_per_2d,peak_se_bits_s_hz,peak_power_dbm"]
        for row in series:
            if "error" in row:
                print(f"step count {row['n_steps']} failed: {row['error']}",
                      file=sys.stderr)
                continue
            lines.append(f"{row['n_steps']},{row['rm_per_2d']!r},"
                         f"{row['peak_se_bits_s_hz']!r},"
                         f"{row['peak_power_dbm']!r}")
            print(f"Nst={row['n_steps']:4d}: {row['rm_per_2d']:9.1f} RM/2D, "
                  f"peak SE {row['peak_se_bits_s_hz']:.4f} bit/s/Hz")
        out.mkdir(parents=True, exist_ok=True)
        (out / "se_vs_complexity.csv").write_text("\n".join(lines) + "\n")
        return 0

    seeds = [args.seed] if args.seed is not None else None
    records, failures = run_sweep(cfg, powers=powers, seeds=seeds,
                                  cache_dir=args.cache_dir, jobs=args.jobs)
    if not records and not failures:
        print("warning: empty power sweep, nothing to do")
        return 0
    emit_report(records, out, failures)
    print(f"config {config_hash(cfg)}: {len(records)} points -> {out}/results.csv")
    if records:
        p_star, se_star = peak_se(records)
        print(f"peak SE {se_star:.4f} bit/s/Hz at {p_star:.2f} dBm")
    for f in failures:
        print(f"point failed: power={f['power_dbm']} seed={f['seed']}: "
              f"{f['error']}", file=sys.stderr)
    return 0 if not failures else 1


def _cmd_report(args) -> int:
    src = Path(args.infile)
    rows = []
    with src.open() as fh:
        header = fh.readline().strip().split(",")
        if header != list(CSV_COLUMNS):
            print(f"unexpected CSV schema: {header}", file=sys.stderr)
            return 1
        for line in fh:
            parts = line.strip().split(",")
            if not parts or parts == [""]:
                continue
            rows.append(ResultRecord(
                config_hash=parts[0], modulation=parts[1],
                power_dbm=float(parts[2]), seed=int(parts[3]),
                se_bits_s_hz=float(parts[4]), air_4d=float(parts[5]),
                effective_snr_db=float(parts[6]), rm_per_2d=float(parts[7]),
                wall_time_s=float(parts[8])))
    written = emit_report(rows, args.out)
    print(f"{len(rows)} records -> {len(written)} files in {args.out}")
    return 0


def _cmd_validate(args) -> int:
    cfg = _load_config(args.config)
    issues = validate_config(cfg)
    errors = [m for m in issues if not m.startswith("warning")]
    for m in issues:
        print(m)
    if errors:
        print(f"INVALID: {len(errors)} blocking issue(s)")
        return 1
    print(f"OK: config {config_hash(cfg)} is runnable")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="fiberlab", description=__doc__)
    sub = ap.add_subparsers(dest="command", required=True)

    p_run = sub.add_parser("run", help="run a launch-power sweep")
    p_run.add_argument("--config", required=True)
    p_run.add_argument("--out", required=True)
    p_run.add_argument("--seed", type=int, default=None)
    p_run.add_argument("--powers", default=None,
                       help="comma-separated dBm values overriding the config")
    p_run.add_argument("--dbp-steps", default=None,
                       help="comma-separated step counts: emit peak SE vs "
                            "RM/2D instead of a single power sweep (0 = CDC)")
    p_run.add_argument("--jobs", type=int, default=1)
    p_run.add_argument("--cache-dir", default=None)
    p_run.set_defaults(func=_cmd_run)

    p_rep = sub.add_parser("report", help="re-emit series/summary from a CSV")
    p_rep.add_argument("--in", dest="infile", required=True)
    p_rep.add_argument("--out", required=True)
    p_rep.set_defaults(func=_cmd_report)

    p_val = sub.add_parser("validate", help="check a config for feasibility")
    p_val.add_argument("--config", required=True)
    p_val.set_defaults(func=_cmd_validate)

    args = ap.parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    raise SystemExit(main())
