"""``track`` command: run experiments, recompute metrics, validate configs.

Exit codes: 0 success, 2 configuration error, 3 every replication failed numerically.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict
from pathlib import Path

from .association import NUMERICAL_ERRORS
from .config import ConfigError, build, load
from .metrics import SCALAR_FIELDS, TRACK_FIELDS, RunMetrics, aggregate, compute_metrics
from .runner import RunLog, read_cue_stream, run_replication, write_cue_stream

log = logging.getLogger("bmdtrack")

EXIT_OK, EXIT_CONFIG, EXIT_NUMERICAL = 0, 2, 3
RUN_CONFIG = "run_config.json"


def _rep_dir(out: Path, rep: int) -> Path:
    return out / f"rep_{rep:03d}"


def _replicate(doc: dict, rep: int, seed: int, out: str, cues_path: str | None) -> dict:
    """Worker: one isolated replication writing its own shard."""
    exp = build(doc)
    shard = _rep_dir(Path(out), rep)
    cues = read_cue_stream(Path(cues_path)) if cues_path else None
    try:
        run, used = run_replication(exp.scenario, exp.tracker, seed, cues)
    except NUMERICAL_ERRORS as exc:
        return {"rep": rep, "seed": seed, "failed": True, "error": str(exc)}
    run.write(shard)
    write_cue_stream(used, shard / "cue_stream.jsonl")
    m = compute_metrics(run, exp.settle_time)
    failed = m.empty and m.numerical_events > 0
    return {"rep": rep, "seed": seed, "failed": failed, "metrics": m}


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def write_outputs(out: Path, records: list) -> None:
    """summary.csv, tracks.csv, aggregate.csv and metrics.json from per-rep records."""
    ok = [r for r in records if "metrics" in r]
    with open(out / "summary.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", "seed", *SCALAR_FIELDS])
        for r in ok:
            s = r["metrics"].scalars()
            w.writerow([r["rep"], r["seed"], *(_fmt(s[k]) for k in SCALAR_FIELDS)])
    with open(out / "tracks.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["rep", *TRACK_FIELDS])
        for r in ok:
            for t in r["metrics"].per_track:
                d = asdict(t)
                w.writerow([r["rep"], *(_fmt(d[k]) for k in TRACK_FIELDS)])
    agg = aggregate([r["metrics"] for r in ok])
    with open(out / "aggregate.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["metric", "mean", "stderr", "n"])
        for k in SCALAR_FIELDS:
            a = agg[k]
            w.writerow([k, _fmt(a["mean"]), _fmt(a["stderr"]), a["n"]])
    summary = {
        "replications": [
            {"rep": r["rep"], "seed": r["seed"], "failed": r["failed"], **({"metrics": asdict(r["metrics"])} if "metrics" in r else {"error": r.get("error")})}
            for r in records
        ],
        "aggregate": agg,
    }
    with open(out / "metrics.json", "w") as fh:
        json.dump(summary, fh, indent=2, sort_keys=True)
        fh.write("\n")


def cmd_run(args) -> int:
    try:
        doc, _ = load(args.scenario)
        if args.filter:
            doc = {**doc, "tracker": {**doc.get("tracker", {}), "filter": args.filter}}
        build(doc)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    if args.reps < 1:
        print("config error: --reps: must be at least 1", file=sys.stderr)
        return EXIT_CONFIG
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    base = doc.get("seed", 0) if args.seed is None else args.seed
    seeds = [base + r for r in range(args.reps)]
    with open(out / RUN_CONFIG, "w") as fh:
        json.dump({"config": doc, "seeds": seeds, "cues": args.cues}, fh, indent=2, sort_keys=True)
        fh.write("\n")
    jobs = [(doc, r, s, str(out), args.cues) for r, s in enumerate(seeds)]
    if args.jobs > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            records = list(pool.map(_replicate, *zip(*jobs)))
    else:
        records = [_replicate(*j) for j in jobs]
    write_outputs(out, records)
    for r in records:
        if r["failed"]:
            log.error("replication %d (seed %d) failed: %s", r["rep"], r["seed"], r.get("error", "no tracks"))
    if all(r["failed"] for r in records):
        return EXIT_NUMERICAL
    agg = aggregate([r["metrics"] for r in records if "metrics" in r])
    print(f"{len(records)} replication(s) written to {out}")
    for k in ("pos_rmse", "vel_rmse", "nees", "purity", "confirmed_final"):
        a = agg[k]
        if a["mean"] is not None:
            print(f"  {k}: {a['mean']:.6g} +/- {a['stderr']:.3g}")
    return EXIT_OK


def cmd_metrics(args) -> int:
    run_dir = Path(args.run)
    try:
        with open(run_dir / RUN_CONFIG) as fh:
            meta = json.load(fh)
        exp = build(meta["config"])
    except (OSError, json.JSONDecodeError, KeyError) as exc:
        print(f"config error: {run_dir / RUN_CONFIG}: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    records = []
    for rep, seed in enumerate(meta["seeds"]):
        shard = _rep_dir(run_dir, rep)
        if not shard.exists():
            records.append({"rep": rep, "seed": seed, "failed": True, "error": "missing logs"})
            continue
        m: RunMetrics = compute_metrics(RunLog.read(shard), exp.settle_time)
        records.append({"rep": rep, "seed": seed, "failed": m.empty and m.numerical_events > 0, "metrics": m})
    out = Path(args.out) if args.out else run_dir
    out.mkdir(parents=True, exist_ok=True)
    write_outputs(out, records)
    print(f"metrics for {len(records)} replication(s) written to {out}")
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        load(args.scenario)
    except ConfigError as exc:
        for e in exc.errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    print(f"{args.scenario}: ok")
    return EXIT_OK


def make_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="track", description="Ballistic target tracking experiments.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="simulate replications and write logs and metrics")
    run.add_argument("--scenario", required=True, help="scenario JSON file")
    run.add_argument("--filter", choices=["ekf", "ukf"], help="override the configured filter")
    run.add_argument("--reps", type=int, default=1, help="number of replications")
    run.add_argument("--seed", type=int, help="base seed; replication r uses seed + r")
    run.add_argument("--out", required=True, help="output directory")
    run.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
    run.add_argument("--cues", help="JSON-lines cue stream replacing the simulated remote cues")
    run.set_defaults(func=cmd_run)

    met = sub.add_parser("metrics", help="recompute metrics from a run directory's logs")
    met.add_argument("--run", required=True, help="directory written by 'track run'")
    met.add_argument("--out", help="where to write metric files (default: the run directory)")
    met.set_defaults(func=cmd_metrics)

    val = sub.add_parser("validate", help="check a scenario file against the schema")
    val.add_argument("--scenario", required=True)
    val.set_defaults(func=cmd_validate)
    return p


def main(argv: list[str] | None = None) -> int:
    args = make_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(name)s: %(message)s")
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
