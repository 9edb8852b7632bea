"""Command line interface: ``prutf detect | simulate | bench``.

Change points are printed 1-based: a change point ``c`` means the previous
segment ends at sample ``c`` and a new one starts at sample ``c + 1``.
"""

from __future__ import annotations

import argparse
import csv
import io
import json
import math
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .detect import detect_mprutf, detect_prutf
from .errors import CapExceededError, DegenerateScaleError, PrutfError
from .path import SolutionPath
from .sim import SCENARIOS, read_scenario, rng_for, run_experiment
from .stopping import StoppingConfig

EXIT_OK = 0
EXIT_ERROR = 1
EXIT_USAGE = 2
EXIT_SCALE = 3
EXIT_CAP = 4

SIM_HEADER = ["sigma", "mean_ncpts", "mean_mse", "mean_hausdorff", "mean_runtime_s"]


class InputError(Exception):
    pass


def fmt(x: float) -> str:
    """17 significant digits: enough to round-trip any double."""
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    return format(float(x), ".17g")


def read_series(path) -> np.ndarray:
    """Values from the first column of a CSV file.

    A non-numeric first row is treated as a header. A second column, if
    present, is an index and is ignored.
    """
    try:
        text = Path(path).read_text(encoding="utf-8-sig")
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from exc
    rows = [row for row in csv.reader(io.StringIO(text)) if row and any(c.strip() for c in row)]
    if not rows:
        raise InputError(f"{path} contains no data")
    values = []
    for lineno, row in enumerate(rows, start=1):
        cell = row[0].strip()
        try:
            values.append(float(cell))
        except ValueError:
            if lineno == 1 and not values:
                continue
            raise InputError(f"line {lineno}: {cell!r} is not a number") from None
    if not values:
        raise InputError(f"{path} has a header but no data")
    y = np.asarray(values)
    if not np.all(np.isfinite(y)):
        raise InputError("input contains NaN or infinite values")
    return y


def parse_grid(text: str, cast=float) -> list:
    items = [t.strip() for t in text.split(",") if t.strip()]
    try:
        return [cast(t) for t in items]
    except ValueError:
        raise InputError(f"cannot parse grid {text!r}") from None


def _open_out(path):
    if path in (None, "-"):
        return sys.stdout, False
    return open(path, "w", encoding="utf-8", newline=""), True


def _result_json(res, y, args) -> dict:
    return {
        "n": int(y.size),
        "order": args.order,
        "method": args.method,
        "alpha": args.alpha,
        "sigma_source": "mad" if args.sigma == "mad" else "given",
        "change_points": [int(c) for c in res.change_points],
        "signs": [int(s) for s in res.signs],
        "lambda_stop": res.lambda_stop,
        "sigma": res.sigma,
        "fitted": [float(v) for v in res.fitted],
        "events": [
            {"lambda": ev.lam, "kind": ev.kind, "coordinate": ev.coordinate + 1, "sign": ev.sign}
            for ev in res.events
        ],
    }


def _write_detect_csv(fh, res, y):
    cps = {int(c): int(s) for c, s in zip(res.change_points, res.signs)}
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["index", "y", "fitted", "change_point", "sign", "lambda_stop", "sigma"])
    for i in range(y.size):
        idx = i + 1
        w.writerow([
            idx, fmt(y[i]), fmt(res.fitted[i]), int(idx in cps), cps.get(idx, 0),
            fmt(res.lambda_stop), fmt(res.sigma),
        ])


def cmd_detect(args) -> int:
    y = read_series(args.input)
    if y.size < args.order + 3:
        raise InputError(f"need at least {args.order + 3} samples for order {args.order}")
    sigma = None if args.sigma == "mad" else float(args.sigma)
    if sigma is not None and not sigma > 0:
        raise InputError("--sigma must be positive or 'mad'")
    cfg = StoppingConfig(alpha=args.alpha, sigma=sigma)
    run = detect_mprutf if args.method == "mprutf" else detect_prutf
    res = run(y, args.order, cfg, cap=args.max_steps)
    fh, close = _open_out(args.output)
    try:
        if args.format == "json":
            json.dump(_result_json(res, y, args), fh, indent=2)
            fh.write("\n")
        else:
            _write_detect_csv(fh, res, y)
    finally:
        if close:
            fh.close()
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.scenario_file:
        try:
            scn = read_scenario(args.scenario_file)
        except (OSError, KeyError, ValueError) as exc:
            raise InputError(f"bad scenario file: {exc}") from exc
    else:
        if args.scenario not in SCENARIOS:
            raise InputError(f"unknown scenario {args.scenario!r}; choose from {', '.join(sorted(SCENARIOS))}")
        scn = SCENARIOS[args.scenario]()
    kw = {"seed": args.seed}
    if args.rho is not None:
        kw["rho"] = args.rho
    scn = scn.with_noise(**kw)
    grid = parse_grid(args.sigma_grid) if args.sigma_grid else [scn.sigma]
    if not grid or any(s < 0 for s in grid):
        raise InputError("--sigma-grid must list non-negative values")
    if args.replicates < 1:
        raise InputError("--replicates must be at least 1")
    rows, runs = run_experiment(
        scn, args.method, args.replicates, grid, alpha=args.alpha,
        workers=args.workers, timing=not args.no_timing,
    )
    fh, close = _open_out(args.output)
    try:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SIM_HEADER)
        for row in rows:
            w.writerow([fmt(row.sigma), fmt(row.mean_ncpts), fmt(row.mean_mse),
                        fmt(row.mean_hausdorff), fmt(row.mean_runtime_s)])
    finally:
        if close:
            fh.close()
    if args.detail:
        with open(args.detail, "w", encoding="utf-8", newline="") as dh:
            w = csv.writer(dh, lineterminator="\n")
            w.writerow(["sigma", "replicate", "ncpts", "mse", "hausdorff", "runtime_s", "change_points"])
            for r in runs:
                w.writerow([fmt(r.sigma), r.replicate, r.detected, fmt(r.mse), fmt(r.hausdorff),
                            fmt(r.runtime_s), " ".join(str(c) for c in r.change_points)])
    return EXIT_OK


def cmd_bench(args) -> int:
    sizes = parse_grid(args.sizes, int) if args.sizes is not None else []
    if not sizes or any(n < args.order + 3 for n in sizes):
        raise InputError("--sizes must list at least one length larger than order + 2")
    results = []
    for n in sizes:
        y = rng_for(args.seed ^ n).standard_normal(n)
        best = math.inf
        events = 0
        for _ in range(args.repeats):
            sp = SolutionPath(y, args.order, modified=args.method == "mprutf")
            t0 = time.perf_counter()
            count = 0
            for _state in sp:
                count += 1
                if count >= args.max_events:
                    break
            best = min(best, time.perf_counter() - t0)
            events = count
        t0 = time.perf_counter()
        (detect_mprutf if args.method == "mprutf" else detect_prutf)(y, args.order, StoppingConfig(sigma=1.0))
        detect_s = time.perf_counter() - t0
        results.append({
            "n": n,
            "events": events,
            "wall_s": best,
            "per_iteration_s": best / max(events, 1),
            "events_per_s": events / best if best > 0 else math.inf,
            "detect_s": detect_s,
        })
    if args.json:
        json.dump({"order": args.order, "method": args.method, "results": results}, sys.stdout, indent=2)
        sys.stdout.write("\n")
    else:
        print(f"{'n':>8} {'events':>7} {'wall_s':>10} {'per_iter_s':>12} {'events/s':>10} {'detect_s':>10}")
        for r in results:
            print(f"{r['n']:>8} {r['events']:>7} {r['wall_s']:>10.4f} {r['per_iteration_s']:>12.3e} "
                  f"{r['events_per_s']:>10.1f} {r['detect_s']:>10.4f}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="prutf",
        description="Change point detection in piecewise polynomial signals via the dual path of trend filtering.",
        epilog="Change points are reported 1-based: c means a new segment starts at sample c + 1. "
        "Exit codes: 2 bad input, 3 zero noise scale (pass --sigma), 4 event cap exceeded.",
    )
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    d = sub.add_parser("detect", help="detect change points in a CSV series")
    d.add_argument("input", help="CSV file; first column holds the values, optional header row")
    d.add_argument("-r", "--order", type=int, default=0, help="polynomial order (0 = piecewise constant)")
    d.add_argument("--alpha", type=float, default=0.05, help="significance level of the stopping rule")
    d.add_argument("--sigma", default="mad", help="noise standard deviation, or 'mad' to estimate it")
    d.add_argument("--method", choices=("prutf", "mprutf"), default="mprutf")
    d.add_argument("--max-steps", type=int, default=None, help="event cap (default 5 n)")
    d.add_argument("-o", "--output", default=None, help="output file (default stdout)")
    d.add_argument("--format", choices=("json", "csv"), default="json")
    d.set_defaults(func=cmd_detect)

    s = sub.add_parser("simulate", help="run a replicated simulation and write per-sigma means")
    src = s.add_mutually_exclusive_group()
    src.add_argument("--scenario", default="pwc", help=f"one of {', '.join(sorted(SCENARIOS))}")
    src.add_argument("--scenario-file", default=None, help="key = value scenario file")
    s.add_argument("--method", choices=("prutf", "mprutf"), default="mprutf")
    s.add_argument("--replicates", type=int, default=100)
    s.add_argument("--seed", type=int, default=0, help="base seed; replicate k uses seed XOR k")
    s.add_argument("--sigma-grid", default=None, help="comma separated noise levels")
    s.add_argument("--rho", type=float, default=None, help="AR(1) coefficient of the noise")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--workers", type=int, default=None, help="process count (capped by PRUTF_THREADS)")
    s.add_argument("--no-timing", action="store_true", help="write nan runtimes so output is reproducible")
    s.add_argument("-o", "--output", default=None)
    s.add_argument("--detail", default=None, help="also write one row per replicate to this file")
    s.set_defaults(func=cmd_simulate)

    b = sub.add_parser("bench", help="time the path on noise-only input")
    b.add_argument("--sizes", default="500,1000,2000,4000", help="comma separated signal lengths")
    b.add_argument("-r", "--order", type=int, default=0)
    b.add_argument("--method", choices=("prutf", "mprutf"), default="prutf")
    b.add_argument("--max-events", type=int, default=100)
    b.add_argument("--repeats", type=int, default=3)
    b.add_argument("--seed", type=int, default=0)
    b.add_argument("--json", action="store_true")
    b.set_defaults(func=cmd_bench)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    if getattr(args, "order", 0) < 0:
        parser.error("--order must be non-negative")
    if hasattr(args, "alpha") and not 0 < args.alpha < 1:
        parser.error("--alpha must lie in (0, 1)")
    try:
        return args.func(args)
    except InputError as exc:
        print(f"prutf: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except DegenerateScaleError as exc:
        print(f"prutf: error: {exc}", file=sys.stderr)
        return EXIT_SCALE
    except CapExceededError as exc:
        print(f"prutf: error: {exc}", file=sys.stderr)
        return EXIT_CAP
    except PrutfError as exc:
        print(f"prutf: error: {exc}", file=sys.stderr)
        return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
