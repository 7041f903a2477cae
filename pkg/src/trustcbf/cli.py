"""Command-line front end: ``run``, ``sweep``, ``verify`` and ``plotdata``.

Exit codes: 0 success, 1 a verification suite failed, 2 bad usage or an
invalid scenario. Output goes under ``$TRUSTCBF_OUT`` (default ``./runs``)
unless ``--out`` is given.
"""

from __future__ import annotations

import argparse
import csv
import dataclasses
import io
import json
import math
import os
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from .model import AttackConfig, ConfigError, ScenarioConfig, load_scenario, validate_scenario
from .sim import _json_default, run as run_scenario, write_outputs

OUT_ENV = "TRUSTCBF_OUT"

SWEEP_FIELDS = ("fake_fraction", "repeat", "seed", "fakes", "vehicles", "mean_travel_time",
                "std_travel_time", "mean_energy", "mean_fuel", "holdup", "violations", "collisions",
                "infeasible", "qp_solves", "tp", "fp", "fn", "trace_sha256")


class UsageError(Exception):
    pass


def _onoff(s: str) -> bool:
    s = s.lower()
    if s in ("on", "true", "1", "yes"):
        return True
    if s in ("off", "false", "0", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {s!r}")


def _fractions(s: str) -> list:
    try:
        out = [float(x) for x in s.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad fraction list {s!r}") from None
    if not out or any(not 0.0 <= f <= 1.0 for f in out):
        raise argparse.ArgumentTypeError("fractions must lie in [0, 1]")
    return out


def out_root() -> Path:
    return Path(os.environ.get(OUT_ENV, "runs"))


def unique_dir(path: Path, force: bool) -> Path:
    """``path`` itself when free or forced, else the first free ``path-N``."""
    if force or not path.exists():
        return path
    n = 1
    while Path(f"{path}-{n}").exists():
        n += 1
    return Path(f"{path}-{n}")


def apply_overrides(cfg: ScenarioConfig, seed=None, mitigation=None, robust=None,
                    trust_aware=None) -> ScenarioConfig:
    """RunManifest toggles, one config field each; a seed reseeds every random source."""
    cfg = dataclasses.replace(cfg)
    if seed is not None:
        cfg.arrivals = dataclasses.replace(cfg.arrivals, seed=seed)
        cfg.control = dataclasses.replace(cfg.control, noise_seed=seed)
        cfg.perception = dataclasses.replace(cfg.perception, seed=seed)
    if mitigation is not None:
        cfg.mitigation = mitigation
    if robust is not None:
        cfg.control = dataclasses.replace(cfg.control, robust=robust)
    if trust_aware is not None:
        cfg.control = dataclasses.replace(cfg.control, trust_aware=trust_aware)
    return validate_scenario(cfg)


def _load(path) -> ScenarioConfig:
    if path is None:
        return validate_scenario(ScenarioConfig())
    return load_scenario(path)


def _sidecar(outdir: Path, argv, extra=None) -> None:
    """Wall-clock details live here, never in the trace bodies."""
    meta = {"argv": list(argv), "started": time.strftime("%Y-%m-%dT%H:%M:%S%z")}
    meta.update(extra or {})
    with open(outdir / "run_meta.json", "w") as fh:
        json.dump(meta, fh, indent=2, default=_json_default)


# ----------------------------------------------------------------------------
# run
# ----------------------------------------------------------------------------

def cmd_run(args, argv) -> int:
    cfg = apply_overrides(_load(args.scenario), args.seed, args.mitigation, args.robust,
                          args.trust_aware)
    stem = Path(args.scenario).stem if args.scenario else "default"
    name = f"{stem}-seed{cfg.arrivals.seed}"
    outdir = unique_dir(Path(args.out) if args.out else out_root() / name, args.force)
    t0 = time.perf_counter()
    trace, summary = run_scenario(cfg)
    paths = write_outputs(trace, summary, outdir)
    _sidecar(outdir, argv, {"wall_seconds": time.perf_counter() - t0})
    print(f"{outdir}: {len(summary['vehicles'])} vehicles, mean travel time "
          f"{summary['mean_travel_time']:.3f}s, violations {summary['violations']}, "
          f"holdup {summary['holdup']}")
    for k, p in paths.items():
        print(f"  {k}: {p}")
    return 0


# ----------------------------------------------------------------------------
# sweep
# ----------------------------------------------------------------------------

def sweep_config(base: ScenarioConfig, fraction: float, repeat: int) -> ScenarioConfig:
    """Seed ``repeat`` of the base scenario with round(fraction * arrivals) Sybil fakes."""
    cfg = apply_overrides(base, seed=repeat)
    n = int(round(fraction * cfg.arrivals.count))
    attacks = [a for a in cfg.attacks if a.kind != "sybil"]
    if n > 0:
        attacks.append(AttackConfig(kind="sybil", count=n, max_count=max(n, 10), start=1.0))
    cfg.attacks = attacks
    return validate_scenario(cfg)


def _sweep_one(job):
    base, fraction, repeat = job
    cfg = sweep_config(base, fraction, repeat)
    _, s = run_scenario(cfg)
    fakes = sum(a.count for a in cfg.attacks if a.kind == "sybil")
    return {"fake_fraction": fraction, "repeat": repeat, "seed": repeat, "fakes": fakes,
            "vehicles": len(s["vehicles"]),
            **{k: s[k] for k in ("mean_travel_time", "std_travel_time", "mean_energy", "mean_fuel",
                                 "holdup", "violations", "collisions", "infeasible", "qp_solves",
                                 "trace_sha256")},
            **s["detections"]}


def aggregate(rows) -> list:
    """One line per fake fraction: means over repeats of the headline measures."""
    out = []
    for f in sorted({r["fake_fraction"] for r in rows}):
        grp = [r for r in rows if r["fake_fraction"] == f]
        agg = {"fake_fraction": f, "runs": len(grp)}
        for k in ("mean_travel_time", "mean_energy", "mean_fuel"):
            vals = [r[k] for r in grp if not math.isnan(r[k])]
            agg[k] = float(np.mean(vals)) if vals else math.nan
        for k in ("holdup", "violations", "collisions"):
            agg[k] = int(sum(r[k] for r in grp))
        out.append(agg)
    return out


def _write_csv(path, rows, fields):
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(fields), lineterminator="\n", extrasaction="ignore")
    w.writeheader()
    for r in rows:
        w.writerow({k: (format(v, ".10g") if isinstance(v, float) else v) for k, v in r.items()})
    with open(path, "w") as fh:
        fh.write(buf.getvalue())


def cmd_sweep(args, argv) -> int:
    base = _load(args.scenario)
    jobs = [(base, f, r) for f in args.fake_fraction for r in range(args.repeats)]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as ex:
            rows = list(ex.map(_sweep_one, jobs))
    else:
        rows = [_sweep_one(j) for j in jobs]
    outdir = unique_dir(Path(args.out) if args.out else out_root() / "sweep", args.force)
    outdir.mkdir(parents=True, exist_ok=True)
    _write_csv(outdir / "sweep.csv", rows, SWEEP_FIELDS)
    agg = aggregate(rows)
    _write_csv(outdir / "sweep_aggregate.csv", agg, list(agg[0]) if agg else ["fake_fraction"])
    _sidecar(outdir, argv)
    print(f"{len(rows)} runs -> {outdir / 'sweep.csv'}")
    for a in agg:
        print(f"  fraction {a['fake_fraction']:.2f}: travel time {a['mean_travel_time']:.3f}s, "
              f"fuel {a['mean_fuel']:.3f}, holdup {a['holdup']}, violations {a['violations']}")
    return 0


# ----------------------------------------------------------------------------
# verify
# ----------------------------------------------------------------------------

def cmd_verify(args, argv) -> int:
    from .suites import SUITES
    names = list(SUITES) if args.suite == "all" else [args.suite]
    if any(n not in SUITES for n in names):
        raise UsageError(f"unknown suite {args.suite!r}; choose from all, {', '.join(SUITES)}")
    failed = 0
    for n in names:
        o = SUITES[n]()
        print(o.line(), flush=True)
        failed += not o.passed
    return 1 if failed else 0


# ----------------------------------------------------------------------------
# plotdata
# ----------------------------------------------------------------------------

def tidy_rows(trace_csv: str, every: int = 1):
    """Long-format series from a trace body: barrier minima, trust, and queue-slot intervals.

    Yields dicts with keys series, vid, t, t_end, value. Barrier and trust
    samples are points (t_end empty); queue rows are the intervals over which
    a vehicle held a given index of the FIFO table.
    """
    reader = csv.DictReader(io.StringIO(trace_csv))
    spans: dict = {}
    last_t = None
    for row in reader:
        tick = int(row["tick"])
        t = float(row["t"])
        vid = int(row["vid"])
        last_t = t
        if tick % every == 0:
            b = row["b_min"]
            if b not in ("", "nan", "inf") and row["fake"] == "0":
                yield {"series": "barrier", "vid": vid, "t": row["t"], "t_end": "", "value": b}
            yield {"series": "trust", "vid": vid, "t": row["t"], "t_end": "", "value": row["tau"]}
        idx = int(row["index"])
        cur = spans.get(vid)
        if cur is None or cur[1] != idx:
            if cur is not None:
                yield {"series": "queue", "vid": vid, "t": cur[0], "t_end": row["t"], "value": cur[1]}
            spans[vid] = [row["t"], idx, t]
        else:
            cur[2] = t
    for vid, (t0, idx, t1) in sorted(spans.items()):
        yield {"series": "queue", "vid": vid, "t": t0, "t_end": format(t1, ".10g"), "value": idx}


def cmd_plotdata(args, argv) -> int:
    with open(args.trace) as fh:
        body = fh.read()
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=["series", "vid", "t", "t_end", "value"], lineterminator="\n")
    w.writeheader()
    for r in tidy_rows(body, args.every):
        w.writerow(r)
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 0


# ----------------------------------------------------------------------------
# entry point
# ----------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="trustcbf", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="cmd", required=True)

    r = sub.add_parser("run", help="simulate one scenario")
    r.add_argument("scenario", help="scenario JSON")
    r.add_argument("--seed", type=int)
    r.add_argument("--out")
    r.add_argument("--force", action="store_true", help="reuse the output directory")
    r.add_argument("--mitigation", type=_onoff)
    r.add_argument("--robust", type=_onoff)
    r.add_argument("--trust-aware", dest="trust_aware", type=_onoff)

    s = sub.add_parser("sweep", help="grid over Sybil proportions")
    s.add_argument("--fake-fraction", dest="fake_fraction", type=_fractions, required=True)
    s.add_argument("--repeats", type=int, default=5)
    s.add_argument("--scenario", help="base scenario JSON (default: built-in defaults)")
    s.add_argument("--jobs", type=int, default=1)
    s.add_argument("--out")
    s.add_argument("--force", action="store_true")

    v = sub.add_parser("verify", help="run a named acceptance suite")
    v.add_argument("suite")

    d = sub.add_parser("plotdata", help="tidy CSV from a trace")
    d.add_argument("trace")
    d.add_argument("--out")
    d.add_argument("--every", type=int, default=1, help="keep every n-th tick of point series")
    return p


COMMANDS = {"run": cmd_run, "sweep": cmd_sweep, "verify": cmd_verify, "plotdata": cmd_plotdata}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return 2 if e.code else 0
    try:
        return COMMANDS[args.cmd](args, argv)
    except ConfigError as e:
        for m in e.messages:
            print(f"invalid scenario: {m}", file=sys.stderr)
        return 2
    except (UsageError, OSError, json.JSONDecodeError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
