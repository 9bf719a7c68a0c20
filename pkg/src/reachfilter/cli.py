"""Command line: solve, simulate, compare, sweep, info.

Exit codes: 0 ok, 2 configuration / input error, 3 numerical failure.
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

from . import archive
from .config import ConfigError, ScenarioFile, load_scenario, parse_controller
from .hji import SolverError, solve
from .sim import MetricsReport, TrajectoryRecord, compare_filters, gamma_sweep, simulate

SCHEMA_VERSION = 1
EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC = 0, 2, 3
_TIMING_KEYS = ("mean_step_compute_ns", "max_step_compute_ns")


def csv_header(n: int, m: int, k: int) -> list[str]:
    return (["t"] + [f"x{i}" for i in range(n)] + [f"u{i}" for i in range(m)]
            + [f"d{i}" for i in range(k)] + ["value", "branch", "active", "step_ns"])


def trajectory_csv(rec: TrajectoryRecord, timing: bool = False) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(csv_header(rec.x.shape[1], rec.u.shape[1], rec.d.shape[1]))
    for i in range(len(rec)):
        row = [repr(float(rec.t[i]))]
        row += [repr(float(v)) for v in rec.x[i]]
        row += [repr(float(v)) for v in rec.u[i]]
        row += [repr(float(v)) for v in rec.d[i]]
        row += [repr(float(rec.value[i])), rec.branch[i], int(rec.active[i]),
                int(rec.step_ns[i]) if timing else 0]
        w.writerow(row)
    return buf.getvalue()


def _clean(v):
    if isinstance(v, float) and not math.isfinite(v):
        return None
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_clean(x) for x in v]
    return v


def metrics_dict(rep: MetricsReport, timing: bool = False) -> dict:
    d = rep.to_dict()
    if not timing:
        for k in _TIMING_KEYS:
            d[k] = 0
    d["schema_version"] = SCHEMA_VERSION
    return _clean(d)


def dump_json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True, allow_nan=False) + "\n"


def _load_vf(path: str, sf: ScenarioFile):
    vf = archive.load(path)
    sc = sf.scenario
    if vf.grid != sc.grid:
        raise ConfigError(f"--vf: archive grid {vf.grid.shape} does not match the scenario grid {sc.grid.shape}")
    if vf.mode is not sc.problem:
        raise ConfigError(f"--vf: archive holds a {vf.mode.value} value function, scenario is {sc.problem.value}")
    vf.model, vf.target = sc.model, sc.target
    return vf


def _scenario(args) -> ScenarioFile:
    sf = load_scenario(args.scenario)
    return sf.override(seed=getattr(args, "seed", None), dt=getattr(args, "dt", None))


def cmd_solve(args) -> int:
    sf = _scenario(args)
    sc = sf.scenario
    t0 = time.perf_counter()
    vf = solve(sc.model, sc.target, sc.grid, sc.problem, sc.solver)
    wall = time.perf_counter() - t0
    archive.save(vf, args.out)
    print(f"grid {'x'.join(map(str, sc.grid.shape))} ({sc.grid.size} nodes)")
    print(f"steps {vf.steps}, horizon {vf.horizon:.6g} s, slices {len(vf.times)}")
    print(f"converged {'yes' if vf.converged else 'no'}")
    print(f"wall {wall:.2f} s -> {args.out}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    sf = _scenario(args)
    vf = _load_vf(args.vf, sf)
    rec, rep = simulate(sf.scenario, vf)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trajectory.csv").write_text(trajectory_csv(rec, args.timing))
    (out / "metrics.json").write_text(dump_json(metrics_dict(rep, args.timing)))
    print(f"{rep.label}: {rep.termination}, {rep.steps} steps, min signed distance {rep.min_signed_distance:.4g}")
    return EXIT_OK


def parse_filter_token(token: str, problem) -> object:
    """``nominal``, ``default``, ``lr[:eps]``, ``slr[:eps]`` or ``blending:gamma``."""
    kind, _, arg = token.partition(":")
    d: dict = {"kind": kind}
    if arg:
        try:
            val = float(arg)
        except ValueError:
            raise ConfigError(f"--filters {token!r}: {arg!r} is not a number") from None
        d["gamma" if kind == "blending" else "epsilon"] = val
    return parse_controller(d, problem, path=f"--filters[{token}]")


def cmd_compare(args) -> int:
    sf = _scenario(args)
    vf = _load_vf(args.vf, sf)
    sc = sf.scenario
    ctrls = [parse_filter_token(t, sc.problem) for t in args.filters] if args.filters else [sc.controller]
    reports = compare_filters(sc, vf, ctrls)
    Path(args.out).write_text(dump_json([metrics_dict(r, args.timing) for r in reports]))
    for r in reports:
        print(f"{r.label:24s} min_dist {r.min_signed_distance:+.4f} cost {r.total_cost:.4g} jerk {r.jerk_energy:.4g}")
    return EXIT_OK


def cmd_sweep(args) -> int:
    sf = _scenario(args)
    vf = _load_vf(args.vf, sf)
    rows = gamma_sweep(sf.scenario, vf, args.gamma)
    out = [{"gamma": r.gamma, "total_cost": r.total_cost, "normalized_cost": r.normalized_cost,
            "metrics": metrics_dict(r.metrics, args.timing)} for r in rows]
    Path(args.out).write_text(dump_json(_clean(out)))
    for r in rows:
        print(f"gamma {r.gamma:<8g} normalized cost {r.normalized_cost:.4f}")
    return EXIT_OK


def cmd_info(args) -> int:
    vf = archive.load(args.vf)
    g = vf.grid
    print(f"format  HJVF v{archive.VERSION}")
    print(f"mode    {vf.mode.value}{' (converged)' if vf.converged else ''}")
    for i in range(g.ndim):
        print(f"dim {i}   {g.counts[i]} nodes on [{g.lo[i]:.6g}, {g.hi[i]:.6g}]{' periodic' if g.periodic[i] else ''}")
    print(f"times   {len(vf.times)} slices, t in [{vf.times[0]:.6g}, {vf.times[-1]:.6g}]")
    v = vf.slices[0].values
    print(f"V(t0)   min {v.min():.6g}, max {v.max():.6g}, {int(np.sum(v <= 0))} nodes <= 0")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="reachfilter", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p, vf=True, out=True):
        p.add_argument("--scenario", required=True, help="scenario YAML file")
        if vf:
            p.add_argument("--vf", required=True, help="value-function archive")
        if out:
            p.add_argument("--out", required=True)
        p.add_argument("--seed", type=int, help="override the nominal / disturbance seed")
        p.add_argument("--dt", type=float, help="override sim.dt")
        p.add_argument("--timing", action="store_true",
                       help="record wall-clock filter timings (makes outputs non-reproducible)")

    p = sub.add_parser("solve", help="solve the HJI VI and write an archive")
    p.add_argument("--scenario", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("simulate", help="closed-loop run; writes trajectory.csv and metrics.json to --out")
    common(p)
    p.set_defaults(func=cmd_simulate)

    p = sub.add_parser("compare", help="run several controllers; JSON array of metrics")
    common(p)
    p.add_argument("--filters", nargs="+", metavar="SPEC",
                   help="nominal, default, lr[:eps], slr[:eps], blending:gamma (default: the scenario's filter)")
    p.set_defaults(func=cmd_compare)

    p = sub.add_parser("sweep", help="blending-filter gamma sweep; JSON array")
    common(p)
    p.add_argument("--gamma", type=float, nargs="+", required=True)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("info", help="print archive metadata")
    p.add_argument("--vf", required=True)
    p.set_defaults(func=cmd_info)
    return ap


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, archive.ArchiveError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except (SolverError, FloatingPointError) as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return EXIT_NUMERIC
    except OSError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
