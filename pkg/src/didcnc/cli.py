"""Command-line entry point: ``didcnc <subcommand> [options]``."""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import harness
from .harness import Scenario


def _scenario(args) -> Scenario:
    sc = harness.load_scenario(args.scenario) if args.scenario else harness.edge_grid()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.horizon is not None:
        changes["horizon"] = args.horizon
    if getattr(args, "policy", None):
        changes["policy"] = args.policy
    if getattr(args, "placement", None):
        changes["placement"] = {"source": "file", "path": args.placement}
    return sc.replace(**changes) if changes else sc


def _grid(text: str) -> list[float]:
    """``"a,b,c"`` or ``"start:stop:count"`` (inclusive linspace)."""
    if ":" in text:
        a, b, n = text.split(":")
        return [float(v) for v in np.linspace(float(a), float(b), int(n))]
    return [float(v) for v in text.split(",") if v.strip()]


def _out(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_simulate(args):
    sc = _scenario(args)
    if args.rate is not None:
        sc = sc.with_rate(args.rate)
    if args.frame is not None:
        rep = dict(sc.replacement)
        rep["frame"] = args.frame
        sc = sc.replace(replacement=rep)
    res = harness.run(sc, _out(args))
    m = res.metrics
    print(f"scenario {res.scenario_hash}")
    print(f"admitted {m.admitted} delivered {m.delivered} mean_delay {m.mean_delay():.4g}")
    return 0


def cmd_sweep(args):
    sc = _scenario(args)
    grid = _grid(args.lambda_grid)
    res = harness.stability_sweep(sc, grid, bisect_steps=args.bisect)
    out = _out(args) / "sweep.csv"
    lines = [f"# scenario {sc.hash()}", "lambda,stable,slope,threshold,mean_delay,mean_backlog"]
    for lam, v in res.points:
        lines.append(f"{lam:.10g},{int(v.stable)},{v.slope:.10g},{v.threshold:.10g},"
                     f"{v.mean_delay:.10g},{v.mean_backlog:.10g}")
    out.write_text("\n".join(lines) + "\n")
    print(f"boundary {res.boundary:.6g} bracket {res.bracket}")
    return 0


def cmd_region(args):
    sc = _scenario(args)
    if args.rate is not None:
        sc = sc.with_rate(args.rate)
    region = harness.feasible_region(sc, _grid(args.alpha_grid), args.delay)
    out = _out(args) / "region.csv"
    lines = [f"# scenario {sc.hash()}", "alpha_proc,alpha_tx,feasible,mean_delay"]
    for (a1, a2), (ok, d) in sorted(region.items()):
        lines.append(f"{a1:.10g},{a2:.10g},{int(ok)},{d:.10g}")
    out.write_text("\n".join(lines) + "\n")
    print(f"saving ratio (diagonal) {harness.saving_ratio(region):.3f}")
    return 0


def cmd_place(args):
    from .placement import solve_milp_placement
    sc = _scenario(args)
    world = harness.build_world(sc.replace(placement={"source": "empty"}))
    if args.storage is not None:
        world.graph.storage_capacity[:] = args.storage
        if world.graph.cloud_index is not None:
            world.graph.storage_capacity[world.graph.cloud_index] = 0.0
    sol = solve_milp_placement(world.graph, world.clients, world.sizes,
                               node_budget=args.node_budget)
    doc = {"scenario": sc.hash(), "lambda": sol.lam, "status": sol.status, "gap": sol.gap,
           "assignment": harness.placement_to_labels(sol.x, world)}
    out = _out(args) / "placement.json"
    out.write_text(json.dumps(doc, indent=2) + "\n")
    print(f"lambda* {sol.lam:.6g} ({sol.status}) -> {out}")
    return 0


def cmd_replace_demo(args):
    sc = _scenario(args)
    rep = dict(sc.replacement)
    if rep.get("policy", "none") == "none":
        rep = {"policy": args.policy_replace, "frame": args.frame or 1000}
    elif args.frame is not None:
        rep["frame"] = args.frame
    sc = sc.replace(replacement=rep)
    res = harness.run(sc, _out(args))
    ctrl = res.replacement
    print(f"frames {len(res.frames)} changes {ctrl.changes} bytes {ctrl.total_bytes:.6g} "
          f"rate {ctrl.rate(sc.horizon):.6g}/slot mean_delay {res.metrics.mean_delay():.4g}")
    return 0


def cmd_validate(args):
    import pytest
    root = Path(__file__).resolve().parents[2] / "tests"
    targets = [str(root)] if root.exists() else []
    if not targets:
        print("tests directory not found next to the package", file=sys.stderr)
        return 2
    extra = ["-k", args.k] if args.k else []
    if not args.acceptance:
        extra += ["-m", "not slow"]
    return pytest.main(["-q", *targets, *extra])


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="didcnc", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", help="scenario JSON path or bundled name (default: edge_grid)")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--horizon", type=int)
        sp.add_argument("--out", help="output directory")

    sp = sub.add_parser("simulate", help="run one scenario and write metrics CSV")
    common(sp)
    sp.add_argument("--rate", type=float, help="aggregate arrival rate (units/slot)")
    sp.add_argument("--policy", choices=("didcnc", "s2l", "l2s"))
    sp.add_argument("--placement", help="placement JSON written by 'place'")
    sp.add_argument("--frame", type=int, help="replacement frame length (slots)")
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("sweep", help="stability boundary over a rate grid")
    common(sp)
    sp.add_argument("--lambda-grid", required=True, help="a,b,c or start:stop:count")
    sp.add_argument("--bisect", type=int, default=0, help="bisection refinement steps")
    sp.add_argument("--policy", choices=("didcnc", "s2l", "l2s"))
    sp.add_argument("--placement")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("region", help="feasible (alpha_proc, alpha_tx) grid")
    common(sp)
    sp.add_argument("--alpha-grid", required=True)
    sp.add_argument("--rate", type=float)
    sp.add_argument("--delay", type=float, default=30.0, help="delay requirement (slots)")
    sp.add_argument("--policy", choices=("didcnc", "s2l", "l2s"))
    sp.add_argument("--placement")
    sp.set_defaults(func=cmd_region)

    sp = sub.add_parser("place", help="solve the placement MILP, write placement JSON")
    common(sp)
    sp.add_argument("--storage", type=float, help="override storage per edge node")
    sp.add_argument("--node-budget", type=int, default=20_000)
    sp.set_defaults(func=cmd_place)

    sp = sub.add_parser("replace-demo", help="run with online database replacement")
    common(sp)
    sp.add_argument("--frame", type=int)
    sp.add_argument("--policy-replace", choices=("rate", "score"), default="score")
    sp.set_defaults(func=cmd_replace_demo)

    sp = sub.add_parser("validate", help="run the oracle test suites")
    sp.add_argument("-k", help="pytest -k expression")
    sp.add_argument("--acceptance", action="store_true",
                    help="include the long acceptance runs (about an hour)")
    sp.set_defaults(func=cmd_validate)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
