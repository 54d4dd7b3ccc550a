"""Command-line simulator front end.

Exit codes: 0 collision-free completion, 2 safety violation, 1 error.
"""
from __future__ import annotations

import argparse
import os
import sys

from .harness import ScenarioError, export, run
from .scenario import builtin_names, builtin_scenario, load_scenario


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="simulate",
        description="Multi-vehicle coordination simulator (distributed MPC with "
        "convexified collision constraints)",
    )
    p.add_argument("--scenario", required=True, help=f"built-in name ({', '.join(builtin_names())}) or a TOML file")
    p.add_argument("--out", required=True, help="output directory for CSV/metrics/SVG")
    p.add_argument("--rounds", type=int, default=None, help="override the scenario's round count")
    p.add_argument("--centralized", action="store_true", help="use the centralized converged planner")
    p.add_argument("--no-deadlock-resolution", action="store_true", help="disable desired-speed reassignment")
    p.add_argument("--seed", type=int, default=0, help="accepted for reproducibility bookkeeping (the simulation is deterministic)")
    p.add_argument("--svg", action="store_true", help="also write a static SVG plot")
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if os.path.exists(args.scenario):
            spec = load_scenario(args.scenario)
        else:
            spec = builtin_scenario(args.scenario)
        if args.rounds is not None:
            from dataclasses import replace

            spec = replace(spec, total_rounds=args.rounds)
        logs, metrics = run(
            spec,
            centralized=args.centralized,
            deadlock_resolution=False if args.no_deadlock_resolution else None,
        )
        export(logs, metrics, args.out, spec, svg=args.svg)
    except (ScenarioError, ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(
        f"{spec.name}: {metrics.rounds} rounds, min distance {metrics.min_distance:.3f} m, "
        f"consensus round {metrics.consensus_round}, total cost {metrics.total_cost:.2f}"
    )
    if not metrics.collision_free:
        print("safety violation: minimum pairwise distance fell below the margin", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
