"""Synchronous-round simulation engine.

Each round every vehicle: receives the plans broadcast at the end of the
previous round, runs the deadlock check / speed update, rebuilds its
reference, replans one convexified QP from its previous plan, and then
either teleports to the first plan point (DirectPlacement) or runs the
tracking controller and the bicycle plant (TrackedControl). Planning
consumes only the round-start snapshot, so results are independent of
vehicle iteration order.
"""
from __future__ import annotations

import dataclasses
import math
import time
from dataclasses import dataclass

import numpy as np

from . import deadlock as dl
from . import planner
from .geometry import min_pairwise_distance
from .qp import ActiveSetSolver
from .scenario import ControlMode, ScenarioSpec, validate_scenario
from .types import Position2, V2VMessage, VehicleState
from .vehicle import PlantParams, kinematic_step, tracking_control

GOAL_TOL = 0.5


class ScenarioError(ValueError):
    pass


@dataclass
class RoundLog:
    round: int
    states: list  # post-step states
    plans: list
    slacks: list
    solve_times: list
    deadlock_flags: list
    desired_speeds: list
    qp_statuses: list
    min_pairwise_distance: float
    consensus: bool
    round_cost: float
    cross_track_errors: list


@dataclass
class VehicleMetrics:
    avg_solve_time: float
    max_solve_time: float
    trajectory_length: float
    time_to_goal: float  # nan when the goal was not reached
    mean_cross_track_error: float


@dataclass
class RunMetrics:
    vehicles: list
    avg_round_solve_time: float
    max_round_solve_time: float
    total_cost: float
    consensus_round: int  # -1 when consensus never held
    min_distance: float
    collision_free: bool
    rounds: int
    wall_time: float


def _dist_to_polyline(points, pos: Position2) -> float:
    p = np.array([pos.x, pos.y])
    pts = np.array([[q.x, q.y] for q in points])
    best = float(np.min(np.linalg.norm(pts - p, axis=1)))
    for a, b in zip(pts[:-1], pts[1:]):
        ab = b - a
        L2 = float(ab @ ab)
        if L2 < 1e-18:
            continue
        t = float(np.clip((p - a) @ ab / L2, 0.0, 1.0))
        best = min(best, float(np.linalg.norm(p - (a + t * ab))))
    return best


def run(
    spec: ScenarioSpec,
    centralized: bool = False,
    deadlock_resolution: bool | None = None,
    vehicle_order=None,
    stale_broadcasts: bool = False,
):
    """Simulate a scenario; returns (list of RoundLog, RunMetrics).

    By default each vehicle plans against the most recent broadcast of every
    neighbor, including plans published earlier in the same round; vehicles
    replan in `vehicle_order`. This sequential exchange damps the plan
    oscillation that simultaneous best responses produce in symmetric
    scenarios. Set stale_broadcasts=True to make every vehicle use only the
    previous round's broadcasts (order-independent, but two symmetric
    vehicles can then ping-pong indefinitely).
    """
    issues = validate_scenario(spec)
    if issues:
        raise ScenarioError("; ".join(issues))
    t_start = time.perf_counter()

    N = len(spec.vehicles)
    resolution = spec.deadlock.enabled if deadlock_resolution is None else deadlock_resolution
    order = list(vehicle_order) if vehicle_order is not None else list(range(N))
    if sorted(order) != list(range(N)):
        raise ScenarioError("vehicle_order must be a permutation of vehicle indices")

    states = [v.initial for v in spec.vehicles]
    base_speeds = {i: spec.vehicles[i].path.desired_speed for i in range(N)}
    desired = dict(base_speeds)
    assignment = None

    plans = [planner.initial_plan(states[i], spec.H, spec.T_s) for i in range(N)]
    messages = [V2VMessage(i, 0, plans[i], states[i].heading) for i in range(N)]
    solvers = [ActiveSetSolver() for _ in range(N)]
    warm_active = [None] * N
    plant = PlantParams(spec.wheelbase)

    logs = []
    goal_round = [None] * N
    path_len = [0.0] * N
    ct_sums = [0.0] * N
    ct_counts = [0] * N
    total_cost = 0.0

    for rnd in range(spec.total_rounds):
        # (1) V2V exchange: snapshot of last round's broadcasts
        snapshot = list(messages)

        # (2) deadlock check and speed update; the round-0 "plans" are the
        # constant-velocity seeds, which sit at a constant offset from any
        # cross-lane reference and would trip the detector spuriously
        statuses = [
            dl.detect(plans[i], spec.vehicles[i].path, spec.deadlock.config, spec.vehicles[i].exit_point)
            for i in range(N)
        ]
        if rnd == 0:
            statuses = [dataclasses.replace(s, is_deadlocked=False) for s in statuses]
        if resolution:
            if assignment is None:
                stuck = [i for i in range(N) if statuses[i].is_deadlocked]
                if len(stuck) >= 2:
                    entries = []
                    tangents = []
                    for i in stuck:
                        _, _, tang, _ = planner.project_onto_path(spec.vehicles[i].path, states[i].position)
                        tangents.append(tang)
                        entries.append(
                            (
                                i,
                                states[i],
                                statuses[i].tail_mean_distance,
                                dl.side_of_path(spec.vehicles[i].path, states[i].position),
                            )
                        )
                    mean_t = np.mean(np.array(tangents), axis=0)
                    norm = float(np.linalg.norm(mean_t))
                    direction = tuple(mean_t / norm) if norm > 1e-9 else (0.0, 0.0)
                    priorities = dl.assign_priorities(entries, direction)
                    # lateral deadlocks exempt vehicles already riding their
                    # target lane; exit-point deadlocks (queueing) exempt no one
                    on_target = frozenset(
                        i for i in stuck
                        if spec.vehicles[i].exit_point is None
                        and dl.side_of_path(spec.vehicles[i].path, states[i].position) is dl.Side.ON_PATH
                    )
                    assignment = dl.resolve(priorities, base_speeds, spec.deadlock.ladder, on_target)
                    desired.update(assignment.speeds)
            else:
                refs_now = {
                    i: planner.build_reference(
                        spec.vehicles[i].path, states[i].position, spec.H, spec.T_s, desired[i]
                    )
                    for i in range(N)
                }
                assignment = dl.maybe_revert(
                    assignment, {i: plans[i] for i in range(N)}, refs_now, spec.deadlock.revert_tol
                )
                desired.update(assignment.speeds)
                if all(not assignment.is_boosted(i) for i in range(N)):
                    assignment = None

        # (3) reference modification
        refs = [
            planner.build_reference(spec.vehicles[i].path, states[i].position, spec.H, spec.T_s, desired[i])
            for i in range(N)
        ]

        # (4)-(5) replanning from the previous plan
        results = [None] * N
        if centralized:
            # the baseline runs the full convex-feasible-set loop to
            # convergence each round, initialized from the references; the
            # distributed mode's whole point is replacing that with one
            # warm-started QP per vehicle
            central = planner.plan_centralized(
                states,
                refs,
                refs,
                spec.weights,
                spec.centralized_d_min,
                pins=[v.pin for v in spec.vehicles],
            )
            for i in range(N):
                results[i] = central[i]
        else:
            current = list(snapshot)
            for i in order:
                neighbors = [(current[j].trajectory, current[j].heading) for j in range(N) if j != i]
                results[i] = planner.plan_step(
                    states[i],
                    plans[i],
                    neighbors,
                    spec.vehicles[i].geometry,
                    refs[i],
                    spec.weights,
                    solvers[i],
                    spec.vehicles[i].pin,
                    warm_active[i],
                )
                warm_active[i] = results[i].active_set or None
                if not stale_broadcasts:
                    current[i] = V2VMessage(i, rnd, results[i].trajectory, states[i].heading)
        plans = [results[i].trajectory for i in range(N)]
        total_cost += planner.total_cost(plans, [r.slack for r in results], refs, spec.weights)

        # control and plant stepping
        new_states = []
        for i in range(N):
            s = states[i]
            if spec.control_mode is ControlMode.DIRECT_PLACEMENT:
                # the slack equality keeps plan point 0 at the current
                # position, so the next time step's position is point 1
                target = plans[i].points[1]
                disp = s.position.distance_to(target)
                heading = math.atan2(target.y - s.position.y, target.x - s.position.x) if disp > 1e-9 else s.heading
                new_states.append(VehicleState(target, disp / spec.T_r, heading))
            else:
                u = tracking_control(s, plans[i], desired[i])
                new_states.append(kinematic_step(s, u, plant, spec.T_r))
            path_len[i] += s.position.distance_to(new_states[i].position) if goal_round[i] is None else 0.0
        states = new_states
        messages = [V2VMessage(i, rnd + 1, plans[i], states[i].heading) for i in range(N)]

        # bookkeeping
        for i in range(N):
            err = _dist_to_polyline(plans[i].points, states[i].position)
            ct_sums[i] += err
            ct_counts[i] += 1
            if goal_round[i] is None and states[i].position.distance_to(spec.vehicles[i].path.polyline[-1]) <= GOAL_TOL:
                goal_round[i] = rnd
        min_dist = min_pairwise_distance(states) if N >= 2 else math.inf
        consensus = dl.check_consensus(plans, refs, spec.margin, spec.consensus_tol)

        logs.append(
            RoundLog(
                round=rnd,
                states=list(states),
                plans=list(plans),
                slacks=[r.slack for r in results],
                solve_times=[r.solve_time for r in results],
                deadlock_flags=[st.is_deadlocked for st in statuses],
                desired_speeds=[desired[i] for i in range(N)],
                qp_statuses=[r.qp_status for r in results],
                min_pairwise_distance=min_dist,
                consensus=consensus,
                round_cost=total_cost,
                cross_track_errors=[_dist_to_polyline(plans[i].points, states[i].position) for i in range(N)],
            )
        )

    wall = time.perf_counter() - t_start
    vehicle_metrics = []
    for i in range(N):
        times = [log.solve_times[i] for log in logs]
        vehicle_metrics.append(
            VehicleMetrics(
                avg_solve_time=float(np.mean(times)),
                max_solve_time=float(np.max(times)),
                trajectory_length=path_len[i],
                time_to_goal=(goal_round[i] + 1) * spec.T_r if goal_round[i] is not None else math.nan,
                mean_cross_track_error=ct_sums[i] / max(ct_counts[i], 1),
            )
        )
    round_totals = [sum(log.solve_times) for log in logs]
    min_dist_overall = min(log.min_pairwise_distance for log in logs)
    # first round from which consensus holds through the end of the run
    consensus_round = -1
    for log in reversed(logs):
        if not log.consensus:
            break
        consensus_round = log.round
    metrics = RunMetrics(
        vehicles=vehicle_metrics,
        avg_round_solve_time=float(np.mean(round_totals)),
        max_round_solve_time=float(np.max(round_totals)),
        total_cost=total_cost,
        consensus_round=consensus_round,
        min_distance=min_dist_overall,
        collision_free=min_dist_overall >= spec.margin - 1e-9,
        rounds=len(logs),
        wall_time=wall,
    )
    return logs, metrics


def compare_centralized(spec: ScenarioSpec):
    """Run the identical scenario distributed and centralized; report both."""
    logs_d, metrics_d = run(spec, centralized=False)
    logs_c, metrics_c = run(spec, centralized=True)
    return {
        "distributed": {
            "avg_round_time": metrics_d.avg_round_solve_time,
            "max_round_time": metrics_d.max_round_solve_time,
            "avg_each_time": metrics_d.avg_round_solve_time / len(spec.vehicles),
            "total_cost": metrics_d.total_cost,
            "min_distance": metrics_d.min_distance,
        },
        "centralized": {
            # plan_centralized spreads the stacked solve time over vehicles
            "avg_round_time": metrics_c.avg_round_solve_time,
            "max_round_time": metrics_c.max_round_solve_time,
            "total_cost": metrics_c.total_cost,
            "min_distance": metrics_c.min_distance,
        },
    }


# -- export -------------------------------------------------------------------


def _fmt(v) -> str:
    return f"{v:.9g}"


def export(logs, metrics: RunMetrics, out_dir, spec: ScenarioSpec | None = None, svg: bool = False):
    """Write trajectories.csv, metrics.txt, and optionally scenario.svg."""
    import os

    os.makedirs(out_dir, exist_ok=True)
    written = []

    H = len(logs[0].plans[0]) if logs else 0
    csv_path = os.path.join(out_dir, "trajectories.csv")
    header = (
        ["round", "vehicle_id", "t", "x", "y", "v", "theta"]
        + [f"plan_x{h + 1}" for h in range(H)]
        + [f"plan_y{h + 1}" for h in range(H)]
    )
    T_r = spec.T_r if spec is not None else 1.0
    with open(csv_path, "w") as fh:
        fh.write(",".join(header) + "\n")
        for log in logs:
            for i, state in enumerate(log.states):
                arr = log.plans[i].as_array()
                row = (
                    [str(log.round), str(i), _fmt(log.round * T_r)]
                    + [_fmt(state.position.x), _fmt(state.position.y), _fmt(state.speed), _fmt(state.heading)]
                    + [_fmt(v) for v in arr[:, 0]]
                    + [_fmt(v) for v in arr[:, 1]]
                )
                fh.write(",".join(row) + "\n")
    written.append(csv_path)

    metrics_path = os.path.join(out_dir, "metrics.txt")
    with open(metrics_path, "w") as fh:
        fh.write(f"rounds = {metrics.rounds}\n")
        fh.write(f"consensus_round = {metrics.consensus_round}\n")
        fh.write(f"total_cost = {_fmt(metrics.total_cost)}\n")
        fh.write(f"min_distance = {_fmt(metrics.min_distance)}\n")
        fh.write(f"collision_free = {str(metrics.collision_free).lower()}\n")
        fh.write(f"avg_round_solve_time = {_fmt(metrics.avg_round_solve_time)}\n")
        fh.write(f"max_round_solve_time = {_fmt(metrics.max_round_solve_time)}\n")
        fh.write(f"wall_time = {_fmt(metrics.wall_time)}\n")
        for i, vm in enumerate(metrics.vehicles):
            fh.write(f"vehicle.{i}.avg_solve_time = {_fmt(vm.avg_solve_time)}\n")
            fh.write(f"vehicle.{i}.max_solve_time = {_fmt(vm.max_solve_time)}\n")
            fh.write(f"vehicle.{i}.trajectory_length = {_fmt(vm.trajectory_length)}\n")
            fh.write(f"vehicle.{i}.time_to_goal = {_fmt(vm.time_to_goal)}\n")
            fh.write(f"vehicle.{i}.mean_cross_track_error = {_fmt(vm.mean_cross_track_error)}\n")
    written.append(metrics_path)

    if svg:
        svg_path = os.path.join(out_dir, "scenario.svg")
        _write_svg(logs, svg_path)
        written.append(svg_path)
    return written


_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2"]


def _write_svg(logs, path):
    """Executed trajectories (solid) and final plans (dashed), one polyline each."""
    N = len(logs[0].states)
    tracks = [[(log.states[i].position.x, log.states[i].position.y) for log in logs] for i in range(N)]
    finals = [[(p.x, p.y) for p in logs[-1].plans[i].points] for i in range(N)]
    xs = [x for t in tracks + finals for x, _ in t]
    ys = [y for t in tracks + finals for _, y in t]
    pad = 5.0
    x0, x1 = min(xs) - pad, max(xs) + pad
    y0, y1 = min(ys) - pad, max(ys) + pad
    w, h = x1 - x0, y1 - y0

    def pt(x, y):
        return f"{x - x0:.2f},{y1 - y:.2f}"  # flip y for SVG

    lines = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {w:.2f} {h:.2f}" '
        f'width="{10 * w:.0f}" height="{10 * h:.0f}">',
        f'<rect width="{w:.2f}" height="{h:.2f}" fill="white"/>',
    ]
    for i in range(N):
        color = _COLORS[i % len(_COLORS)]
        track = " ".join(pt(x, y) for x, y in tracks[i])
        lines.append(f'<polyline points="{track}" fill="none" stroke="{color}" stroke-width="0.3"/>')
        plan = " ".join(pt(x, y) for x, y in finals[i])
        lines.append(
            f'<polyline points="{plan}" fill="none" stroke="{color}" stroke-width="0.15" '
            f'stroke-dasharray="1,1"/>'
        )
    lines.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(lines) + "\n")
