"""Deadlock detection and resolution by desired-speed reassignment.

A vehicle is deadlocked when the tail of its plan hovers at a constant
nonzero offset from its reference: the tail distances have spread <= eps1
while their mean stays >= eps2. Deadlocks are broken by handing the
stuck vehicles distinct desired speeds, highest priority first.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .planner import project_onto_path
from .types import DeadlockConfig, Position2, ReferencePath, Trajectory


class Side(enum.Enum):
    LEFT = "left"
    ON_PATH = "on_path"
    RIGHT = "right"


@dataclass(frozen=True)
class DeadlockStatus:
    is_deadlocked: bool
    tail_mean_distance: float
    tail_spread: float


@dataclass
class SpeedAssignment:
    """Current desired speeds plus the originals for reversion."""

    speeds: dict
    original_speeds: dict

    def speed_of(self, vehicle_id, default=None):
        return self.speeds.get(vehicle_id, default)

    def is_boosted(self, vehicle_id) -> bool:
        return self.speeds.get(vehicle_id) != self.original_speeds.get(vehicle_id)


def detect(
    plan: Trajectory,
    reference_path: ReferencePath,
    config: DeadlockConfig,
    exit_point: Position2 | None = None,
) -> DeadlockStatus:
    """Evaluate the stuck-tail criterion on the last n plan points.

    Distances are perpendicular distances to the reference polyline, or
    Euclidean distances to exit_point when one is given (the intersection
    variant).
    """
    if config.n > len(plan):
        raise ValueError("tail length exceeds plan horizon")
    tail = plan.points[len(plan) - config.n :]
    if exit_point is not None:
        dists = [p.distance_to(exit_point) for p in tail]
    else:
        dists = [p.distance_to(project_onto_path(reference_path, p)[1]) for p in tail]
    spread = max(dists) - min(dists)
    mean = float(np.mean(dists))
    return DeadlockStatus(spread <= config.eps1 and abs(mean) >= config.eps2, mean, spread)


def assign_priorities(deadlocked, travel_direction) -> list:
    """Order deadlocked vehicles by priority, highest first.

    deadlocked entries are (vehicle_id, state, tail_mean_distance, side).
    Sort key: progress along travel_direction descending (front first),
    then tail mean ascending, then Left before Right, then id.
    """
    if len(deadlocked) < 2:
        raise ValueError("need at least 2 deadlocked vehicles")
    ux, uy = travel_direction
    side_rank = {Side.LEFT: 0, Side.ON_PATH: 1, Side.RIGHT: 2}

    def key(entry):
        vid, state, mean, side = entry
        progress = state.position.x * ux + state.position.y * uy
        return (-progress, mean, side_rank[side], vid)

    return [entry[0] for entry in sorted(deadlocked, key=key)]


def resolve(priorities, base_speeds: dict, ladder, on_target=frozenset()) -> SpeedAssignment:
    """Assign base_speed * ladder[rank] by priority rank.

    Vehicles in on_target keep their base speed and consume no ladder
    slot. Raises when the ladder is shorter than the number of off-lane
    vehicles.
    """
    off_lane = [v for v in priorities if v not in on_target]
    if len(off_lane) > len(ladder):
        raise ValueError(
            f"speed ladder of length {len(ladder)} cannot cover {len(off_lane)} "
            "deadlocked vehicles off their target lane; scenario under-configured"
        )
    speeds = dict(base_speeds)
    for rank, vid in enumerate(off_lane):
        speeds[vid] = base_speeds[vid] * ladder[rank]
    return SpeedAssignment(speeds, dict(base_speeds))


def maybe_revert(assignment: SpeedAssignment, plans: dict, references: dict, tol: float = 0.1) -> SpeedAssignment:
    """Restore original speeds for vehicles whose plan has reached its reference.

    A vehicle reverts when the pointwise max deviation of its plan from
    its reference trajectory is at most tol. Idempotent.
    """
    speeds = dict(assignment.speeds)
    for vid, plan in plans.items():
        ref = references.get(vid)
        if ref is None or vid not in speeds:
            continue
        dev = float(np.max(np.linalg.norm(plan.as_array() - ref.as_array(), axis=1)))
        if dev <= tol:
            speeds[vid] = assignment.original_speeds.get(vid, speeds[vid])
    return SpeedAssignment(speeds, dict(assignment.original_speeds))


def check_consensus(plans, references, d_min: float, tol: float = 0.5) -> bool:
    """True when every plan terminal meets its reference terminal and all
    pairwise sample distances stay >= d_min."""
    if len(plans) != len(references):
        raise ValueError("plans and references must align")
    for plan, ref in zip(plans, references):
        if plan.points[-1].distance_to(ref.points[-1]) > tol:
            return False
    arrays = [p.as_array() for p in plans]
    for i in range(len(arrays)):
        for j in range(i + 1, len(arrays)):
            H = min(len(arrays[i]), len(arrays[j]))
            d = np.linalg.norm(arrays[i][:H] - arrays[j][:H], axis=1)
            if float(d.min()) < d_min:
                return False
    return True


def side_of_path(path: ReferencePath, position: Position2, on_path_tol: float = 0.5) -> Side:
    """Which side of its reference path a vehicle currently occupies."""
    _, _, _, lateral = project_onto_path(path, position)
    if abs(lateral) <= on_path_tol:
        return Side.ON_PATH
    return Side.LEFT if lateral > 0.0 else Side.RIGHT
