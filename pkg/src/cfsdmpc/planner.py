"""Trajectory planning: quadratic objective, convexified collision
constraints, and the distributed / converged / centralized solve modes.

The decision variable for one vehicle is the stacked vector
[x^1; y^1; ...; x^H; y^H; s] of length 2H+2, where s is the 2D slack on
the initial-point equality x^1 = x_c + s. The centralized mode
concatenates these per-vehicle blocks in index order.
"""
from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import geometry
from .qp import ActiveSetSolver, QpStatus, QuadraticProgram
from .types import (
    PlannerWeights,
    Position2,
    ReferencePath,
    Trajectory,
    VehicleGeometry,
    VehicleState,
)


def build_acceleration_operator(H: int, T_s: float) -> np.ndarray:
    """Second-difference operator mapping a flat trajectory to accelerations.

    Row block h (for interior points h = 2..H-1, 1-indexed) is
    (x^{h+1} - 2 x^h + x^{h-1}) / T_s^2; output dimension 2(H-2).
    """
    if T_s <= 0.0:
        raise ValueError("T_s must be positive")
    if H < 3:
        return np.zeros((0, 2 * max(H, 0)))
    A = np.zeros((2 * (H - 2), 2 * H))
    inv = 1.0 / (T_s * T_s)
    for t in range(H - 2):
        for d in range(2):
            r = 2 * t + d
            A[r, 2 * t + d] = inv
            A[r, 2 * (t + 1) + d] = -2.0 * inv
            A[r, 2 * (t + 2) + d] = inv
    return A


@dataclass(frozen=True)
class ObjectiveForm:
    """Quadratic cost over [trajectory; slack], constant term dropped."""

    Q: np.ndarray
    q: np.ndarray


def build_objective(reference: Trajectory, weights: PlannerWeights) -> ObjectiveForm:
    H = len(reference)
    accel = build_acceleration_operator(H, reference.sample_dt)
    n = 2 * H + 2
    Q = np.zeros((n, n))
    Q[: 2 * H, : 2 * H] = weights.c_o * np.eye(2 * H) + weights.c_a * accel.T @ accel
    Q[2 * H :, 2 * H :] = 2.0 * weights.c_s * np.eye(2)
    q = np.zeros(n)
    q[: 2 * H] = -weights.c_o * reference.as_flat()
    return ObjectiveForm(Q, q)


# -- reference generation ---------------------------------------------------


def _polyline_cumlen(poly) -> np.ndarray:
    pts = np.array([[p.x, p.y] for p in poly])
    seg = np.sqrt(((pts[1:] - pts[:-1]) ** 2).sum(-1))
    return np.concatenate([[0.0], np.cumsum(seg)])


def project_onto_path(path: ReferencePath, point: Position2):
    """Closest point on the polyline: (arc_length, point, tangent, signed_lateral).

    signed_lateral is positive when the query point lies to the left of
    the local travel direction.
    """
    pts = np.array([[p.x, p.y] for p in path.polyline])
    p = np.array([point.x, point.y])
    cum = _polyline_cumlen(path.polyline)
    best = None
    for i in range(len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        ab = b - a
        L = np.linalg.norm(ab)
        t = float(np.clip((p - a) @ ab / (L * L), 0.0, 1.0))
        proj = a + t * ab
        d = float(np.linalg.norm(p - proj))
        if best is None or d < best[0]:
            tang = ab / L
            lat = float(tang[0] * (p - proj)[1] - tang[1] * (p - proj)[0])
            best = (d, cum[i] + t * L, proj, tang, lat)
    _, s, proj, tang, lat = best
    return s, Position2(float(proj[0]), float(proj[1])), (float(tang[0]), float(tang[1])), lat


def point_at_arclength(path: ReferencePath, s: float) -> Position2:
    pts = np.array([[p.x, p.y] for p in path.polyline])
    cum = _polyline_cumlen(path.polyline)
    s = float(np.clip(s, 0.0, cum[-1]))
    i = int(np.searchsorted(cum, s, side="right") - 1)
    i = min(i, len(pts) - 2)
    seg = cum[i + 1] - cum[i]
    t = (s - cum[i]) / seg
    p = pts[i] + t * (pts[i + 1] - pts[i])
    return Position2(float(p[0]), float(p[1]))


def build_reference(
    path: ReferencePath,
    current: Position2,
    H: int,
    T_s: float,
    desired_speed: float | None = None,
) -> Trajectory:
    """Reference trajectory marching along the path at the desired speed.

    Point h sits at arc length proj(current) + h * v * T_s, clamped at the
    path end. desired_speed overrides the path's own speed (used by the
    deadlock resolution).
    """
    v = path.desired_speed if desired_speed is None else desired_speed
    s0, _, _, _ = project_onto_path(path, current)
    pts = tuple(point_at_arclength(path, s0 + (h + 1) * v * T_s) for h in range(H))
    return Trajectory(pts, T_s)


def initial_plan(state: VehicleState, H: int, T_s: float) -> Trajectory:
    """Constant-velocity straight-line plan from the current state.

    Used to seed the first round's warm start and broadcast: it keeps the
    first linearization anchored at the vehicle instead of at the target
    lane, which matters for vehicles that start far off their reference.
    """
    pts = tuple(
        Position2(
            state.position.x + (h + 1) * state.speed * T_s * math.cos(state.heading),
            state.position.y + (h + 1) * state.speed * T_s * math.sin(state.heading),
        )
        for h in range(H)
    )
    return Trajectory(pts, T_s)


# -- distributed planning ----------------------------------------------------


@dataclass
class PlanResult:
    trajectory: Trajectory
    slack: np.ndarray
    solve_time: float
    qp_status: QpStatus
    cfs_iterations: int = 1
    objective: float = math.nan
    objective_history: list = field(default_factory=list)
    last_step_inf_norm: float = math.nan
    active_set: tuple = ()


@dataclass(frozen=True)
class LanePin:
    """Equality constraint pinning one coordinate of every plan point."""

    axis: int  # 0 = x, 1 = y
    value: float


def _collision_rows(
    warm: Trajectory,
    neighbors,
    geom: VehicleGeometry,
    n_vars: int,
    offset: int = 0,
    pin: "LanePin | None" = None,
):
    """Half-space rows (-normal . x^h <= -offset) for every step/neighbor.

    For a lane-pinned vehicle the generic half-space often points across the
    lane and contradicts the pin even though backing off along the lane is
    feasible. In that case the constraint is convexified on the pinned line
    instead: the violating stretch of the free coordinate is computed
    exactly and the plan point is kept on whichever side the warm start is
    closer to.
    """
    H = len(warm)
    rows, rhs = [], []
    for plan, heading in neighbors:
        rects = geometry.neighbor_rects(plan, heading, geom.rect_half_length, geom.rect_half_width)
        for h in range(H):
            if pin is not None:
                free = 1 - pin.axis
                blocked = geometry.line_blocked_interval(
                    rects[h], pin.axis, pin.value, geom.circle_radius
                )
                if blocked is None:
                    continue
                lo, hi = blocked
                warm_t = (warm.points[h].x, warm.points[h].y)[free]
                row = np.zeros(n_vars)
                if warm_t - lo <= hi - warm_t:
                    row[offset + 2 * h + free] = 1.0  # t <= lo
                    rows.append(row)
                    rhs.append(lo)
                else:
                    row[offset + 2 * h + free] = -1.0  # t >= hi
                    rows.append(row)
                    rhs.append(-hi)
                continue
            hs = geometry.cfs_halfspace(warm.points[h], rects[h], geom.circle_radius)
            row = np.zeros(n_vars)
            row[offset + 2 * h] = -hs.normal[0]
            row[offset + 2 * h + 1] = -hs.normal[1]
            rows.append(row)
            rhs.append(-hs.offset)
    return rows, rhs


def _repaired_start(z0, A, b, H, current: Position2):
    """Cheap feasibility repair of a warm start for plan_step problems.

    Every collision row touches exactly one plan point, so violated points
    can be projected onto their own half-plane intersections independently
    (cyclic projection), which is far cheaper than an LP phase 1. Returns
    the repaired vector, or z0 unchanged when some point cannot be repaired
    (the solver then falls back to its own phase 1).
    """
    resid = A @ z0 - b
    if np.all(resid <= 1e-9):
        return z0
    z = z0.copy()
    point_rows = {}
    for r in range(A.shape[0]):
        nz = np.flatnonzero(A[r])
        if nz.size:
            point_rows.setdefault(int(nz[0] // 2), []).append(r)
    for h, rows in point_rows.items():
        x = z[2 * h : 2 * h + 2]
        for _ in range(100):
            worst = 0.0
            for r in rows:
                a = A[r, 2 * h : 2 * h + 2]
                v = a @ x - b[r]
                if v > 1e-10:
                    x -= (v / (a @ a)) * a
                    worst = max(worst, v)
            if worst <= 1e-10:
                break
    if np.any(A @ z - b > 1e-7):
        return z0
    z[2 * H : 2 * H + 2] = z[:2] - current.as_array()
    return z


def _equality_rows(current: Position2, H: int, n_vars: int, offset: int, pin: LanePin | None):
    rows, rhs = [], []
    for d in range(2):
        row = np.zeros(n_vars)
        row[offset + d] = 1.0
        row[offset + 2 * H + d] = -1.0
        rows.append(row)
        rhs.append(current.x if d == 0 else current.y)
    if pin is not None:
        for h in range(H):
            row = np.zeros(n_vars)
            row[offset + 2 * h + pin.axis] = 1.0
            rows.append(row)
            rhs.append(pin.value)
    return rows, rhs


def plan_step(
    current: VehicleState,
    warm_start: Trajectory,
    neighbors,
    geom: VehicleGeometry,
    reference: Trajectory,
    weights: PlannerWeights,
    solver: ActiveSetSolver | None = None,
    pin: LanePin | None = None,
    warm_active=None,
) -> PlanResult:
    """One CFS iteration: linearize around warm_start, solve the QP.

    neighbors is a sequence of (Trajectory, heading) as received over V2V.
    On an infeasible QP the previous plan is returned unchanged with
    status Infeasible.
    """
    H = len(warm_start)
    if len(reference) != H:
        raise ValueError("reference and warm start horizons differ")
    solver = solver or ActiveSetSolver()
    n = 2 * H + 2
    obj = build_objective(reference, weights)
    a_rows, b_rows = _collision_rows(warm_start, neighbors, geom, n, pin=pin)
    e_rows, f_rows = _equality_rows(current.position, H, n, 0, pin)
    problem = QuadraticProgram(
        obj.Q,
        obj.q,
        np.array(a_rows) if a_rows else None,
        np.array(b_rows) if b_rows else None,
        np.array(e_rows),
        np.array(f_rows),
    )
    z0 = np.concatenate(
        [warm_start.as_flat(), warm_start.points[0].as_array() - current.position.as_array()]
    )
    if a_rows:
        z0 = _repaired_start(z0, np.array(a_rows), np.array(b_rows), H, current.position)
    t0 = time.perf_counter()
    sol = solver.solve(problem, warm_start=z0, warm_active=warm_active)
    dt = time.perf_counter() - t0
    if sol.status is QpStatus.INFEASIBLE:
        return PlanResult(warm_start, np.zeros(2), dt, sol.status, objective=math.inf)
    # solver output is not speed-limited (no dynamics in the QP); skip the sanity bound
    traj = Trajectory.from_array(sol.z[: 2 * H], warm_start.sample_dt, math.inf)
    return PlanResult(
        traj,
        sol.z[2 * H :].copy(),
        dt,
        sol.status,
        objective=sol.objective_value,
        active_set=sol.active_set,
    )


def cfs_solve(
    initial: Trajectory,
    neighbors,
    geom: VehicleGeometry,
    reference: Trajectory,
    weights: PlannerWeights,
    current: VehicleState | None = None,
    max_iters: int = 50,
    tol: float = 1e-6,
    pin: LanePin | None = None,
) -> PlanResult:
    """Iterate CFS linearize/solve steps to convergence.

    The objective sequence is non-increasing from the first feasible
    iterate on; iteration stops when the inf-norm step drops below tol.
    """
    if current is None:
        current = VehicleState(initial.points[0], 0.0, 0.0)
    solver = ActiveSetSolver()
    warm = initial
    history = []
    total_time = 0.0
    last_step = math.inf
    result = None
    active = None
    for k in range(max_iters):
        result = plan_step(current, warm, neighbors, geom, reference, weights, solver, pin, active)
        total_time += result.solve_time
        if result.qp_status is QpStatus.INFEASIBLE:
            result.cfs_iterations = k + 1
            result.objective_history = history
            result.solve_time = total_time
            return result
        history.append(result.objective)
        active = getattr(result, "active_set", None)
        last_step = float(np.max(np.abs(result.trajectory.as_array() - warm.as_array())))
        warm = result.trajectory
        if last_step < tol:
            break
    result.cfs_iterations = len(history)
    result.objective_history = history
    result.solve_time = total_time
    result.last_step_inf_norm = last_step
    return result


# -- centralized baseline ----------------------------------------------------


def plan_centralized(
    states,
    warm_starts,
    references,
    weights: PlannerWeights,
    d_min: float,
    max_iters: int = 30,
    tol: float = 1e-4,
    pins=None,
) -> list:
    """Converged CFS on the stacked multi-vehicle problem.

    Pairwise constraints ||x_i^h - x_j^h|| >= d_min are linearized jointly
    in both variables around the previous iterates (unit-vector
    subgradient; (1, 0) when the iterates coincide).
    """
    N = len(states)
    if not (N >= 2 and len(warm_starts) == N and len(references) == N):
        raise ValueError("need matching lists of at least 2 vehicles")
    H = len(warm_starts[0])
    T_s = warm_starts[0].sample_dt
    blk = 2 * H + 2
    n = N * blk
    pins = pins or [None] * N

    Q = np.zeros((n, n))
    q = np.zeros(n)
    for i in range(N):
        obj = build_objective(references[i], weights)
        Q[i * blk : (i + 1) * blk, i * blk : (i + 1) * blk] = obj.Q
        q[i * blk : (i + 1) * blk] = obj.q

    e_rows, f_rows = [], []
    for i in range(N):
        rows, rhs = _equality_rows(states[i].position, H, n, i * blk, pins[i])
        e_rows += rows
        f_rows += rhs
    E = np.array(e_rows)
    f = np.array(f_rows)

    solver = ActiveSetSolver(max_iter=1000)
    cur = [w.as_array() for w in warm_starts]
    z = np.concatenate(
        [
            np.concatenate([w.reshape(-1), w[0] - states[i].position.as_array()])
            for i, w in enumerate(cur)
        ]
    )
    statuses = QpStatus.OPTIMAL
    total_time = 0.0
    iters = 0
    for k in range(max_iters):
        iters = k + 1
        rows, rhs = [], []
        for i in range(N):
            for j in range(i + 1, N):
                for h in range(H):
                    diff = cur[i][h] - cur[j][h]
                    dist = float(np.linalg.norm(diff))
                    u = diff / dist if dist > 1e-9 else np.array([1.0, 0.0])
                    phi = dist - d_min
                    # phi + u.(xi - xi_k) - u.(xj - xj_k) >= 0
                    row = np.zeros(n)
                    row[i * blk + 2 * h : i * blk + 2 * h + 2] = -u
                    row[j * blk + 2 * h : j * blk + 2 * h + 2] = u
                    rows.append(row)
                    rhs.append(phi - u @ cur[i][h] + u @ cur[j][h])
        # each iterate is solved as a standalone QP, the conventional way to
        # implement this baseline; carrying solver state between replans is
        # exactly the advantage the per-vehicle planner is measured against
        problem = QuadraticProgram(Q, q, np.array(rows), np.array(rhs), E, f)
        t0 = time.perf_counter()
        sol = solver.solve(problem)
        total_time += time.perf_counter() - t0
        if sol.status is QpStatus.INFEASIBLE:
            statuses = sol.status
            break
        new = [sol.z[i * blk : i * blk + 2 * H].reshape(H, 2) for i in range(N)]
        step = max(float(np.max(np.abs(new[i] - cur[i]))) for i in range(N))
        cur = new
        z = sol.z
        if step < tol:
            break

    results = []
    for i in range(N):
        if statuses is QpStatus.INFEASIBLE:
            res = PlanResult(warm_starts[i], np.zeros(2), total_time / N, statuses, iters, math.inf)
        else:
            traj = Trajectory.from_array(cur[i], T_s, math.inf)
            slack = z[i * blk + 2 * H : (i + 1) * blk].copy()
            res = PlanResult(traj, slack, total_time / N, QpStatus.OPTIMAL, iters)
        results.append(res)
    return results


def total_cost(trajectories, slacks, references, weights: PlannerWeights) -> float:
    """Summed realized objective with the constant reference term dropped.

    Dropping 1/2 c_o ||x_ref||^2 makes totals negative for plans that track
    their references; comparisons between runs use the same convention.
    """
    total = 0.0
    for traj, slack, ref in zip(trajectories, slacks, references):
        x = traj.as_flat()
        xr = ref.as_flat()
        accel = build_acceleration_operator(len(traj), traj.sample_dt)
        s = np.asarray(slack, dtype=float)
        total += (
            0.5 * weights.c_o * x @ x
            - weights.c_o * x @ xr
            + 0.5 * weights.c_a * np.sum((accel @ x) ** 2)
            + weights.c_s * s @ s
        )
    return float(total)
