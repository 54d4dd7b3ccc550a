"""Signed distance to oriented rectangles and half-space convexification.

The signed distance to a convex rectangle is a convex function of the
query point, so the first-order expansion around any point
under-estimates it. The half-spaces built here are therefore inner
approximations of the true keep-out constraint: any point satisfying the
half-space also satisfies the original distance bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .types import Position2, Trajectory, VehicleState


@dataclass(frozen=True)
class OrientedRect:
    """Rectangle with center, heading, and half extents (length along heading)."""

    center: Position2
    heading: float
    half_length: float
    half_width: float

    def __post_init__(self):
        if self.half_length <= 0.0 or self.half_width <= 0.0:
            raise ValueError("rectangle half extents must be positive")


@dataclass(frozen=True)
class HalfSpace:
    """Affine constraint {x : normal . x >= offset} with unit normal."""

    normal: tuple
    offset: float

    def __post_init__(self):
        nx, ny = self.normal
        norm = math.hypot(nx, ny)
        if abs(norm - 1.0) > 1e-9:
            raise ValueError("half-space normal must be unit length")
        object.__setattr__(self, "normal", (float(nx), float(ny)))

    def contains(self, point: Position2, tol: float = 0.0) -> bool:
        return self.normal[0] * point.x + self.normal[1] * point.y >= self.offset - tol


# Local-frame outward normals of the four edges, in the tie-break scan order
# that prefers +x, then +y (matches the documented interior subgradient rule).
_EDGE_NORMALS = ((1.0, 0.0), (0.0, 1.0), (-1.0, 0.0), (0.0, -1.0))


def signed_distance(point: Position2, rect: OrientedRect):
    """Signed distance from a point to an oriented rectangle, with gradient.

    Returns (distance, gradient). Positive outside (Euclidean distance to
    the boundary), negative inside (minus the penetration depth). The
    gradient is a unit (sub)gradient w.r.t. the point, pointing away from
    the rectangle.
    """
    c, s = math.cos(rect.heading), math.sin(rect.heading)
    dx = point.x - rect.center.x
    dy = point.y - rect.center.y
    # rotate into the rectangle frame
    px = c * dx + s * dy
    py = -s * dx + c * dy

    qx = abs(px) - rect.half_length
    qy = abs(py) - rect.half_width

    if qx > 0.0 or qy > 0.0:
        ox = max(qx, 0.0)
        oy = max(qy, 0.0)
        dist = math.hypot(ox, oy)
        gx = ox * (1.0 if px >= 0.0 else -1.0)
        gy = oy * (1.0 if py >= 0.0 else -1.0)
        norm = math.hypot(gx, gy)
        gx, gy = gx / norm, gy / norm
    else:
        # inside: depth to each edge; pick shallowest, tie-break by the
        # outward normal most aligned with (point - center)
        half = (rect.half_length, rect.half_width)
        best = None
        for nx, ny in _EDGE_NORMALS:
            depth = half[0 if ny == 0.0 else 1] - (px * nx + py * ny)
            align = px * nx + py * ny
            key = (depth, -align)
            if best is None or key < best[0]:
                best = (key, (nx, ny))
        (depth, _), (gx, gy) = best
        dist = -depth

    # rotate gradient back to the world frame
    return dist, (c * gx - s * gy, s * gx + c * gy)


def cfs_halfspace(x_k: Position2, rect: OrientedRect, margin: float) -> HalfSpace:
    """Linearize phi(x) = signed_distance(x, rect) - margin around x_k.

    The returned half-space {x : phi(x_k) + grad.(x - x_k) >= 0} is
    contained in {x : signed_distance(x, rect) >= margin}. Valid even when
    x_k itself violates the constraint.
    """
    dist, (gx, gy) = signed_distance(x_k, rect)
    phi = dist - margin
    # grad . x >= grad . x_k - phi
    offset = gx * x_k.x + gy * x_k.y - phi
    return HalfSpace((gx, gy), offset)


def line_blocked_interval(rect: OrientedRect, axis: int, value: float, margin: float):
    """Open interval of the free coordinate where the margin is violated.

    Restricts signed_distance(., rect) >= margin to the axis-aligned line
    where coordinate `axis` equals `value` and returns (lo, hi) such that
    points with free coordinate strictly inside violate the margin, or None
    when the whole line keeps the margin. The signed distance along a line
    is unimodal for a convex rectangle, so the violating set is a single
    interval; its endpoints are found by bisection.
    """

    def sd(t: float) -> float:
        p = Position2(t, value) if axis == 1 else Position2(value, t)
        return signed_distance(p, rect)[0]

    center_t = rect.center.x if axis == 1 else rect.center.y
    center_s = rect.center.y if axis == 1 else rect.center.x
    half_diag = math.hypot(rect.half_length, rect.half_width)
    if abs(center_s - value) >= margin + half_diag:
        return None
    reach = margin + rect.half_length + rect.half_width + 1.0
    # ternary search for the minimizer of the unimodal restriction
    lo, hi = center_t - reach, center_t + reach
    for _ in range(80):
        m1 = lo + (hi - lo) / 3.0
        m2 = hi - (hi - lo) / 3.0
        if sd(m1) <= sd(m2):
            hi = m2
        else:
            lo = m1
    t_min = 0.5 * (lo + hi)
    if sd(t_min) >= margin:
        return None

    def bisect(a: float, b: float) -> float:
        # sd(a) - margin and sd(b) - margin have opposite signs
        fa = sd(a) - margin
        for _ in range(60):
            mid = 0.5 * (a + b)
            fm = sd(mid) - margin
            if fa * fm <= 0.0:
                b = mid
            else:
                a = mid
                fa = fm
        return 0.5 * (a + b)

    return (
        bisect(center_t - reach, t_min),
        bisect(center_t + reach, t_min),
    )


def min_pairwise_distance(states) -> float:
    """Minimum center-to-center distance over all pairs of vehicle states."""
    if len(states) < 2:
        raise ValueError("need at least 2 states")
    pos = np.array(
        [
            [s.position.x, s.position.y] if isinstance(s, VehicleState) else [s.x, s.y]
            for s in states
        ]
    )
    diff = pos[:, None, :] - pos[None, :, :]
    d = np.sqrt((diff ** 2).sum(-1))
    iu = np.triu_indices(len(states), k=1)
    return float(d[iu].min())


def neighbor_rects(plan: Trajectory, fallback_heading: float, half_length: float, half_width: float):
    """Rectangles occupied by a neighbor at each plan step.

    The rectangle at step h is oriented along the plan segment h -> h+1
    (last segment reused at the horizon end); segments shorter than 1e-6 m
    fall back to the broadcast heading.
    """
    pts = plan.points
    H = len(pts)
    headings = []
    for h in range(H - 1):
        dx = pts[h + 1].x - pts[h].x
        dy = pts[h + 1].y - pts[h].y
        if math.hypot(dx, dy) < 1e-6:
            headings.append(headings[-1] if headings else fallback_heading)
        else:
            headings.append(math.atan2(dy, dx))
    headings.append(headings[-1] if headings else fallback_heading)
    return [OrientedRect(pts[h], headings[h], half_length, half_width) for h in range(H)]
