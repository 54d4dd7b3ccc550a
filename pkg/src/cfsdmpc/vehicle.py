"""Bicycle-kinematics plant and the low-level trajectory tracker.

The plant update follows the constant-steer arc model with travel
distance L_r = v0*T_r + a*T_r^2/2 and curvature kappa = tan(delta)/L_r.
Note the curvature deliberately uses L_r, not the wheelbase, so it
depends on step length; see the README note on this model choice.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

from .types import Position2, Trajectory, VehicleState, wrap_angle

ACCEL_MAX = 5.0
STEER_MAX = math.pi / 4.0

# default controller gains; the tracking controller itself is not part of
# the coordination design, so these are configuration
K_V = 2.0
K_H = 1.5
K_C = 0.8


def clamp(v, lo, hi):
    return lo if v < lo else hi if v > hi else v


@dataclass(frozen=True)
class ControlInput:
    """Acceleration and steering command, clamped to actuator bounds."""

    accel: float
    steer: float

    def __post_init__(self):
        object.__setattr__(self, "accel", clamp(self.accel, -ACCEL_MAX, ACCEL_MAX))
        object.__setattr__(self, "steer", clamp(self.steer, -STEER_MAX, STEER_MAX))


@dataclass(frozen=True)
class PlantParams:
    wheelbase: float = 2.8

    def __post_init__(self):
        if self.wheelbase <= 0.0:
            raise ValueError("wheelbase must be positive")


def kinematic_step(state: VehicleState, u: ControlInput, params: PlantParams, T_r: float) -> VehicleState:
    """Advance the plant by T_r under constant accel and steering.

    Speed is floored at zero: if the vehicle would stop mid-step, it
    travels only the stopping distance and stays put. With zero travel
    distance the pose is unchanged regardless of steering.
    """
    if T_r <= 0.0:
        raise ValueError("T_r must be positive")
    v0 = state.speed
    a = u.accel
    v1 = v0 + a * T_r
    if v1 < 0.0:
        # decelerating through zero: integrate only to the stop
        v1 = 0.0
        L_r = v0 * v0 / (2.0 * -a) if a < 0.0 else 0.0
    else:
        L_r = v0 * T_r + 0.5 * a * T_r * T_r
    if L_r <= 1e-12:
        return VehicleState(state.position, v1, state.heading)

    theta0 = state.heading
    kappa = math.tan(u.steer) / L_r
    if abs(kappa * L_r) < 1e-8:
        x1 = state.position.x + L_r * math.cos(theta0)
        y1 = state.position.y + L_r * math.sin(theta0)
        theta1 = theta0
    else:
        theta1 = theta0 + kappa * L_r
        x1 = state.position.x + (math.sin(theta1) - math.sin(theta0)) / kappa
        y1 = state.position.y + (math.cos(theta0) - math.cos(theta1)) / kappa
    return VehicleState(Position2(x1, y1), v1, wrap_angle(theta1))


def tracking_control(
    state: VehicleState,
    plan: Trajectory,
    desired_speed: float,
    k_v: float = K_V,
    k_h: float = K_H,
    k_c: float = K_C,
) -> ControlInput:
    """Proportional tracker toward the first plan segment.

    Acceleration chases the plan's implied speed (capped by
    desired_speed); steering combines heading error to the segment
    direction and signed cross-track offset. A degenerate plan commands
    full braking with zero steer.
    """
    p0, p1 = plan.points[0], plan.points[1]
    seg_dx = p1.x - p0.x
    seg_dy = p1.y - p0.y
    seg_len = math.hypot(seg_dx, seg_dy)
    if seg_len < 1e-9:
        return ControlInput(-ACCEL_MAX, 0.0)

    v_target = min(seg_len / plan.sample_dt, desired_speed)
    accel = k_v * (v_target - state.speed)

    tx, ty = seg_dx / seg_len, seg_dy / seg_len
    heading_err = wrap_angle(math.atan2(seg_dy, seg_dx) - state.heading)
    # signed lateral offset of the vehicle from the segment line (positive left)
    ox = state.position.x - p0.x
    oy = state.position.y - p0.y
    lateral = tx * oy - ty * ox
    steer = k_h * heading_err - k_c * lateral
    return ControlInput(accel, steer)
