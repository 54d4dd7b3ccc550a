"""Bicycle-kinematics plant update and the proportional trajectory tracker."""

import math

import numpy as np
import pytest

from cfsdmpc.types import Position2, Trajectory, VehicleState, wrap_angle
from cfsdmpc.vehicle import (
    ACCEL_MAX,
    STEER_MAX,
    ControlInput,
    PlantParams,
    kinematic_step,
    tracking_control,
)

PARAMS = PlantParams()


def _state(x, y, v, theta):
    return VehicleState(Position2(x, y), v, theta)


def _fine_integrate(state, u, T_r, steps=200_000):
    """Euler integration of the same arc model: curvature tan(delta)/L_r held
    over the step, speed evolving with constant accel. Independent oracle."""
    v0, a = state.speed, u.accel
    v1 = v0 + a * T_r
    if v1 < 0.0:
        L_r = v0 * v0 / (2.0 * -a) if a < 0.0 else 0.0
    else:
        L_r = v0 * T_r + 0.5 * a * T_r * T_r
    if L_r <= 1e-12:
        return state.position.x, state.position.y, max(v1, 0.0), state.heading
    kappa = math.tan(u.steer) / L_r
    x, y, th = state.position.x, state.position.y, state.heading
    ds = L_r / steps
    for _ in range(steps):
        x += ds * math.cos(th + 0.5 * kappa * ds)  # midpoint rule on the arc
        y += ds * math.sin(th + 0.5 * kappa * ds)
        th += kappa * ds
    return x, y, max(v1, 0.0), th


class TestKinematicStep:
    def test_straight_line(self):
        out = kinematic_step(_state(0, 0, 10, 0), ControlInput(0.0, 0.0), PARAMS, 0.1)
        assert out.position.x == pytest.approx(1.0, abs=1e-12)
        assert out.position.y == pytest.approx(0.0, abs=1e-12)
        assert out.speed == pytest.approx(10.0)
        assert out.heading == 0.0

    def test_unit_curvature_closed_form(self):
        # v0=10, T_r=0.1 gives L_r=1; steer pi/4 makes kappa = tan(pi/4)/1 = 1
        out = kinematic_step(_state(0, 0, 10, 0), ControlInput(0.0, math.pi / 4), PARAMS, 0.1)
        assert out.position.x == pytest.approx(math.sin(1.0), abs=1e-9)
        assert out.position.y == pytest.approx(1.0 - math.cos(1.0), abs=1e-9)
        assert out.heading == pytest.approx(1.0, abs=1e-12)

    def test_speed_floors_at_zero(self):
        out = kinematic_step(_state(0, 0, 0.2, 0), ControlInput(-5.0, 0.0), PARAMS, 0.1)
        assert out.speed == 0.0
        # travels only the stopping distance v0^2 / (2|a|)
        assert out.position.x == pytest.approx(0.2**2 / 10.0, abs=1e-12)
        assert out.position.x >= 0.0

    def test_stationary_ignores_steer(self):
        s = _state(3.0, -2.0, 0.0, 0.7)
        out = kinematic_step(s, ControlInput(0.0, 0.5), PARAMS, 0.1)
        assert out == s

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            kinematic_step(_state(0, 0, 1, 0), ControlInput(0, 0), PARAMS, 0.0)

    def test_matches_fine_integration(self):
        rng = np.random.default_rng(17)
        for _ in range(10):
            s = _state(
                rng.uniform(-5, 5),
                rng.uniform(-5, 5),
                rng.uniform(0.5, 20.0),
                rng.uniform(-math.pi, math.pi),
            )
            u = ControlInput(rng.uniform(-3, 3), rng.uniform(-0.6, 0.6))
            out = kinematic_step(s, u, PARAMS, 0.1)
            x, y, v, th = _fine_integrate(s, u, 0.1)
            assert out.position.x == pytest.approx(x, abs=1e-6)
            assert out.position.y == pytest.approx(y, abs=1e-6)
            assert out.speed == pytest.approx(v, abs=1e-12)
            assert wrap_angle(out.heading - th) == pytest.approx(0.0, abs=1e-9)

    def test_continuity_at_straight_line_switch(self):
        s = _state(0, 0, 10, 0.3)
        straight = kinematic_step(s, ControlInput(0.0, 0.0), PARAMS, 0.1)
        tiny = kinematic_step(s, ControlInput(0.0, 1e-9), PARAMS, 0.1)
        assert tiny.position.distance_to(straight.position) < 1e-6

    def test_arc_length_preserved(self):
        rng = np.random.default_rng(29)
        for _ in range(10):
            v0 = rng.uniform(1.0, 20.0)
            a = rng.uniform(-2.0, 3.0)
            steer = rng.uniform(-0.7, 0.7)
            T_r = 0.1
            s = _state(0, 0, v0, rng.uniform(-math.pi, math.pi))
            out = kinematic_step(s, ControlInput(a, steer), PARAMS, T_r)
            L_r = v0 * T_r + 0.5 * a * T_r * T_r
            kappa = math.tan(steer) / L_r
            if abs(kappa * L_r) < 1e-8:
                chord = L_r
            else:
                chord = abs(2.0 / kappa * math.sin(kappa * L_r / 2.0))
            assert out.position.distance_to(s.position) == pytest.approx(chord, abs=1e-9)

    def test_rigid_motion_equivariance(self):
        u = ControlInput(1.0, 0.3)
        base = kinematic_step(_state(0, 0, 8.0, 0.2), u, PARAMS, 0.1)
        phi, tx, ty = 0.9, 4.0, -7.0
        moved = kinematic_step(
            _state(
                tx + 0.0 * math.cos(phi) - 0.0 * math.sin(phi),
                ty,
                8.0,
                0.2 + phi,
            ),
            u,
            PARAMS,
            0.1,
        )
        # rotate base displacement by phi, then translate
        bx, by = base.position.x, base.position.y
        want_x = tx + bx * math.cos(phi) - by * math.sin(phi)
        want_y = ty + bx * math.sin(phi) + by * math.cos(phi)
        assert moved.position.x == pytest.approx(want_x, abs=1e-9)
        assert moved.position.y == pytest.approx(want_y, abs=1e-9)
        assert wrap_angle(moved.heading - (base.heading + phi)) == pytest.approx(0.0, abs=1e-12)


class TestControlInput:
    def test_clamping(self):
        u = ControlInput(100.0, -2.0)
        assert u.accel == ACCEL_MAX
        assert u.steer == -STEER_MAX

    def test_plant_params_validation(self):
        with pytest.raises(ValueError):
            PlantParams(0.0)


class TestTrackingControl:
    def _plan(self, speed, T_s=0.1, H=5, y=0.0):
        return Trajectory(
            tuple(Position2((h + 0) * speed * T_s, y) for h in range(H)), T_s, math.inf
        )

    def test_zero_error_zero_command(self):
        plan = self._plan(10.0)
        state = VehicleState(plan.points[0], 10.0, 0.0)
        u = tracking_control(state, plan, desired_speed=10.0)
        assert u.accel == pytest.approx(0.0, abs=1e-9)
        assert u.steer == pytest.approx(0.0, abs=1e-9)

    def test_acceleration_saturates(self):
        plan = self._plan(50.0)
        state = VehicleState(plan.points[0], 0.0, 0.0)
        u = tracking_control(state, plan, desired_speed=100.0)
        assert u.accel == ACCEL_MAX

    def test_desired_speed_caps_target(self):
        plan = self._plan(20.0)  # plan implies 20 m/s
        state = VehicleState(plan.points[0], 10.0, 0.0)
        u = tracking_control(state, plan, desired_speed=10.0)
        assert u.accel == pytest.approx(0.0, abs=1e-9)

    def test_left_offset_steers_right(self):
        plan = self._plan(10.0)
        state = VehicleState(Position2(0.0, 1.0), 10.0, 0.0)  # left of the segment
        u = tracking_control(state, plan, desired_speed=10.0)
        assert u.steer < 0.0

    def test_heading_error_steers_back(self):
        plan = self._plan(10.0)
        state = VehicleState(plan.points[0], 10.0, 0.5)  # pointing left of segment
        u = tracking_control(state, plan, desired_speed=10.0)
        assert u.steer < 0.0

    def test_degenerate_plan_brakes(self):
        plan = Trajectory(tuple(Position2(1.0, 1.0) for _ in range(3)), 0.1, math.inf)
        u = tracking_control(VehicleState(Position2(0, 0), 5.0, 0.0), plan, 10.0)
        assert u.accel == -ACCEL_MAX
        assert u.steer == 0.0

    def test_outputs_always_in_bounds(self):
        rng = np.random.default_rng(31)
        for _ in range(50):
            pts = rng.uniform(-50, 50, size=(4, 2))
            plan = Trajectory.from_array(pts, 0.1, math.inf)
            state = _state(
                rng.uniform(-50, 50),
                rng.uniform(-50, 50),
                rng.uniform(0, 40),
                rng.uniform(-math.pi, math.pi),
            )
            u = tracking_control(state, plan, rng.uniform(1, 40))
            assert -ACCEL_MAX <= u.accel <= ACCEL_MAX
            assert -STEER_MAX <= u.steer <= STEER_MAX
