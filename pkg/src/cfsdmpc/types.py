"""Shared domain types for the multi-vehicle coordination stack.

All types are immutable value objects. Constructors validate their
invariants and raise ValueError on violation, so downstream modules can
assume well-formed inputs.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

# Sanity bound on per-sample displacement; covers the 50 m/s scenario
# while still catching unit errors.
DEFAULT_V_MAX = 60.0


def wrap_angle(theta: float) -> float:
    """Normalize an angle to (-pi, pi]."""
    out = math.fmod(theta + math.pi, 2.0 * math.pi)
    if out <= 0.0:
        out += 2.0 * math.pi
    return out - math.pi


@dataclass(frozen=True)
class Position2:
    """Planar position in meters."""

    x: float
    y: float

    def __post_init__(self):
        if not (math.isfinite(self.x) and math.isfinite(self.y)):
            raise ValueError("position components must be finite")

    def as_array(self) -> np.ndarray:
        return np.array([self.x, self.y])

    def distance_to(self, other: "Position2") -> float:
        return math.hypot(self.x - other.x, self.y - other.y)

    def to_dict(self) -> dict:
        return {"x": self.x, "y": self.y}

    @classmethod
    def from_dict(cls, d: dict) -> "Position2":
        return cls(float(d["x"]), float(d["y"]))


@dataclass(frozen=True)
class Trajectory:
    """A planned trajectory: H waypoints spaced sample_dt seconds apart."""

    points: tuple
    sample_dt: float
    v_max: float = DEFAULT_V_MAX

    def __post_init__(self):
        pts = tuple(self.points)
        object.__setattr__(self, "points", pts)
        if len(pts) < 2:
            raise ValueError("trajectory needs at least 2 points")
        if self.sample_dt <= 0.0:
            raise ValueError("sample_dt must be positive")
        bound = self.v_max * self.sample_dt
        for a, b in zip(pts, pts[1:]):
            if a.distance_to(b) > bound + 1e-9:
                raise ValueError(
                    f"consecutive displacement {a.distance_to(b):.3f} m exceeds "
                    f"v_max*dt = {bound:.3f} m"
                )

    def __len__(self) -> int:
        return len(self.points)

    def as_array(self) -> np.ndarray:
        """Waypoints as an (H, 2) array."""
        return np.array([[p.x, p.y] for p in self.points])

    def as_flat(self) -> np.ndarray:
        """Waypoints as a flat (2H,) array, point-major ordering."""
        return self.as_array().reshape(-1)

    @classmethod
    def from_array(cls, arr, sample_dt: float, v_max: float = DEFAULT_V_MAX) -> "Trajectory":
        arr = np.asarray(arr, dtype=float).reshape(-1, 2)
        return cls(tuple(Position2(float(x), float(y)) for x, y in arr), sample_dt, v_max)

    def to_dict(self) -> dict:
        return {
            "points": [p.to_dict() for p in self.points],
            "sample_dt": self.sample_dt,
            "v_max": self.v_max,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "Trajectory":
        return cls(
            tuple(Position2.from_dict(p) for p in d["points"]),
            float(d["sample_dt"]),
            float(d.get("v_max", DEFAULT_V_MAX)),
        )


@dataclass(frozen=True)
class VehicleState:
    """Plant state: position, forward speed, heading."""

    position: Position2
    speed: float
    heading: float

    def __post_init__(self):
        if self.speed < 0.0:
            raise ValueError("speed must be non-negative")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def to_dict(self) -> dict:
        return {"position": self.position.to_dict(), "speed": self.speed, "heading": self.heading}

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleState":
        return cls(Position2.from_dict(d["position"]), float(d["speed"]), float(d["heading"]))


@dataclass(frozen=True)
class VehicleGeometry:
    """Collision geometry: own footprint circle and neighbor rectangle."""

    circle_radius: float
    rect_half_length: float
    rect_half_width: float

    def __post_init__(self):
        if self.circle_radius <= 0.0 or self.rect_half_length <= 0.0 or self.rect_half_width <= 0.0:
            raise ValueError("geometry dimensions must be positive")

    def to_dict(self) -> dict:
        return {
            "circle_radius": self.circle_radius,
            "rect_half_length": self.rect_half_length,
            "rect_half_width": self.rect_half_width,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "VehicleGeometry":
        return cls(float(d["circle_radius"]), float(d["rect_half_length"]), float(d["rect_half_width"]))


@dataclass(frozen=True)
class PlannerWeights:
    """Quadratic objective weights: tracking, acceleration, slack."""

    c_o: float = 1.0
    c_a: float = 1.0
    c_s: float = 1000.0

    def __post_init__(self):
        if self.c_o <= 0.0 or self.c_a <= 0.0 or self.c_s <= 0.0:
            raise ValueError("weights must be positive")

    def to_dict(self) -> dict:
        return {"c_o": self.c_o, "c_a": self.c_a, "c_s": self.c_s}

    @classmethod
    def from_dict(cls, d: dict) -> "PlannerWeights":
        return cls(float(d["c_o"]), float(d["c_a"]), float(d["c_s"]))


@dataclass(frozen=True)
class ReferencePath:
    """Piecewise-linear centerline plus the desired travel speed along it."""

    polyline: tuple
    desired_speed: float

    def __post_init__(self):
        pts = tuple(self.polyline)
        object.__setattr__(self, "polyline", pts)
        if len(pts) < 2:
            raise ValueError("polyline needs at least 2 points")
        if self.desired_speed <= 0.0:
            raise ValueError("desired_speed must be positive")
        for a, b in zip(pts, pts[1:]):
            if a.distance_to(b) == 0.0:
                raise ValueError("consecutive polyline points must be distinct")

    def to_dict(self) -> dict:
        return {"polyline": [p.to_dict() for p in self.polyline], "desired_speed": self.desired_speed}

    @classmethod
    def from_dict(cls, d: dict) -> "ReferencePath":
        return cls(tuple(Position2.from_dict(p) for p in d["polyline"]), float(d["desired_speed"]))


@dataclass(frozen=True)
class DeadlockConfig:
    """Thresholds for the stuck-trajectory criterion over the plan tail."""

    n: int
    eps1: float
    eps2: float

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("tail length n must be >= 1")
        if self.eps1 <= 0.0 or self.eps2 <= 0.0:
            raise ValueError("thresholds must be positive")

    def to_dict(self) -> dict:
        return {"n": self.n, "eps1": self.eps1, "eps2": self.eps2}

    @classmethod
    def from_dict(cls, d: dict) -> "DeadlockConfig":
        return cls(int(d["n"]), float(d["eps1"]), float(d["eps2"]))


@dataclass(frozen=True)
class V2VMessage:
    """Broadcast packet: a vehicle's current plan plus its heading.

    The heading lets receivers orient the sender's rectangle when the
    plan is (nearly) stationary.
    """

    sender_id: int
    round: int
    trajectory: Trajectory
    heading: float

    def __post_init__(self):
        if self.round < 0:
            raise ValueError("round stamp must be non-negative")
        object.__setattr__(self, "heading", wrap_angle(self.heading))

    def to_dict(self) -> dict:
        return {
            "sender_id": self.sender_id,
            "round": self.round,
            "trajectory": self.trajectory.to_dict(),
            "heading": self.heading,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "V2VMessage":
        return cls(int(d["sender_id"]), int(d["round"]), Trajectory.from_dict(d["trajectory"]), float(d["heading"]))
