"""Scenario specifications: validation, built-in setups, TOML loading.

Built-in scenarios fix all coordination parameters (geometry r/l/w,
horizons, sampling and replanning times, deadlock thresholds, start
positions). The merging start positions are plain defaults chosen so
the parallel deadlock actually forms; adjust them freely.
"""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass

from .planner import LanePin
from .types import (
    DeadlockConfig,
    PlannerWeights,
    Position2,
    ReferencePath,
    VehicleGeometry,
    VehicleState,
)

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib


class RoadType(enum.Enum):
    HIGHWAY = "highway"
    INTERSECTION = "intersection"
    UNSTRUCTURED = "unstructured"


class ControlMode(enum.Enum):
    DIRECT_PLACEMENT = "direct_placement"
    TRACKED_CONTROL = "tracked_control"


@dataclass(frozen=True)
class VehicleSetup:
    initial: VehicleState
    path: ReferencePath
    geometry: VehicleGeometry
    pin: LanePin | None = None
    exit_point: Position2 | None = None


@dataclass(frozen=True)
class DeadlockPolicy:
    config: DeadlockConfig
    ladder: tuple = (2.5, 2.0, 1.5, 1.0)
    enabled: bool = True
    revert_tol: float = 0.1


@dataclass(frozen=True)
class ScenarioSpec:
    name: str
    road: RoadType
    vehicles: tuple
    weights: PlannerWeights
    H: int
    T_s: float
    T_r: float
    deadlock: DeadlockPolicy
    total_rounds: int
    control_mode: ControlMode
    margin: float  # collision margin r; also the safety-audit distance
    consensus_tol: float = 0.5
    wheelbase: float = 2.8
    centralized_d_min: float | None = None  # defaults to margin + 1

    def __post_init__(self):
        object.__setattr__(self, "vehicles", tuple(self.vehicles))
        if self.centralized_d_min is None:
            object.__setattr__(self, "centralized_d_min", self.margin + 1.0)


def validate_scenario(spec: ScenarioSpec) -> list:
    """Collect invariant violations; an empty list means the scenario is runnable."""
    issues = []
    if spec.H < 2:
        issues.append(f"horizon too short: H={spec.H} (need H >= 2)")
    if spec.T_s <= 0.0 or spec.T_r <= 0.0:
        issues.append("sampling and replanning times must be positive")
    if spec.total_rounds < 1:
        issues.append("total_rounds must be at least 1")
    if spec.control_mode is ControlMode.DIRECT_PLACEMENT and abs(spec.T_r - spec.T_s) > 1e-12:
        issues.append("direct placement requires T_r = T_s")
    if spec.control_mode is ControlMode.TRACKED_CONTROL and spec.T_r > spec.T_s + 1e-12:
        issues.append("tracked control requires T_r <= T_s")
    if spec.deadlock.config.n > spec.H:
        issues.append(f"deadlock tail n={spec.deadlock.config.n} exceeds horizon H={spec.H}")
    for i, a in enumerate(spec.vehicles):
        for j in range(i + 1, len(spec.vehicles)):
            d = a.initial.position.distance_to(spec.vehicles[j].initial.position)
            if d < spec.margin:
                issues.append(
                    f"initial collision: vehicles {i} and {j} start {d:.3f} m apart "
                    f"(< margin {spec.margin})"
                )
    return issues


# -- built-in scenarios -------------------------------------------------------

_GEOM = VehicleGeometry(circle_radius=3.0, rect_half_length=1.9, rect_half_width=1.0)
_GEOM_INTERSECTION = VehicleGeometry(circle_radius=2.5, rect_half_length=1.9, rect_half_width=1.0)
# Built-in scenarios use a smaller smoothness weight than the library default:
# the second-difference operator divides by T_s^2, so at T_s = 0.1 the default
# c_a = 1 makes plans too stiff to rejoin their references within the horizon.
_WEIGHTS = PlannerWeights(c_o=1.0, c_a=0.01, c_s=1000.0)

# highway lane centerlines (lane width 4 m, x-axis on Lane 1)
LANE_Y = {0: 4.0, 1: 0.0, 2: -4.0}


def _line_path(p0, p1, speed) -> ReferencePath:
    return ReferencePath((Position2(*p0), Position2(*p1)), speed)


def _state(x, y, speed, heading) -> VehicleState:
    return VehicleState(Position2(x, y), speed, heading)


def _unstructured() -> ScenarioSpec:
    vehicles = []
    radius, speed = 20.0, 10.0
    for k in range(3):
        ang = math.pi / 2.0 + k * 2.0 * math.pi / 3.0
        sx, sy = radius * math.cos(ang), radius * math.sin(ang)
        heading = math.atan2(-sy, -sx)
        path = _line_path((sx, sy), (-sx, -sy), speed)
        vehicles.append(VehicleSetup(_state(sx, sy, speed, heading), path, _GEOM))
    return ScenarioSpec(
        name="unstructured_road",
        road=RoadType.UNSTRUCTURED,
        vehicles=vehicles,
        weights=_WEIGHTS,
        H=10,
        T_s=0.1,
        T_r=0.1,
        deadlock=DeadlockPolicy(DeadlockConfig(5, 0.01, 0.2)),
        total_rounds=70,
        control_mode=ControlMode.DIRECT_PLACEMENT,
        margin=3.0,
    )


def _intersection() -> ScenarioSpec:
    speed = 10.0
    # vertical road on lanes x = +-2, horizontal road on lanes y = 23 / 27;
    # the conflict square is where the two roads overlap
    setups = [
        # start, goal, pin(axis, value), exit point of the outgoing lane
        ((2.0, 0.0), (2.0, 60.0), LanePin(0, 2.0), (2.0, 29.0)),
        ((-2.0, 50.0), (-2.0, -10.0), LanePin(0, -2.0), (-2.0, 21.0)),
        ((-25.0, 23.0), (35.0, 23.0), LanePin(1, 23.0), (4.0, 23.0)),
        ((25.0, 27.0), (-35.0, 27.0), LanePin(1, 27.0), (-4.0, 27.0)),
    ]
    vehicles = []
    for start, goal, pin, exit_pt in setups:
        heading = math.atan2(goal[1] - start[1], goal[0] - start[0])
        vehicles.append(
            VehicleSetup(
                _state(*start, speed, heading),
                _line_path(start, goal, speed),
                _GEOM_INTERSECTION,
                pin=pin,
                exit_point=Position2(*exit_pt),
            )
        )
    return ScenarioSpec(
        name="intersection",
        road=RoadType.INTERSECTION,
        vehicles=vehicles,
        weights=_WEIGHTS,
        H=10,
        T_s=0.1,
        T_r=0.1,
        deadlock=DeadlockPolicy(DeadlockConfig(2, 0.15, 2.0)),
        total_rounds=110,
        control_mode=ControlMode.DIRECT_PLACEMENT,
        margin=2.5,
    )


def _crossing() -> ScenarioSpec:
    speed = 10.0
    vehicles = [
        # vehicle 1: Lane 2 -> Lane 0, vehicle 2: Lane 0 -> Lane 2
        VehicleSetup(_state(0.0, -4.0, speed, 0.0), _line_path((0.0, 4.0), (60.0, 4.0), speed), _GEOM),
        VehicleSetup(_state(0.0, 4.0, speed, 0.0), _line_path((0.0, -4.0), (60.0, -4.0), speed), _GEOM),
    ]
    return ScenarioSpec(
        name="crossing",
        road=RoadType.HIGHWAY,
        vehicles=vehicles,
        weights=_WEIGHTS,
        H=20,
        T_s=0.1,
        T_r=0.02,
        deadlock=DeadlockPolicy(DeadlockConfig(5, 0.01, 0.2), ladder=(1.5, 1.0)),
        total_rounds=400,
        control_mode=ControlMode.TRACKED_CONTROL,
        margin=3.0,
    )


def _platoon() -> ScenarioSpec:
    speed = 20.0
    starts = [(0.0, -4.0), (6.0, 4.0), (12.0, -4.0), (18.0, 4.0)]
    vehicles = [
        VehicleSetup(_state(x, y, speed, 0.0), _line_path((0.0, 0.0), (140.0, 0.0), speed), _GEOM)
        for x, y in starts
    ]
    return ScenarioSpec(
        name="platoon",
        road=RoadType.HIGHWAY,
        vehicles=vehicles,
        weights=_WEIGHTS,
        H=20,
        T_s=0.1,
        T_r=0.02,
        deadlock=DeadlockPolicy(DeadlockConfig(5, 0.01, 0.2)),
        total_rounds=300,
        control_mode=ControlMode.TRACKED_CONTROL,
        margin=3.0,
    )


def _merging() -> ScenarioSpec:
    # start positions are not published; these defaults put the two merging
    # vehicles alongside the Lane 1 pair so that the parallel deadlock forms
    speed = 10.0
    lane1 = [(0.0, 0.0), (8.0, 0.0)]
    lane0 = [(4.0, 4.0), (12.0, 4.0)]
    vehicles = [
        VehicleSetup(_state(x, y, speed, 0.0), _line_path((0.0, 0.0), (110.0, 0.0), speed), _GEOM)
        for x, y in lane1 + lane0
    ]
    return ScenarioSpec(
        name="merging",
        road=RoadType.HIGHWAY,
        vehicles=vehicles,
        weights=_WEIGHTS,
        H=25,
        T_s=0.1,
        T_r=0.02,
        deadlock=DeadlockPolicy(DeadlockConfig(5, 0.01, 0.2)),
        total_rounds=450,
        control_mode=ControlMode.TRACKED_CONTROL,
        margin=3.0,
    )


def _overtaking() -> ScenarioSpec:
    vehicles = [
        VehicleSetup(_state(0.0, 0.0, 50.0, 0.0), _line_path((0.0, 0.0), (190.0, 0.0), 50.0), _GEOM),
        VehicleSetup(_state(15.0, 0.0, 10.0, 0.0), _line_path((0.0, 0.0), (190.0, 0.0), 10.0), _GEOM),
        VehicleSetup(_state(20.0, -4.0, 10.0, 0.0), _line_path((0.0, -4.0), (190.0, -4.0), 10.0), _GEOM),
        VehicleSetup(_state(25.0, 0.0, 10.0, 0.0), _line_path((0.0, 0.0), (190.0, 0.0), 10.0), _GEOM),
    ]
    return ScenarioSpec(
        name="overtaking",
        road=RoadType.HIGHWAY,
        vehicles=vehicles,
        weights=_WEIGHTS,
        H=25,
        T_s=0.1,
        T_r=0.02,
        deadlock=DeadlockPolicy(DeadlockConfig(5, 0.01, 0.2)),
        total_rounds=220,
        control_mode=ControlMode.TRACKED_CONTROL,
        margin=3.0,
    )


_BUILTINS = {
    "unstructured_road": _unstructured,
    "intersection": _intersection,
    "crossing": _crossing,
    "platoon": _platoon,
    "merging": _merging,
    "overtaking": _overtaking,
}


def builtin_scenario(name: str) -> ScenarioSpec:
    try:
        return _BUILTINS[name]()
    except KeyError:
        raise ValueError(
            f"unknown scenario {name!r}; valid names: {', '.join(sorted(_BUILTINS))}"
        ) from None


def builtin_names() -> list:
    return sorted(_BUILTINS)


def formation_scenario(n_vehicles: int, tracked: bool = False, T_s: float = 0.1, rounds: int | None = None) -> ScenarioSpec:
    """Platoon-formation instance with 2..N vehicles, used for the
    centralized-vs-distributed comparisons."""
    speed = 20.0
    vehicles = []
    for k in range(n_vehicles):
        x = 6.0 * k
        y = -4.0 if k % 2 == 0 else 4.0
        vehicles.append(
            VehicleSetup(_state(x, y, speed, 0.0), _line_path((0.0, 0.0), (200.0, 0.0), speed), _GEOM)
        )
    return ScenarioSpec(
        name=f"formation_{n_vehicles}",
        road=RoadType.HIGHWAY,
        vehicles=vehicles,
        weights=_WEIGHTS,
        H=20,
        T_s=T_s,
        # tracked runs replan every 0.02 s against 0.1 s plan samples;
        # direct-placement runs replan once per plan step
        T_r=0.02 if tracked else T_s,
        deadlock=DeadlockPolicy(DeadlockConfig(5, 0.01, 0.2)),
        total_rounds=rounds if rounds is not None else (100 if tracked else 30),
        control_mode=ControlMode.TRACKED_CONTROL if tracked else ControlMode.DIRECT_PLACEMENT,
        margin=3.0,
    )


# -- scenario files -----------------------------------------------------------


def load_scenario(path) -> ScenarioSpec:
    """Load a scenario from a TOML file (schema documented in the README)."""
    with open(path, "rb") as fh:
        doc = tomllib.load(fh)
    try:
        return _scenario_from_doc(doc)
    except KeyError as exc:
        raise ValueError(f"scenario file {path} is missing required key {exc}") from None


def _scenario_from_doc(doc) -> ScenarioSpec:
    sc = doc["scenario"]
    weights = PlannerWeights(**doc.get("weights", {}))
    dl = doc.get("deadlock", {})
    policy = DeadlockPolicy(
        DeadlockConfig(int(dl.get("n", 5)), float(dl.get("eps1", 0.01)), float(dl.get("eps2", 0.2))),
        ladder=tuple(dl.get("ladder", (2.5, 2.0, 1.5, 1.0))),
        enabled=bool(dl.get("enabled", True)),
        revert_tol=float(dl.get("revert_tol", 0.1)),
    )
    vehicles = []
    for v in doc["vehicles"]:
        geom = VehicleGeometry(
            float(v.get("circle_radius", sc.get("margin", 3.0))),
            float(v.get("rect_half_length", 1.9)),
            float(v.get("rect_half_width", 1.0)),
        )
        poly = tuple(Position2(float(p[0]), float(p[1])) for p in v["path"])
        pin = None
        if "pin_axis" in v:
            pin = LanePin(int(v["pin_axis"]), float(v["pin_value"]))
        exit_pt = None
        if "exit_point" in v:
            exit_pt = Position2(float(v["exit_point"][0]), float(v["exit_point"][1]))
        vehicles.append(
            VehicleSetup(
                _state(float(v["x"]), float(v["y"]), float(v.get("speed", v["desired_speed"])), float(v.get("heading", 0.0))),
                ReferencePath(poly, float(v["desired_speed"])),
                geom,
                pin=pin,
                exit_point=exit_pt,
            )
        )
    return ScenarioSpec(
        name=str(sc.get("name", "custom")),
        road=RoadType(sc.get("road", "highway")),
        vehicles=vehicles,
        weights=weights,
        H=int(sc["H"]),
        T_s=float(sc["T_s"]),
        T_r=float(sc["T_r"]),
        deadlock=policy,
        total_rounds=int(sc["total_rounds"]),
        control_mode=ControlMode(sc.get("control_mode", "tracked_control")),
        margin=float(sc.get("margin", 3.0)),
        consensus_tol=float(sc.get("consensus_tol", 0.5)),
        wheelbase=float(sc.get("wheelbase", 2.8)),
    )
