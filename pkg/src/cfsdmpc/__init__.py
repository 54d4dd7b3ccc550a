"""Distributed MPC multi-vehicle coordination with convexified collision
constraints: planner, QP solver, deadlock resolution, and simulation harness."""

from .types import (
    DeadlockConfig,
    PlannerWeights,
    Position2,
    ReferencePath,
    Trajectory,
    V2VMessage,
    VehicleGeometry,
    VehicleState,
)
from .geometry import HalfSpace, OrientedRect, cfs_halfspace, min_pairwise_distance, signed_distance
from .qp import ActiveSetSolver, QpSolution, QpStatus, QuadraticProgram
from .planner import (
    LanePin,
    PlanResult,
    build_acceleration_operator,
    build_reference,
    cfs_solve,
    plan_centralized,
    plan_step,
    total_cost,
)
from .deadlock import (
    DeadlockStatus,
    Side,
    SpeedAssignment,
    assign_priorities,
    check_consensus,
    detect,
    maybe_revert,
    resolve,
)
from .vehicle import ControlInput, PlantParams, kinematic_step, tracking_control
from .scenario import (
    ControlMode,
    DeadlockPolicy,
    RoadType,
    ScenarioSpec,
    VehicleSetup,
    builtin_names,
    builtin_scenario,
    formation_scenario,
    load_scenario,
    validate_scenario,
)
from .harness import RoundLog, RunMetrics, ScenarioError, compare_centralized, export, run

__version__ = "0.1.0"
