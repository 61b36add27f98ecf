"""Base placement and control for mobile pick-and-place on-the-move."""

from .controller import ControllerConfig, GoalMode, GoalSpec, LocalController, RobotState, proximity_penalty_scale
from .geometry import ConvexPolygon, Pose2D, Twist, angle_diff, wrap_angle
from .limits import DEFAULT_LIMITS, RobotLimits
from .placement import Candidate, PlacementConfig, generate_candidates, score_candidates, select_placement
from .planner import CostTree, GlobalPath, VisGraph, build_graph, one_to_many_costs, path_rtr_time, plan
from .sim import GraspPhase, Method, TrialConfig, TrialResult, run_trial
from .world import Scenario, WorldModel, builtin_scenarios, load_scenario, scenario_by_name

__all__ = [
    "Candidate",
    "ControllerConfig",
    "ConvexPolygon",
    "CostTree",
    "DEFAULT_LIMITS",
    "GlobalPath",
    "GoalMode",
    "GoalSpec",
    "GraspPhase",
    "LocalController",
    "Method",
    "PlacementConfig",
    "Pose2D",
    "RobotLimits",
    "RobotState",
    "Scenario",
    "TrialConfig",
    "TrialResult",
    "Twist",
    "VisGraph",
    "WorldModel",
    "angle_diff",
    "build_graph",
    "builtin_scenarios",
    "generate_candidates",
    "load_scenario",
    "one_to_many_costs",
    "path_rtr_time",
    "plan",
    "proximity_penalty_scale",
    "run_trial",
    "scenario_by_name",
    "score_candidates",
    "select_placement",
    "wrap_angle",
]
