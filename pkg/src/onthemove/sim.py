"""Kinematic pick-and-place trials with injected grasp-failure delay.

A trial drives the base with the local controller toward a method-specific
goal, models the grasp and the drop as reach-radius events, and logs one
row per control step. Three methods are available:

* ``proposed``: re-scores the placement ring every step while the object
  is not held, then heads through the drop point without stopping.
* ``reactive``: drives to the nearest free pose on the ring, stops, grasps,
  then drives to the nearest pose on a ring around the drop point.
* ``planned``: scores the ring once at the start, then drives through the
  chosen placement and on to the drop point regardless of the grasp.
"""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field, replace
from enum import Enum
from pathlib import Path
from typing import Sequence

import numpy as np

from .controller import (
    ControllerConfig,
    GoalMode,
    GoalSpec,
    LocalController,
    RobotState,
    intermediate_target,
    kinematic_step,
)
from .geometry import Pose2D, Twist, point_segment_distance
from .limits import DEFAULT_LIMITS, RobotLimits
from .placement import (
    Candidate,
    PlacementConfig,
    depart_costs,
    generate_candidates,
    score_candidates,
    select_placement,
)
from .planner import NO_PATH, CostTree, GlobalPath, VisGraph, build_graph, plan
from .world import ROBOT_RADIUS, ProximityGrid, Scenario, build_grid, is_pose_free

TRAJECTORY_HEADER = ("t", "x", "y", "theta", "v", "omega", "phase", "goal_x", "goal_y", "goal_theta")
LOS_MARGIN = 0.05  # m; obstacles shrink by this much for target line-of-sight checks
STATIONARY_SPEED = 0.01  # m/s and rad/s; below this the reactive base counts as stopped


class Method(str, Enum):
    PROPOSED = "proposed"
    REACTIVE = "reactive"
    PLANNED = "planned"


class PhaseKind(str, Enum):
    NOT_HELD = "not_held"
    HELD = "held"
    DROPPED = "dropped"


@dataclass(frozen=True)
class GraspPhase:
    """Grasp state plus the timestamps collected so far."""

    kind: PhaseKind = PhaseKind.NOT_HELD
    first_attempt_time: float | None = None
    grasp_time: float | None = None
    drop_time: float | None = None


@dataclass(frozen=True)
class TrialConfig:
    scenario: Scenario
    method: Method = Method.PROPOSED
    failure_delay: float = 0.0  # s
    timeout: float = 60.0  # s
    dt: float = 0.05  # s
    reach_radius: float = 0.9  # m
    deterministic_search: bool = True
    controller: ControllerConfig = field(default_factory=ControllerConfig)
    placement: PlacementConfig = field(default_factory=PlacementConfig)
    limits: RobotLimits = DEFAULT_LIMITS

    def __post_init__(self) -> None:
        object.__setattr__(self, "method", Method(self.method))
        if self.failure_delay < 0.0:
            raise ValueError("failure_delay must be non-negative")
        if not self.timeout > 0.0 or not self.reach_radius > 0.0:
            raise ValueError("timeout and reach_radius must be positive")
        if abs(self.dt - self.controller.dt) > 1e-12:
            raise ValueError("trial dt must match the controller period")


@dataclass(frozen=True)
class LogRow:
    t: float
    pose: Pose2D
    twist: Twist
    phase: PhaseKind
    goal: Pose2D | None

    def csv_fields(self) -> list[str]:
        g = self.goal
        gx, gy, gth = ("", "", "") if g is None else (f"{g.x:.6f}", f"{g.y:.6f}", f"{g.theta:.6f}")
        p, w = self.pose, self.twist
        return [
            f"{self.t:.2f}",
            f"{p.x:.6f}",
            f"{p.y:.6f}",
            f"{p.theta:.6f}",
            f"{w.v:.6f}",
            f"{w.omega:.6f}",
            self.phase.value,
            gx,
            gy,
            gth,
        ]


@dataclass
class TrialResult:
    scenario: str
    method: Method
    failure_delay: float
    success: bool
    exec_time: float | None
    first_attempt_time: float | None
    grasp_time: float | None
    drop_time: float | None
    trajectory: list[LogRow]
    placement_evaluations: int = 0
    max_search_ms: float = 0.0

    @property
    def steps(self) -> int:
        return len(self.trajectory)

    def write_trajectory(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(TRAJECTORY_HEADER)
            for row in self.trajectory:
                w.writerow(row.csv_fields())


def _in_reach(robot: Pose2D, target: Sequence[float], reach: float) -> bool:
    return math.hypot(robot.x - target[0], robot.y - target[1]) <= reach


def grasp_update(
    phase: GraspPhase,
    robot: Pose2D,
    obj: Sequence[float],
    t: float,
    delay: float,
    reach: float,
    can_attempt: bool = True,
) -> GraspPhase:
    """Advance the grasp state machine by one step.

    The first in-reach step (where attempts are allowed) starts the failure
    timer; the grasp succeeds at the first in-reach step once the timer has
    run out. Leaving reach does not reset the timer.
    """
    if phase.kind is not PhaseKind.NOT_HELD or not can_attempt or not _in_reach(robot, obj, reach):
        return phase
    t0 = phase.first_attempt_time
    if t0 is None:
        t0 = t
        phase = replace(phase, first_attempt_time=t)
    # Small slack so that delays that are whole multiples of dt are not lost to rounding.
    if t >= t0 + delay - 1e-9:
        return replace(phase, kind=PhaseKind.HELD, grasp_time=t)
    return phase


def drop_update(phase: GraspPhase, robot: Pose2D, drop: Sequence[float], t: float, reach: float) -> GraspPhase:
    """Release the object as soon as it is held within reach of the drop point."""
    if phase.kind is PhaseKind.HELD and _in_reach(robot, drop, reach):
        return replace(phase, kind=PhaseKind.DROPPED, drop_time=t)
    return phase


def reactive_ring_pose(
    robot: Pose2D, target: Sequence[float], grid: ProximityGrid, radius: float = 0.6
) -> Pose2D | None:
    """Free pose on the ring around ``target`` closest to the robot, facing the target.

    The ring is scanned at 1 degree steps; None when every sample is occupied.
    """
    tx, ty = float(target[0]), float(target[1])
    deg = np.arange(360)
    a = np.radians(deg)
    xs = tx + radius * np.cos(a)
    ys = ty + radius * np.sin(a)
    d = np.hypot(xs - robot.x, ys - robot.y)
    free = np.array([not grid.is_occupied((x, y)) for x, y in zip(xs, ys)])
    if not free.any():
        return None
    # Exact projection first, if it is free: keeps a robot already on the ring in place.
    dx, dy = robot.x - tx, robot.y - ty
    r = math.hypot(dx, dy)
    if r > 1e-12:
        px, py = tx + radius * dx / r, ty + radius * dy / r
        if not grid.is_occupied((px, py)):
            d_best = float(d[free].min())
            if math.hypot(px - robot.x, py - robot.y) <= d_best + 1e-12:
                return Pose2D(px, py, math.atan2(ty - py, tx - px))
    i = int(np.flatnonzero(free)[np.argmin(d[free])])
    return Pose2D(float(xs[i]), float(ys[i]), math.atan2(ty - ys[i], tx - xs[i]))


class TrialContext:
    """Per-scenario data shared read-only by trials: graph, grid, candidates and depart costs."""

    def __init__(self, scenario: Scenario, placement: PlacementConfig = PlacementConfig(), limits: RobotLimits = DEFAULT_LIMITS):
        w = scenario.world
        self.scenario = scenario
        self.graph: VisGraph = build_graph(w, ROBOT_RADIUS)
        self.grid: ProximityGrid = build_grid(w, ROBOT_RADIUS)
        self.candidates: list[Candidate] = generate_candidates(w.object_position, placement)
        self.depart = depart_costs(self.candidates, w.drop_position, self.graph, self.grid, limits)
        self.placement = placement
        self.limits = limits

    def line_of_sight(self, p: Sequence[float], pts: np.ndarray) -> np.ndarray:
        return self.graph.visible(p, pts, margin=LOS_MARGIN)

    def check_feasible(self) -> None:
        w = self.scenario.world
        if not is_pose_free(self.grid, self.scenario.start_pose):
            raise ValueError(f"scenario {self.scenario.name!r}: start pose is in collision")
        if not np.isfinite(self.depart).any():
            raise ValueError(f"scenario {self.scenario.name!r}: no placement can reach the drop point")
        if reactive_ring_pose(self.scenario.start_pose, w.drop_position, self.grid, self.placement.ring_radius) is None:
            raise ValueError(f"scenario {self.scenario.name!r}: drop point is unreachable")


_CONTEXTS: dict[tuple, TrialContext] = {}


def context_for(scenario: Scenario, placement: PlacementConfig, limits: RobotLimits) -> TrialContext:
    key = (scenario.to_json().__repr__(), placement, limits)
    ctx = _CONTEXTS.get(key)
    if ctx is None:
        ctx = _CONTEXTS[key] = TrialContext(scenario, placement, limits)
    return ctx


def run_trial(cfg: TrialConfig, ctx: TrialContext | None = None) -> TrialResult:
    """Simulate one trial until the object is dropped or the timeout expires."""
    sc = cfg.scenario
    ctx = ctx or context_for(sc, cfg.placement, cfg.limits)
    ctx.check_feasible()
    lim = cfg.limits
    world = sc.world
    obj, drop = world.object_position, world.drop_position
    drop_pose = Pose2D(drop[0], drop[1], 0.0)
    ring = cfg.placement.ring_radius
    window = cfg.controller.local_window
    controller = LocalController(ctx.grid, cfg.controller, lim)
    clock = None if cfg.deterministic_search else time.perf_counter

    state = RobotState(sc.start_pose)
    phase = GraspPhase()
    log: list[LogRow] = []
    evaluations = 0
    max_ms = 0.0
    selected: Candidate | None = None

    # Planned: goals fixed once at the start, the placement first, then the drop.
    planned_stage = 0
    if cfg.method is Method.PLANNED:
        scored = score_candidates(ctx.candidates, sc.start_pose, drop, ctx.graph, ctx.grid, lim, depart=ctx.depart)
        evaluations += 1
        selected = select_placement(scored, None, cfg.placement)
        if selected is None:
            raise ValueError(f"scenario {sc.name!r}: no feasible placement")

    n_steps = int(round(cfg.timeout / cfg.dt))
    for k in range(n_steps):
        pose = state.pose
        path: GlobalPath = NO_PATH
        final_mode = GoalMode.STOP_AT

        if cfg.method is Method.PLANNED:
            assert selected is not None
            if planned_stage == 0:
                path = plan(ctx.graph, pose, selected.pose, lim.v_max, lim.omega_max)
                final_mode = GoalMode.PASS_THROUGH
            else:
                path = plan(ctx.graph, pose, drop_pose, lim.v_max, lim.omega_max, terminal_heading=False)
        elif phase.kind is PhaseKind.NOT_HELD:
            if cfg.method is Method.PROPOSED:
                tree = CostTree(ctx.graph, pose, lim.v_max, lim.omega_max)
                scored = score_candidates(ctx.candidates, tree, drop, ctx.graph, ctx.grid, lim, depart=ctx.depart)
                evaluations += 1
                selected = select_placement(scored, selected, cfg.placement)
                if selected is not None:
                    path = tree.path_to(selected.pose)
            if cfg.method is Method.REACTIVE or selected is None:
                goal_pose = reactive_ring_pose(pose, obj, ctx.grid, ring)
                if goal_pose is not None:
                    path = plan(ctx.graph, pose, goal_pose, lim.v_max, lim.omega_max)
        elif cfg.method is Method.PROPOSED:
            path = plan(ctx.graph, pose, drop_pose, lim.v_max, lim.omega_max, terminal_heading=False)
            final_mode = GoalMode.PASS_THROUGH
        else:
            goal_pose = reactive_ring_pose(pose, drop, ctx.grid, ring)
            if goal_pose is not None:
                path = plan(ctx.graph, pose, goal_pose, lim.v_max, lim.omega_max)

        if path.found:
            target = intermediate_target(path, pose, window, final_mode, visible=ctx.line_of_sight)
            cmd = controller.search(state, target, clock)
            max_ms = max(max_ms, controller.last_stats.elapsed_ms)
            goal_logged: Pose2D | None = target.pose
        else:
            cmd, goal_logged = Twist(0.0, 0.0), None

        log.append(LogRow(state.time, pose, state.twist, phase.kind, goal_logged))
        state = kinematic_step(state, cmd, cfg.dt, lim)
        if planned_stage == 0 and cfg.method is Method.PLANNED:
            if point_segment_distance(selected.pose.xy, pose.xy, state.pose.xy) <= cfg.controller.goal_pos_tol:
                planned_stage = 1
        # Integer step count keeps timestamps free of accumulated rounding.
        t = state.time = round((k + 1) * cfg.dt, 9)
        stopped = abs(state.twist.v) < STATIONARY_SPEED and abs(state.twist.omega) < STATIONARY_SPEED
        can_attempt = cfg.method is not Method.REACTIVE or stopped
        phase = grasp_update(phase, state.pose, obj, t, cfg.failure_delay, cfg.reach_radius, can_attempt)
        phase = drop_update(phase, state.pose, drop, t, cfg.reach_radius)
        if phase.kind is PhaseKind.DROPPED:
            break

    log.append(LogRow(state.time, state.pose, state.twist, phase.kind, None))
    success = phase.kind is PhaseKind.DROPPED
    return TrialResult(
        scenario=sc.name,
        method=cfg.method,
        failure_delay=cfg.failure_delay,
        success=success,
        exec_time=phase.drop_time if success else None,
        first_attempt_time=phase.first_attempt_time,
        grasp_time=phase.grasp_time,
        drop_time=phase.drop_time,
        trajectory=log,
        placement_evaluations=evaluations,
        max_search_ms=max_ms,
    )


@dataclass
class DriveResult:
    reached: bool
    time: float | None
    trajectory: list[RobotState]
    max_search_ms: float


def drive_to_goal(
    ctx: TrialContext,
    start: RobotState,
    goal: GoalSpec,
    controller_cfg: ControllerConfig = ControllerConfig(),
    timeout: float = 30.0,
    clock=None,
) -> DriveResult:
    """Drive the local controller along replanned global paths to a single goal.

    Finishes when the controller reports the robot at a stop_at goal, or
    when a step sweeps past a pass_through goal within tolerance.
    """
    lim = ctx.limits
    controller = LocalController(ctx.grid, controller_cfg, lim)
    state = start
    traj = [state]
    max_ms = 0.0
    terminal = goal.mode is GoalMode.STOP_AT
    for k in range(int(round(timeout / controller_cfg.dt))):
        path = plan(ctx.graph, state.pose, goal.pose, lim.v_max, lim.omega_max, terminal_heading=terminal)
        if not path.found:
            return DriveResult(False, None, traj, max_ms)
        target = intermediate_target(path, state.pose, controller_cfg.local_window, goal.mode, visible=ctx.line_of_sight)
        cmd = controller.search(state, target, clock)
        max_ms = max(max_ms, controller.last_stats.elapsed_ms)
        if goal.mode is GoalMode.STOP_AT and controller.last_stats.status == "at_goal":
            return DriveResult(True, state.time, traj, max_ms)
        prev = state
        state = kinematic_step(state, cmd, controller_cfg.dt, lim)
        state.time = round((k + 1) * controller_cfg.dt, 9)
        traj.append(state)
        if goal.mode is GoalMode.PASS_THROUGH:
            if point_segment_distance(goal.pose.xy, prev.pose.xy, state.pose.xy) <= controller_cfg.goal_pos_tol:
                return DriveResult(True, state.time, traj, max_ms)
    return DriveResult(False, None, traj, max_ms)
