"""Short-horizon aborting search over acceleration primitives.

Each control step the controller expands a best-first tree of 9 primitives
(linear and angular acceleration each in {-max, 0, +max}) from the current
robot state toward an intermediate target taken from the global path. The
search stops when a node reaches the target, when a swept step passes
through a pass-through target, or when the budget runs out; the first
action toward the best node found is returned as a velocity command.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np
from numba import types
from numba.typed import Dict

from . import _search as K
from .geometry import Pose2D, Twist, angle_diff, closest_param_on_segment, wrap_angle
from .limits import DEFAULT_LIMITS, RobotLimits
from .planner import GlobalPath
from .world import ProximityGrid, proximity_cost

STOP_SPEED = 0.05  # m/s; a stop_at goal counts as reached below this speed
REVERSE_FACTOR = 1.5
WALL_CHUNK = 16  # expansions between clock checks in wall-clock mode
WALL_CAPACITY = 60000  # expansion cap in wall-clock mode (memory bound)
FINISH_RESERVE = 1e-3  # s kept back at the deadline to absorb scheduling jitter
VISIBILITY_STEP = 0.05  # m between path samples when clamping the target to line of sight


class GoalMode(str, Enum):
    STOP_AT = "stop_at"
    PASS_THROUGH = "pass_through"


@dataclass(frozen=True)
class GoalSpec:
    pose: Pose2D
    mode: GoalMode = GoalMode.STOP_AT


@dataclass(frozen=True)
class ControllerConfig:
    dt: float = 0.05
    budget: float = 25.0  # ms
    primitive_duration: float = 0.25
    horizon: int = 8
    goal_pos_tol: float = 0.15
    goal_heading_tol: float = 0.35
    w_prox: float = 2.0
    local_window: float = 2.0
    max_expansions: int = 2000  # abort budget in deterministic mode
    proximity_scaling: bool = True

    def __post_init__(self) -> None:
        for name in ("dt", "budget", "primitive_duration", "goal_pos_tol", "goal_heading_tol", "w_prox", "local_window"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"{name} must be positive")
        if self.horizon < 1 or self.max_expansions < 1:
            raise ValueError("horizon and max_expansions must be at least 1")
        if self.budget / 1000.0 >= self.dt:
            raise ValueError("search budget must be shorter than the control period")
        n = self.primitive_duration / self.dt
        if abs(n - round(n)) > 1e-9:
            raise ValueError("primitive_duration must be a whole number of control periods")

    @property
    def substeps(self) -> int:
        return int(round(self.primitive_duration / self.dt))


@dataclass
class RobotState:
    pose: Pose2D
    twist: Twist = field(default_factory=Twist)
    time: float = 0.0


@dataclass
class SearchNode:
    state: RobotState
    elapsed: float
    accrued_cost: float
    parent: Optional["SearchNode"] = None
    first_action: Optional[Twist] = None
    samples: tuple[Pose2D, ...] = ()  # rollout poses from the parent, one per control period


@dataclass
class SearchStats:
    expansions: int
    nodes: int
    status: str  # "goal", "budget", "exhausted", "at_goal", "blocked"
    elapsed_ms: float
    best_depth: int


def proximity_penalty_scale(t_h: float) -> float:
    """Weight of the proximity penalty given the estimated time to goal."""
    return max(0.1, min(t_h / 3.0, 1.0))


def heuristic(pose: Pose2D, goal: GoalSpec, limits: RobotLimits = DEFAULT_LIMITS, v: float = 0.0) -> float:
    """Straight-line RTR time from ``pose`` (moving at speed ``v``) to the goal.

    Forward: rotate to face the goal, drive, rotate into the goal heading.
    The drive is the fastest a_max-limited motion from ``v``, ending at rest
    for stop_at goals. Reverse driving counts 1.5x the translation time.
    The terminal rotation is dropped for pass-through goals.
    """
    mode = K.MODE_STOP if goal.mode is GoalMode.STOP_AT else K.MODE_PASS
    g = goal.pose
    return K.heuristic(
        pose.x, pose.y, pose.theta, v, g.x, g.y, g.theta, mode, limits.v_max, limits.omega_max, limits.a_max, REVERSE_FACTOR
    )


def node_cost(
    node: SearchNode,
    goal: GoalSpec,
    grid: ProximityGrid,
    cfg: ControllerConfig,
    limits: RobotLimits = DEFAULT_LIMITS,
    k: float | None = None,
) -> float:
    """elapsed + heuristic + weighted proximity integral along the rollout.

    ``k`` is the proximity scale; by default it comes from this node's own
    heuristic. Any occupied sample makes the node infinitely expensive.
    """
    h = heuristic(node.state.pose, goal, limits, node.state.twist.v)
    if k is None:
        k = proximity_penalty_scale(h) if cfg.proximity_scaling else 1.0
    prox = 0.0
    n: SearchNode | None = node
    while n is not None:
        for s in n.samples:
            if grid.is_occupied(s.xy):
                return math.inf
            prox += proximity_cost(grid, s.xy)
        n = n.parent
    return node.elapsed + h + cfg.w_prox * k * prox * cfg.dt


def kinematic_step(state: RobotState, cmd: Twist, dt: float, limits: RobotLimits = DEFAULT_LIMITS) -> RobotState:
    """Advance a clamped-acceleration unicycle by one period along an exact arc."""
    if dt <= 0.0:
        raise ValueError("dt must be positive")
    p, t = state.pose, state.twist
    x, y, th, v, w = K.unicycle_step(
        p.x, p.y, p.theta, t.v, t.omega, cmd.v, cmd.omega, dt, limits.v_max, limits.omega_max, limits.a_max, limits.alpha_max
    )
    return RobotState(Pose2D(x, y, th), Twist(v, w), state.time + dt)


def primitive_rollout(
    state: RobotState, accel: tuple[int, int], cfg: ControllerConfig, limits: RobotLimits = DEFAULT_LIMITS
) -> tuple[Twist, list[RobotState]]:
    """Command and per-period states of one primitive; accel entries are in {-1, 0, 1}.

    Braking never reverses the sign of a velocity within one primitive.
    """
    T = cfg.primitive_duration
    cmd = Twist(
        K.primitive_command(state.twist.v, accel[0] * limits.a_max * T, limits.v_max),
        K.primitive_command(state.twist.omega, accel[1] * limits.alpha_max * T, limits.omega_max),
    )
    out = []
    s = state
    for _ in range(cfg.substeps):
        s = kinematic_step(s, cmd, cfg.dt, limits)
        out.append(s)
    return cmd, out


def intermediate_target(
    path: GlobalPath,
    robot: Pose2D,
    window: float,
    final_mode: GoalMode = GoalMode.STOP_AT,
    start_s: float = 0.0,
    visible: Callable[[Sequence[float], np.ndarray], np.ndarray] | None = None,
) -> GoalSpec:
    """Point where the path (from arc length ``start_s`` on) leaves the robot's square window.

    If the rest of the path stays inside the window the final waypoint is
    returned with ``final_mode``; if no part of the path is inside, the
    nearest path point is returned as a pass-through target.

    ``visible(p, pts)`` optionally masks points seen from p along a free
    straight line. The target is then pulled back along the path to the
    end of the stretch the robot can see, which keeps the local search out
    of dead ends behind obstacles.
    """
    goal = _window_target(path, robot, window, final_mode, start_s)
    if visible is None or len(path.waypoints) < 2:
        return goal
    cum = path.cumulative_lengths()
    s_goal = _arc_position(path, cum, goal.pose.xy, start_s)
    s_lo = max(start_s, 0.0)
    if s_goal <= s_lo:
        return goal
    n = int(math.ceil((s_goal - s_lo) / VISIBILITY_STEP))
    ss = np.linspace(s_lo, s_goal, n + 1)
    pts, dirs = _points_at(path, cum, ss)
    ok = visible(robot.xy, pts)
    if ok.all() or not ok[0]:
        return goal
    k = int(np.argmin(ok)) - 1
    return _pass_target(pts[k], dirs[k])


def _window_target(path: GlobalPath, robot: Pose2D, window: float, final_mode: GoalMode, start_s: float) -> GoalSpec:
    if not path.waypoints:
        raise ValueError("empty path")
    pts = np.array([w.xy for w in path.waypoints])
    cum = path.cumulative_lengths()
    rx, ry = robot.x, robot.y

    def inside(q) -> bool:
        return abs(q[0] - rx) <= window + 1e-12 and abs(q[1] - ry) <= window + 1e-12

    if len(pts) == 1:
        return GoalSpec(path.waypoints[0], final_mode if inside(pts[0]) else GoalMode.PASS_THROUGH)

    seg0 = int(np.clip(np.searchsorted(cum, start_s, side="right") - 1, 0, len(pts) - 2))
    entered = False
    for i in range(seg0, len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        seg_len = cum[i + 1] - cum[i]
        if seg_len <= 0.0:
            continue
        t_lo = max(0.0, (start_s - cum[i]) / seg_len) if i == seg0 else 0.0
        lo, hi = _window_interval(a, b, rx, ry, window)
        lo, hi = max(lo, t_lo), hi
        if lo > hi:
            if entered:
                # Left the window at the end of the previous segment.
                return _pass_target(pts[i], pts[i] - pts[i - 1] if i > 0 else b - a)
            continue
        if entered and lo > 1e-9:
            return _pass_target(pts[i], pts[i] - pts[i - 1])
        entered = True
        if hi < 1.0 - 1e-12:
            q = a + hi * (b - a)
            return _pass_target(q, b - a)
    if entered:
        return GoalSpec(path.waypoints[-1], final_mode)
    # Nothing of the remaining path is inside the window: fall back to the nearest point.
    best_d, best_q, best_dir = math.inf, pts[-1], pts[-1] - pts[-2]
    for i in range(seg0, len(pts) - 1):
        a, b = pts[i], pts[i + 1]
        d = b - a
        den = float(d @ d)
        t = 0.0 if den == 0.0 else min(1.0, max(0.0, float((np.array([rx, ry]) - a) @ d) / den))
        q = a + t * d
        dist = math.hypot(q[0] - rx, q[1] - ry)
        if dist < best_d:
            best_d, best_q, best_dir = dist, q, d
    return _pass_target(best_q, best_dir)


def _arc_position(path: GlobalPath, cum: np.ndarray, q: Sequence[float], start_s: float) -> float:
    """Arc length of the path point closest to q, at or after ``start_s``."""
    best_d, best_s = math.inf, start_s
    pts = path.waypoints
    for i in range(len(pts) - 1):
        if cum[i + 1] < start_s or cum[i + 1] <= cum[i]:
            continue
        t = closest_param_on_segment(q, pts[i].xy, pts[i + 1].xy)
        s = max(start_s, cum[i] + t * (cum[i + 1] - cum[i]))
        p, _ = _points_at(path, cum, np.array([s]))
        d = math.hypot(p[0, 0] - q[0], p[0, 1] - q[1])
        if d < best_d - 1e-12:
            best_d, best_s = d, s
    return best_s


def _points_at(path: GlobalPath, cum: np.ndarray, ss: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Path points and segment directions at the given arc lengths."""
    xy = np.array([w.xy for w in path.waypoints])
    seg = np.clip(np.searchsorted(cum, ss, side="right") - 1, 0, len(xy) - 2)
    # Skip zero-length segments so every point has a direction.
    lengths = np.diff(cum)
    for j in range(len(seg)):
        while lengths[seg[j]] <= 0.0 and seg[j] < len(xy) - 2:
            seg[j] += 1
    d = xy[seg + 1] - xy[seg]
    span = np.where(lengths[seg] > 0.0, lengths[seg], 1.0)
    t = np.clip((ss - cum[seg]) / span, 0.0, 1.0)
    return xy[seg] + t[:, None] * d, d


def _pass_target(q: np.ndarray, direction: np.ndarray) -> GoalSpec:
    return GoalSpec(Pose2D(float(q[0]), float(q[1]), math.atan2(direction[1], direction[0])), GoalMode.PASS_THROUGH)


def _window_interval(a: np.ndarray, b: np.ndarray, cx: float, cy: float, half: float) -> tuple[float, float]:
    """Parameter interval of segment a->b inside the square window (Liang-Barsky)."""
    lo, hi = 0.0, 1.0
    d = b - a
    for k, c in ((0, cx), (1, cy)):
        for sign in (-1.0, 1.0):
            # Constraint: sign * (a_k + t d_k - c) <= half
            num = half - sign * (a[k] - c)
            den = sign * d[k]
            if abs(den) < 1e-15:
                if num < -1e-12:
                    return 1.0, 0.0
                continue
            t = num / den
            if den > 0:
                hi = min(hi, t)
            else:
                lo = max(lo, t)
    return lo, hi


class _OneChunkClock:
    """Fake clock that lets a wall-clock search run exactly one chunk."""

    def __init__(self) -> None:
        self.reads = 0

    def __call__(self) -> float:
        self.reads += 1
        return 0.0 if self.reads <= 2 else 1.0


class LocalController:
    """Aborting primitive search bound to one grid and one set of limits.

    ``search`` is deterministic when called without a clock: the abort
    budget is then ``cfg.max_expansions`` node expansions. With a clock
    (a zero-argument callable returning seconds) the abort is wall time,
    ``cfg.budget`` milliseconds.
    """

    def __init__(self, grid: ProximityGrid, cfg: ControllerConfig | None = None, limits: RobotLimits = DEFAULT_LIMITS):
        self.grid = grid
        self.cfg = cfg or ControllerConfig()
        self.limits = limits
        self._occ = grid.occupied
        self._clr = grid.clearance
        self._alloc(self.cfg.max_expansions)
        self._seen = Dict.empty(key_type=types.int64, value_type=types.float64)
        self.last_stats: SearchStats | None = None
        self._warm_up()

    def _warm_up(self) -> None:
        # The first dispatch into the compiled kernel loads it from cache, which
        # would otherwise be charged to the first timed search.
        g = self.grid
        x, y = g.origin[0] + g.resolution / 2, g.origin[1] + g.resolution / 2
        LocalController.search(self, RobotState(Pose2D(x, y, 0.0)), GoalSpec(Pose2D(x + 1.0, y, 0.0)), _OneChunkClock())
        self.last_stats = None

    def _alloc(self, expansions: int) -> None:
        cap = 1 + 9 * (expansions + 1)
        self._fcols = np.zeros((cap, K.N_FCOLS))
        self._icols = np.zeros((cap, K.N_ICOLS), dtype=np.int64)
        self._hkey = np.zeros(cap)
        self._hid = np.zeros(cap, dtype=np.int64)
        self._capacity_expansions = expansions

    def params(self, goal: GoalSpec, k: float) -> np.ndarray:
        cfg, lim, grid = self.cfg, self.limits, self.grid
        p = np.zeros(K.N_PARAMS)
        p[K.P_DT] = cfg.dt
        p[K.P_NSUB] = cfg.substeps
        p[K.P_HORIZON] = cfg.horizon
        p[K.P_POS_TOL] = cfg.goal_pos_tol
        p[K.P_HEAD_TOL] = cfg.goal_heading_tol
        p[K.P_WPROX] = cfg.w_prox
        p[K.P_K] = k
        p[K.P_VMAX] = lim.v_max
        p[K.P_WMAX] = lim.omega_max
        p[K.P_AMAX] = lim.a_max
        p[K.P_ALMAX] = lim.alpha_max
        p[K.P_GX] = goal.pose.x
        p[K.P_GY] = goal.pose.y
        p[K.P_GTH] = goal.pose.theta
        p[K.P_MODE] = K.MODE_STOP if goal.mode is GoalMode.STOP_AT else K.MODE_PASS
        p[K.P_OX], p[K.P_OY] = grid.origin
        p[K.P_RES] = grid.resolution
        p[K.P_INFL] = grid.influence
        p[K.P_REVERSE] = REVERSE_FACTOR
        p[K.P_STOP_V] = STOP_SPEED
        p[K.P_STOP_W] = lim.alpha_max * cfg.dt + 1e-9
        return p

    def search(self, robot: RobotState, goal: GoalSpec, clock: Callable[[], float] | None = None) -> Twist:
        t_start = time.perf_counter() if clock is None else clock()
        cfg, lim = self.cfg, self.limits
        pose, tw = robot.pose, robot.twist
        h_root = heuristic(pose, goal, lim, tw.v)
        k = proximity_penalty_scale(h_root) if cfg.proximity_scaling else 1.0
        p = self.params(goal, k)

        if K.at_goal(pose.x, pose.y, pose.theta, tw.v, tw.omega, p):
            cmd = Twist(0.0, 0.0) if goal.mode is GoalMode.STOP_AT else Twist(tw.v, tw.omega)
            self._finish("at_goal", 0, 1, 0, t_start, clock)
            return cmd

        wall = clock is not None
        limit = WALL_CAPACITY if wall else cfg.max_expansions
        if self._capacity_expansions < limit:
            self._alloc(limit)
        fc, ic, hk, hi = self._fcols, self._icols, self._hkey, self._hid
        n_nodes, heap = K.init_search(fc, ic, hk, hi, self._seen, pose.x, pose.y, pose.theta, tw.v, tw.omega, p)
        best = np.array([-1.0, math.inf, math.inf, -1.0, math.inf, math.inf])
        expansions = 0
        status, goal_node = K.STATUS_BUDGET, -1
        if wall:
            deadline = t_start + cfg.budget / 1000.0 - FINISH_RESERVE
            now, last_chunk = clock(), 0.0
            # Stop early rather than start a chunk that would cross the deadline.
            while expansions < limit and now + last_chunk < deadline:
                chunk = min(WALL_CHUNK, limit - expansions)
                status, goal_node, n_nodes, heap, done = K.expand(
                    fc, ic, hk, hi, self._seen, n_nodes, heap, chunk, p, self._occ, self._clr, best
                )
                expansions += done
                if status != K.STATUS_BUDGET or done < chunk:
                    break
                later = clock()
                now, last_chunk = later, later - now
        else:
            status, goal_node, n_nodes, heap, expansions = K.expand(
                fc, ic, hk, hi, self._seen, n_nodes, heap, limit, p, self._occ, self._clr, best
            )

        if status == K.STATUS_GOAL:
            chosen = goal_node
            label = "goal"
        else:
            # Prefer a node the robot can still brake from; otherwise the closest one.
            chosen = int(best[0]) if best[0] >= 0 else int(best[3])
            label = "budget" if status == K.STATUS_BUDGET else "exhausted"
        if chosen < 0:
            # Every primitive collides: brake as hard as possible.
            self._finish("blocked", expansions, n_nodes, 0, t_start, clock)
            return Twist(0.0, 0.0)
        first = int(ic[chosen, K.FIRST])
        ai, bi = divmod(first, 3)
        T = cfg.primitive_duration
        cmd = Twist(
            K.primitive_command(tw.v, (ai - 1) * lim.a_max * T, lim.v_max),
            K.primitive_command(tw.omega, (bi - 1) * lim.alpha_max * T, lim.omega_max),
        )
        self._finish(label, expansions, n_nodes, int(ic[chosen, K.DEPTH]), t_start, clock)
        return cmd

    def _finish(self, status: str, expansions: int, nodes: int, depth: int, t_start: float, clock) -> None:
        now = time.perf_counter() if clock is None else clock()
        self.last_stats = SearchStats(expansions, nodes, status, (now - t_start) * 1000.0, depth)

    def node_path(self, goal_node: int) -> list[Pose2D]:
        """Poses from the root to a node of the last search (debugging aid)."""
        out = []
        i = goal_node
        while i >= 0:
            f = self._fcols[i]
            out.append(Pose2D(f[K.X], f[K.Y], f[K.TH]))
            i = int(self._icols[i, K.PARENT])
        return out[::-1]


def search(
    robot: RobotState,
    goal: GoalSpec,
    grid: ProximityGrid,
    cfg: ControllerConfig | None = None,
    clock: Callable[[], float] | None = None,
    limits: RobotLimits = DEFAULT_LIMITS,
) -> Twist:
    """One-shot convenience wrapper around :class:`LocalController`."""
    return LocalController(grid, cfg, limits).search(robot, goal, clock)


def heading_error(a: Pose2D, b: Pose2D) -> float:
    return abs(angle_diff(a.theta, b.theta))


__all__ = [
    "ControllerConfig",
    "GoalMode",
    "GoalSpec",
    "LocalController",
    "RobotState",
    "SearchNode",
    "SearchStats",
    "heuristic",
    "intermediate_target",
    "kinematic_step",
    "node_cost",
    "primitive_rollout",
    "proximity_penalty_scale",
    "search",
    "wrap_angle",
]
