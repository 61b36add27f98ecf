"""Visibility-graph A* with a rotate-translate-rotate (RTR) time cost.

Path cost is the time to drive a polyline by rotating in place to face
each segment, then translating along it, plus a final rotation into the
goal heading. Because the cost of a leg depends on the heading the robot
arrives with, the search runs over (node, predecessor) states rather than
bare graph nodes.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np

from .geometry import ConvexPolygon, Pose2D, angle_diff, segments_intersect_polygon
from .limits import DEFAULT_LIMITS
from .world import WorldModel

INF = math.inf
_ZERO_LEN = 1e-12


@dataclass(frozen=True)
class GlobalPath:
    waypoints: tuple[Pose2D, ...]
    total_time: float
    total_length: float

    @property
    def found(self) -> bool:
        return bool(self.waypoints) and math.isfinite(self.total_time)

    @property
    def goal(self) -> Pose2D:
        return self.waypoints[-1]

    def cumulative_lengths(self) -> np.ndarray:
        pts = np.array([w.xy for w in self.waypoints])
        if len(pts) < 2:
            return np.zeros(len(pts))
        return np.concatenate(([0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))))

    def concat(self, other: GlobalPath) -> GlobalPath:
        """Join two paths whose endpoints coincide; costs add."""
        return GlobalPath(
            self.waypoints + other.waypoints[1:],
            self.total_time + other.total_time,
            self.total_length + other.total_length,
        )

    def to_csv_rows(self) -> list[tuple[float, float, float]]:
        return [(w.x, w.y, w.theta) for w in self.waypoints]


NO_PATH = GlobalPath((), INF, INF)


def _leg(g: float, heading: float | None, ax: float, ay: float, bx: float, by: float, v_max: float, omega_max: float):
    """Cost after rotating to face b from a, then driving there.

    Returns (new cost, heading on arrival). A zero-length leg keeps the heading.
    """
    length = math.hypot(bx - ax, by - ay)
    if length <= _ZERO_LEN:
        return g, heading
    direction = math.atan2(by - ay, bx - ax)
    rot = 0.0 if heading is None else abs(angle_diff(direction, heading))
    return g + rot / omega_max + length / v_max, direction


def _terminal(g: float, heading: float | None, goal_theta: float | None, omega_max: float) -> float:
    if goal_theta is None or heading is None:
        return g
    return g + abs(angle_diff(goal_theta, heading)) / omega_max


def path_rtr_time(
    waypoints: Sequence[Pose2D],
    v_max: float = DEFAULT_LIMITS.v_max,
    omega_max: float = DEFAULT_LIMITS.omega_max,
    start_heading: bool = True,
    goal_heading: bool = True,
) -> float:
    """RTR traversal time of a pose sequence.

    Interior headings are ignored; the first pose's heading seeds the first
    rotation and the last pose's heading sets the terminal rotation.
    """
    if not waypoints:
        raise ValueError("need at least one waypoint")
    if v_max <= 0.0 or omega_max <= 0.0:
        raise ValueError("limits must be positive")
    heading = waypoints[0].theta if start_heading else None
    g = 0.0
    for a, b in zip(waypoints, waypoints[1:]):
        g, heading = _leg(g, heading, a.x, a.y, b.x, b.y, v_max, omega_max)
    if len(waypoints) == 1:
        return 0.0
    return _terminal(g, heading, waypoints[-1].theta if goal_heading else None, omega_max)


class VisGraph:
    """Vertices of inflated obstacles joined by collision-free segments."""

    def __init__(self, polygons: Sequence[ConvexPolygon]):
        self.polygons = tuple(polygons)
        nodes: list[tuple[float, float]] = []
        owner: list[tuple[int, int]] = []  # (polygon index, vertex index)
        for pi, poly in enumerate(self.polygons):
            for vi, v in enumerate(poly.vertices):
                if not any(q.contains(v) for qi, q in enumerate(self.polygons) if qi != pi):
                    nodes.append((float(v[0]), float(v[1])))
                    owner.append((pi, vi))
        self.nodes = np.array(nodes, dtype=float).reshape(-1, 2)
        self.nodes.flags.writeable = False
        n = len(nodes)
        self.adj: list[list[int]] = [[] for _ in range(n)]
        if n:
            ii, jj = np.triu_indices(n, k=1)
            ok = np.ones(len(ii), dtype=bool)
            for pi, poly in enumerate(self.polygons):
                hit = segments_intersect_polygon(self.nodes[ii], self.nodes[jj], poly)
                # Sides of a polygon run along its own boundary; they are free.
                own_side = np.array(
                    [_adjacent(owner[i], owner[j], len(poly)) and owner[i][0] == pi for i, j in zip(ii, jj)], dtype=bool
                )
                ok &= ~(hit & ~own_side)
            for i, j in zip(ii[ok], jj[ok]):
                self.adj[i].append(int(j))
                self.adj[j].append(int(i))
            for a in self.adj:
                a.sort()
        self._target_cache: dict[bytes, np.ndarray] = {}

    def __len__(self) -> int:
        return len(self.nodes)

    @property
    def edges(self) -> list[tuple[int, int]]:
        return [(i, j) for i, a in enumerate(self.adj) for j in a if i < j]

    def collides(self, p: Sequence[float]) -> bool:
        """True if p is strictly inside an inflated obstacle."""
        return any(poly.contains(p, eps=-1e-9) for poly in self.polygons)

    def visible(self, p: Sequence[float], pts: np.ndarray, margin: float = 0.0) -> np.ndarray:
        """Mask of points in ``pts`` reachable from p by a straight free segment.

        ``margin`` shrinks the obstacles for the test, so that segments
        grazing or running along an inflated boundary count as free.
        """
        pts = np.asarray(pts, dtype=float).reshape(-1, 2)
        ok = np.ones(len(pts), dtype=bool)
        if not len(pts):
            return ok
        a = np.broadcast_to(np.asarray(p, dtype=float), pts.shape)
        for poly in self.polygons:
            ok &= ~segments_intersect_polygon(a, pts, poly, margin)
        return ok

    def visibility_to(self, targets: np.ndarray) -> np.ndarray:
        """(len(targets), len(nodes)) mask of node-to-target visibility, memoized."""
        targets = np.ascontiguousarray(targets, dtype=float).reshape(-1, 2)
        key = targets.tobytes()
        hit = self._target_cache.get(key)
        if hit is not None:
            return hit
        n, t = len(self.nodes), len(targets)
        mask = np.ones((t, n), dtype=bool)
        if n and t:
            a = np.repeat(targets, n, axis=0)
            b = np.tile(self.nodes, (t, 1))
            for poly in self.polygons:
                mask &= ~segments_intersect_polygon(a, b, poly).reshape(t, n)
        mask.flags.writeable = False
        if len(self._target_cache) > 64:
            self._target_cache.clear()
        self._target_cache[key] = mask
        return mask

    def free_point(self, p: Sequence[float]) -> tuple[float, float]:
        """Push a point lying inside an inflated obstacle just outside it."""
        x, y = float(p[0]), float(p[1])
        for poly in self.polygons:
            if poly.contains((x, y), eps=-1e-9):
                excess = poly.normals @ np.array([x, y]) - poly.offsets
                k = int(np.argmax(excess))
                push = -excess[k] + 1e-6
                x += push * poly.normals[k, 0]
                y += push * poly.normals[k, 1]
        return x, y


def _adjacent(a: tuple[int, int], b: tuple[int, int], n: int) -> bool:
    return a[0] == b[0] and (a[1] - b[1]) % n in (1, n - 1)


def build_graph(world: WorldModel, inflation: float) -> VisGraph:
    return VisGraph(world.inflated(inflation))


class _StateSearch:
    """Best-first search over (node, predecessor) states from one source.

    Node ids: graph nodes are 0..n-1, the source is n, the goal is n + 1.
    """

    def __init__(self, graph: VisGraph, source: Sequence[float], heading: float | None, v_max: float, omega_max: float):
        self.graph = graph
        self.n = len(graph)
        self.source = graph.free_point(source)
        self.heading0 = heading
        self.v_max = v_max
        self.omega_max = omega_max
        self.src_vis = graph.visible(self.source, graph.nodes) if self.n else np.zeros(0, dtype=bool)
        # state -> (cost, heading, parent state, node sequence)
        self.labels: dict[tuple[int, int], tuple[float, float | None, tuple[int, int] | None, tuple[int, ...]]] = {}

    def point(self, i: int) -> tuple[float, float]:
        if i == self.n:
            return self.source
        return (float(self.graph.nodes[i, 0]), float(self.graph.nodes[i, 1]))

    def _initial(self) -> list:
        sx, sy = self.source
        heap = []
        for v in np.flatnonzero(self.src_vis):
            v = int(v)
            g, h = _leg(0.0, self.heading0, sx, sy, *self.point(v), self.v_max, self.omega_max)
            heap.append((g, (self.n, v), g, h, None))
        return heap

    def run_tree(self) -> None:
        """Plain Dijkstra over every reachable state."""
        heap = [(f, (v,), g, h, (self.n, v)) for f, (_, v), g, h, _ in self._initial()]
        heapq.heapify(heap)
        best: dict[tuple[int, int], float] = {}
        labels = self.labels
        while heap:
            g, seq, _, h, state = heapq.heappop(heap)
            if state in labels:
                continue
            parent = (seq[-3] if len(seq) > 2 else self.n, seq[-2]) if len(seq) > 1 else None
            labels[state] = (g, h, parent, seq)
            u = state[1]
            ux, uy = self.point(u)
            for w in self.graph.adj[u]:
                nxt = (u, w)
                if nxt in labels:
                    continue
                ng, nh = _leg(g, h, ux, uy, *self.point(w), self.v_max, self.omega_max)
                nseq = seq + (w,)
                old = best.get(nxt)
                if old is None or ng < old[0] or (ng == old[0] and nseq < old[1]):
                    best[nxt] = (ng, nseq)
                    heapq.heappush(heap, (ng, nseq, ng, nh, nxt))

    def plan_to(self, goal: Sequence[float], goal_theta: float | None) -> tuple[float, tuple[int, ...], list]:
        """A* to a single goal point; returns (cost, node sequence, headings)."""
        gx, gy = float(goal[0]), float(goal[1])
        goal_vis = self.graph.visibility_to(np.array([[gx, gy]]))[0] if self.n else np.zeros(0, dtype=bool)
        goal_id = self.n + 1
        sx, sy = self.source

        def h_of(p: tuple[float, float]) -> float:
            return math.hypot(gx - p[0], gy - p[1]) / self.v_max

        heap: list = []
        direct = self.graph.visible(self.source, np.array([[gx, gy]]))[0]
        if direct:
            g, h = _leg(0.0, self.heading0, sx, sy, gx, gy, self.v_max, self.omega_max)
            g = _terminal(g, h, goal_theta, self.omega_max)
            heap.append((g, (goal_id,), g, h, (self.n, goal_id)))
        for _, (_, v), g, h, _ in self._initial():
            heap.append((g + h_of(self.point(v)), (v,), g, h, (self.n, v)))
        heapq.heapify(heap)
        closed: set = set()
        best: dict = {}
        while heap:
            _, seq, g, h, state = heapq.heappop(heap)
            if state in closed:
                continue
            closed.add(state)
            u = state[1]
            if u == goal_id:
                return g, seq[:-1], []
            ux, uy = self.point(u)
            nbrs = list(self.graph.adj[u])
            for w in nbrs:
                nxt = (u, w)
                if nxt in closed:
                    continue
                ng, nh = _leg(g, h, ux, uy, *self.point(w), self.v_max, self.omega_max)
                nseq = seq + (w,)
                old = best.get(nxt)
                if old is None or ng < old[0] or (ng == old[0] and nseq < old[1]):
                    best[nxt] = (ng, nseq)
                    heapq.heappush(heap, (ng + h_of(self.point(w)), nseq, ng, nh, nxt))
            if goal_vis[u]:
                ng, nh = _leg(g, h, ux, uy, gx, gy, self.v_max, self.omega_max)
                ng = _terminal(ng, nh, goal_theta, self.omega_max)
                nxt = (u, goal_id)
                nseq = seq + (goal_id,)
                old = best.get(nxt)
                if old is None or ng < old[0] or (ng == old[0] and nseq < old[1]):
                    best[nxt] = (ng, nseq)
                    heapq.heappush(heap, (ng, nseq, ng, nh, nxt))
        return INF, (), []


class CostTree:
    """Exact RTR costs from one source pose to many target poses.

    A single Dijkstra over (node, predecessor) states is expanded once; each
    target then takes the best final leg from any state at a node that can
    see it, or the direct leg from the source.
    """

    def __init__(
        self,
        graph: VisGraph,
        source: Pose2D | Sequence[float],
        v_max: float = DEFAULT_LIMITS.v_max,
        omega_max: float = DEFAULT_LIMITS.omega_max,
    ):
        heading = source.theta if isinstance(source, Pose2D) else None
        xy = source.xy if isinstance(source, Pose2D) else (float(source[0]), float(source[1]))
        self.graph = graph
        self.v_max = v_max
        self.omega_max = omega_max
        self._search = _StateSearch(graph, xy, heading, v_max, omega_max)
        self._search.run_tree()
        # Group states by node for vectorized final legs.
        per_node: dict[int, list] = {}
        for state, (g, h, _, _) in self._search.labels.items():
            per_node.setdefault(state[1], []).append((state, g, h))
        self._per_node = {}
        for u, items in per_node.items():
            items.sort(key=lambda it: it[0])
            self._per_node[u] = (
                [it[0] for it in items],
                np.array([it[1] for it in items]),
                np.array([np.nan if it[2] is None else it[2] for it in items]),
            )
        self._last_choice: dict = {}

    @property
    def source(self) -> tuple[float, float]:
        return self._search.source

    def costs(self, targets: Sequence[Pose2D], terminal_headings: bool = True) -> np.ndarray:
        """RTR time to each target (inf for colliding or unreachable ones)."""
        t = np.array([p.xy for p in targets], dtype=float).reshape(-1, 2)
        th = np.array([p.theta for p in targets], dtype=float)
        out, _ = self._evaluate(t, th, terminal_headings)
        return out

    def _evaluate(self, t: np.ndarray, th: np.ndarray, terminal: bool):
        graph, v, w = self.graph, self.v_max, self.omega_max
        n_t = len(t)
        best = np.full(n_t, INF)
        choice = [None] * n_t  # None: direct from source; else (state)
        if not n_t:
            return best, choice
        colliding = np.array([graph.collides(p) for p in t], dtype=bool)
        sx, sy = self._search.source
        h0 = self._search.heading0

        # Direct leg from the source.
        vis = graph.visible((sx, sy), t)
        for k in np.flatnonzero(vis):
            g, h = _leg(0.0, h0, sx, sy, t[k, 0], t[k, 1], v, w)
            if terminal:
                g = _terminal(g, h, float(th[k]), w)
            best[k] = g
        if len(graph):
            node_vis = graph.visibility_to(t)
            for u in sorted(self._per_node):
                states, lab, head = self._per_node[u]
                mask = node_vis[:, u]
                if not mask.any():
                    continue
                idx = np.flatnonzero(mask)
                ux, uy = graph.nodes[u]
                dx = t[idx, 0] - ux
                dy = t[idx, 1] - uy
                length = np.hypot(dx, dy)
                direction = np.arctan2(dy, dx)
                zero = length <= _ZERO_LEN
                # (states, targets)
                arrive = np.where(zero[None, :], head[:, None], direction[None, :])
                rot = np.nan_to_num(np.abs(_wrap(arrive - head[:, None])))
                arrive = np.where(np.isnan(arrive), direction[None, :], arrive)
                c = lab[:, None] + rot / w + length[None, :] / v
                if terminal:
                    c = c + np.abs(_wrap(th[idx][None, :] - arrive)) / w
                k_best = np.argmin(c, axis=0)
                c_best = c[k_best, np.arange(len(idx))]
                better = c_best < best[idx]
                for j in np.flatnonzero(better):
                    best[idx[j]] = c_best[j]
                    choice[idx[j]] = states[k_best[j]]
        best[colliding] = INF
        return best, choice

    def path_to(self, target: Pose2D, terminal_heading: bool = True) -> GlobalPath:
        t = np.array([target.xy])
        cost, choice = self._evaluate(t, np.array([target.theta]), terminal_heading)
        if not math.isfinite(cost[0]):
            return NO_PATH
        seq: tuple[int, ...] = ()
        if choice[0] is not None:
            seq = self._search.labels[choice[0]][3]
        return _make_path(self._search, seq, target, terminal_heading, float(cost[0]))


def _wrap(a: np.ndarray) -> np.ndarray:
    """Vectorized wrap into (-pi, pi]."""
    return -((-a + np.pi) % (2.0 * np.pi) - np.pi)


def _make_path(search: _StateSearch, seq: Iterable[int], goal: Pose2D, terminal_heading: bool, cost: float) -> GlobalPath:
    sx, sy = search.source
    h0 = search.heading0
    pts = [(sx, sy)] + [search.point(i) for i in seq] + [goal.xy]
    poses = [Pose2D(sx, sy, h0 if h0 is not None else 0.0)]
    heading = h0
    length = 0.0
    for a, b in zip(pts, pts[1:]):
        seg = math.hypot(b[0] - a[0], b[1] - a[1])
        length += seg
        if seg > _ZERO_LEN:
            heading = math.atan2(b[1] - a[1], b[0] - a[0])
        poses.append(Pose2D(b[0], b[1], heading if heading is not None else 0.0))
    if terminal_heading:
        poses[-1] = goal
    return GlobalPath(tuple(poses), cost, length)


def plan(
    graph: VisGraph,
    start: Pose2D,
    goal: Pose2D,
    v_max: float = DEFAULT_LIMITS.v_max,
    omega_max: float = DEFAULT_LIMITS.omega_max,
    terminal_heading: bool = True,
) -> GlobalPath:
    """Minimum-RTR-time path from ``start`` to ``goal`` through the graph.

    With ``terminal_heading=False`` the goal heading is free and the last
    waypoint takes the direction of the final segment.
    """
    if graph.collides(goal.xy):
        return NO_PATH
    search = _StateSearch(graph, start.xy, start.theta, v_max, omega_max)
    sx, sy = search.source
    if math.hypot(goal.x - sx, goal.y - sy) <= _ZERO_LEN:
        cost = _terminal(0.0, start.theta, goal.theta if terminal_heading else None, omega_max)
        wp = (Pose2D(sx, sy, start.theta), goal if terminal_heading else Pose2D(goal.x, goal.y, start.theta))
        return GlobalPath(wp, cost, 0.0)
    cost, seq, _ = search.plan_to(goal.xy, goal.theta if terminal_heading else None)
    if not math.isfinite(cost):
        return NO_PATH
    return _make_path(search, seq, goal, terminal_heading, cost)


def one_to_many_costs(
    graph: VisGraph,
    source: Pose2D | Sequence[float],
    targets: Sequence[Pose2D],
    terminal_headings: bool = True,
    v_max: float = DEFAULT_LIMITS.v_max,
    omega_max: float = DEFAULT_LIMITS.omega_max,
) -> list[float]:
    """RTR cost from ``source`` to every target; a bare point source has a free heading."""
    return CostTree(graph, source, v_max, omega_max).costs(targets, terminal_headings).tolist()
