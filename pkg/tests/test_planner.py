import math

import networkx as nx
import numpy as np
import pytest

from onthemove.geometry import Pose2D, segment_intersects_polygon
from onthemove.planner import (
    CostTree,
    GlobalPath,
    NO_PATH,
    VisGraph,
    build_graph,
    one_to_many_costs,
    path_rtr_time,
    plan,
)
from onthemove.world import ObstacleSpec, make_scenario

V, W = 1.0, 1.5


def wrap(a: float) -> float:
    return math.atan2(math.sin(a), math.cos(a))


def rtr_oracle(points, h0, goal_theta, v=V, w=W) -> float:
    """Rotate-translate-rotate time written out term by term."""
    t, h = 0.0, h0
    for (ax, ay), (bx, by) in zip(points, points[1:]):
        d = math.hypot(bx - ax, by - ay)
        if d < 1e-12:
            continue
        direction = math.atan2(by - ay, bx - ax)
        if h is not None:
            t += abs(wrap(direction - h)) / w
        t += d / v
        h = direction
    if goal_theta is not None and h is not None:
        t += abs(wrap(goal_theta - h)) / w
    return t


def free_segment(a, b, polys) -> bool:
    return not any(segment_intersects_polygon(a, b, p) for p in polys)


def enumerate_min(graph: VisGraph, start: Pose2D, goal: Pose2D) -> float:
    """Minimum RTR cost over all simple paths, by depth-first enumeration.

    Partial costs never decrease along a path, so branches already worse
    than the incumbent are cut; the result is still the exact minimum.
    """
    pts = [tuple(p) for p in graph.nodes]
    s, g = start.xy, goal.xy
    polys = graph.polygons
    to_goal = [free_segment(p, g, polys) for p in pts]
    best = math.inf
    if free_segment(s, g, polys):
        best = rtr_oracle([s, g], start.theta, goal.theta)

    def dfs(node, cost, heading, visited):
        nonlocal best
        if cost >= best:
            return
        here = pts[node]
        if to_goal[node]:
            d = rtr_oracle([here, g], heading, goal.theta)
            best = min(best, cost + d)
        for nxt in graph.adj[node]:
            if nxt in visited:
                continue
            seg = rtr_oracle([here, pts[nxt]], heading, None)
            visited.add(nxt)
            dfs(nxt, cost + seg, math.atan2(pts[nxt][1] - here[1], pts[nxt][0] - here[0]), visited)
            visited.remove(nxt)

    for i, p in enumerate(pts):
        if free_segment(s, p, polys):
            dfs(i, rtr_oracle([s, p], start.theta, None), math.atan2(p[1] - s[1], p[0] - s[0]), {i})
    return best


def random_world(rng):
    specs = []
    for _ in range(int(rng.integers(1, 5))):
        c = rng.uniform(1.0, 5.0, 2)
        size = rng.uniform(0.3, 1.2, 2)
        specs.append(ObstacleSpec("rect", (float(c[0]), float(c[1])), size=(float(size[0]), float(size[1]))))
    return make_scenario("rand", Pose2D(0, 0, 0), (6.0, 6.0), (6.0, 0.0), specs).world


def random_free_pose(rng, graph: VisGraph) -> Pose2D:
    while True:
        p = rng.uniform(-0.5, 6.5, 2)
        if not graph.collides(p) and not any(q.contains(p) for q in graph.polygons):
            return Pose2D(float(p[0]), float(p[1]), float(rng.uniform(-math.pi, math.pi)))


def rtr_vs_distance_sides() -> tuple[float, float]:
    """An obstacle slightly off the line and a goal heading that favours the longer side.

    Returns the sign of the mean waypoint y for the RTR plan and for a
    distance-only Dijkstra over the same visibility graph.
    """
    w = make_scenario("offset", Pose2D(0, 0, 0), (4, 0), (4, 1), [ObstacleSpec("rect", (2, -0.1), size=(1, 1))]).world
    g = build_graph(w, 0.25)
    start, goal = Pose2D(0, 0, 0), Pose2D(4, 0, math.pi / 2)
    rtr = plan(g, start, goal)
    assert rtr.total_time == pytest.approx(enumerate_min(g, start, goal), abs=1e-9)

    G = nx.Graph()
    pts = {i: tuple(g.nodes[i]) for i in range(len(g))}
    pts["s"], pts["g"] = start.xy, goal.xy
    for i, j in g.edges:
        G.add_edge(i, j, weight=math.dist(pts[i], pts[j]))
    for k in ("s", "g"):
        for i in range(len(g)):
            if free_segment(pts[k], pts[i], g.polygons):
                G.add_edge(k, i, weight=math.dist(pts[k], pts[i]))
    shortest = nx.dijkstra_path(G, "s", "g")
    assert rtr.total_length > nx.dijkstra_path_length(G, "s", "g")
    distance_side = float(np.sign(np.mean([pts[n][1] for n in shortest[1:-1]])))
    rtr_side = float(np.sign(np.mean([p.y for p in rtr.waypoints[1:-1]])))
    return rtr_side, distance_side


class TestPathRtr:
    def test_straight(self):
        wp = [Pose2D(0, 0, 0), Pose2D(4, 0, 0)]
        assert path_rtr_time(wp, 1.0, 1.5) == pytest.approx(4.0)

    def test_goal_reversed(self):
        wp = [Pose2D(0, 0, 0), Pose2D(4, 0, math.pi)]
        assert path_rtr_time(wp, 1.0, 1.5) == pytest.approx(4.0 + math.pi / 1.5)
        assert path_rtr_time(wp, 1.0, 1.5) == pytest.approx(6.0944, abs=1e-4)

    def test_l_path(self):
        wp = [Pose2D(0, 0, 0), Pose2D(2, 0, 0), Pose2D(2, 2, math.pi / 2)]
        expected = rtr_oracle([(0, 0), (2, 0), (2, 2)], 0.0, math.pi / 2)
        assert path_rtr_time(wp, 1.0, 1.5) == pytest.approx(expected)
        assert path_rtr_time(wp, 1.0, 1.5) == pytest.approx(5.0472, abs=1e-4)

    def test_interior_headings_ignored(self):
        a = [Pose2D(0, 0, 0), Pose2D(2, 0, 1.0), Pose2D(2, 2, math.pi / 2)]
        b = [Pose2D(0, 0, 0), Pose2D(2, 0, -2.0), Pose2D(2, 2, math.pi / 2)]
        assert path_rtr_time(a) == path_rtr_time(b)

    def test_random_matches_oracle(self):
        rng = np.random.default_rng(5)
        for _ in range(50):
            pts = rng.uniform(-3, 3, (int(rng.integers(2, 6)), 2))
            h0, hg = rng.uniform(-3, 3, 2)
            wp = [Pose2D(*p, 0.0) for p in pts]
            wp[0] = Pose2D(*pts[0], h0)
            wp[-1] = Pose2D(*pts[-1], hg)
            assert path_rtr_time(wp, V, W) == pytest.approx(rtr_oracle([tuple(p) for p in pts], h0, hg))

    def test_empty_rejected(self):
        with pytest.raises(ValueError):
            path_rtr_time([])


class TestGraph:
    def test_empty_world(self):
        w = make_scenario("e", Pose2D(0, 0, 0), (4, 0), (8, 0), []).world
        g = build_graph(w, 0.25)
        assert len(g) == 0
        p = plan(g, Pose2D(0, 0, 0), Pose2D(4, 0, 0))
        assert p.found and len(p.waypoints) == 2

    def test_single_table_ring(self):
        w = make_scenario("t", Pose2D(0, 0, 0), (4, 0), (8, 0), [ObstacleSpec("disc", (4, 0), radius=0.3)]).world
        g = build_graph(w, 0.25)
        assert len(g) <= 16
        poly = g.polygons[0]
        n = len(g)
        for i in range(n):
            for j in range(i + 1, n):
                a, b = g.nodes[i], g.nodes[j]
                adjacent = (j - i) in (1, n - 1)
                # Only polygon sides are collision-free between vertices of one convex polygon.
                assert (j in g.adj[i]) == (adjacent or not segment_intersects_polygon(a, b, poly))
                assert (j in g.adj[i]) == adjacent

    def test_gap_between_obstacles(self):
        specs = [ObstacleSpec("rect", (2, 1.5), size=(1, 2)), ObstacleSpec("rect", (2, -1.5), size=(1, 2))]
        w = make_scenario("gap", Pose2D(0, 0, 0), (4, 0), (5, 0), specs).world
        g = build_graph(w, 0.25)
        # Edges joining a vertex of the upper obstacle to one of the lower obstacle.
        through = [(i, j) for i, j in g.edges if g.nodes[i][1] * g.nodes[j][1] < 0]
        assert through
        for i, j in through:
            assert free_segment(g.nodes[i], g.nodes[j], [p for p in g.polygons])
        p = plan(g, Pose2D(0, 0, 0), Pose2D(4, 0, 0))
        assert p.total_time == pytest.approx(4.0)

    def test_edges_are_collision_free(self):
        rng = np.random.default_rng(2)
        for _ in range(5):
            g = build_graph(random_world(rng), 0.25)
            for i, j in g.edges:
                for k, poly in enumerate(g.polygons):
                    if segment_intersects_polygon(g.nodes[i], g.nodes[j], poly):
                        # Allowed only as a side of that very polygon.
                        mid = (g.nodes[i] + g.nodes[j]) / 2
                        assert poly.boundary_distance(mid)[0] < 1e-9


class TestPlan:
    def test_direct(self):
        w = make_scenario("e", Pose2D(0, 0, 0), (4, 0), (8, 0), []).world
        p = plan(build_graph(w, 0.25), Pose2D(0, 0, 0), Pose2D(4, 0, 0))
        assert p.total_time == pytest.approx(4.0)
        assert p.total_length == pytest.approx(4.0)

    def test_goal_inside_obstacle(self):
        w = make_scenario("t", Pose2D(0, 0, 0), (4, 0), (8, 0), [ObstacleSpec("disc", (4, 0), radius=0.3)]).world
        g = build_graph(w, 0.25)
        assert plan(g, Pose2D(0, 0, 0), Pose2D(4, 0, 0)) is NO_PATH
        assert not NO_PATH.found

    def test_cost_matches_waypoints(self):
        rng = np.random.default_rng(9)
        for _ in range(10):
            g = build_graph(random_world(rng), 0.25)
            s, t = random_free_pose(rng, g), random_free_pose(rng, g)
            p = plan(g, s, t)
            if p.found:
                assert p.total_time == pytest.approx(path_rtr_time(list(p.waypoints)), abs=1e-9)
                for a, b in zip(p.waypoints, p.waypoints[1:]):
                    assert free_segment(a.xy, b.xy, g.polygons) or any(
                        poly.boundary_distance(np.array([(a.x + b.x) / 2, (a.y + b.y) / 2]))[0] < 1e-9
                        for poly in g.polygons
                    )

    def test_free_goal_heading(self):
        w = make_scenario("e", Pose2D(0, 0, 0), (4, 0), (8, 0), []).world
        g = build_graph(w, 0.25)
        p = plan(g, Pose2D(0, 0, 0), Pose2D(0, 3, 0.0), terminal_heading=False)
        assert p.total_time == pytest.approx((math.pi / 2) / W + 3.0)
        assert p.goal.theta == pytest.approx(math.pi / 2)

    def test_oracle_equivalence_random_worlds(self):
        rng = np.random.default_rng(2024)
        checked = 0
        while checked < 25:
            g = build_graph(random_world(rng), 0.25)
            if len(g) > 20:
                continue
            s, t = random_free_pose(rng, g), random_free_pose(rng, g)
            got = plan(g, s, t).total_time
            want = enumerate_min(g, s, t)
            if math.isinf(want):
                assert math.isinf(got)
            else:
                assert got == pytest.approx(want, abs=1e-9)
            checked += 1

    def test_rtr_side_differs_from_distance_side(self):
        rtr_side, distance_side = rtr_vs_distance_sides()
        assert distance_side > 0 and rtr_side < 0

    def test_start_inside_obstacle_is_snapped(self):
        w = make_scenario("t", Pose2D(0, 0, 0), (4, 0), (8, 0), [ObstacleSpec("disc", (4, 0), radius=0.3)]).world
        g = build_graph(w, 0.25)
        p = plan(g, Pose2D(4.5, 0.0, 0.0), Pose2D(6, 0, 0))
        assert p.found
        assert not g.collides(p.waypoints[0].xy)

    def test_lexicographic_tie_break_is_stable(self):
        w = make_scenario("sym", Pose2D(0, 0, 0), (4, 0), (8, 0), [ObstacleSpec("rect", (2, 0), size=(1, 1))]).world
        g = build_graph(w, 0.25)
        a = plan(g, Pose2D(0, 0, 0), Pose2D(4, 0, 0))
        b = plan(g, Pose2D(0, 0, 0), Pose2D(4, 0, 0))
        assert a == b


class TestOneToMany:
    def test_self_target(self):
        w = make_scenario("e", Pose2D(0, 0, 0), (4, 0), (8, 0), []).world
        g = build_graph(w, 0.25)
        assert one_to_many_costs(g, Pose2D(1, 1, 0.3), [Pose2D(1, 1, 0.3)]) == [0.0]

    def test_colliding_target(self):
        w = make_scenario("t", Pose2D(0, 0, 0), (4, 0), (8, 0), [ObstacleSpec("disc", (4, 0), radius=0.3)]).world
        g = build_graph(w, 0.25)
        assert one_to_many_costs(g, Pose2D(0, 0, 0), [Pose2D(4, 0, 0)]) == [math.inf]

    def test_matches_plan(self):
        rng = np.random.default_rng(77)
        for _ in range(8):
            g = build_graph(random_world(rng), 0.25)
            s = random_free_pose(rng, g)
            targets = [random_free_pose(rng, g) for _ in range(10)]
            for terminal in (True, False):
                costs = one_to_many_costs(g, s, targets, terminal_headings=terminal)
                for t, c in zip(targets, costs):
                    assert c == pytest.approx(plan(g, s, t, terminal_heading=terminal).total_time, abs=1e-9)

    def test_point_source_has_free_heading(self):
        w = make_scenario("e", Pose2D(0, 0, 0), (4, 0), (8, 0), []).world
        g = build_graph(w, 0.25)
        assert one_to_many_costs(g, (0.0, 0.0), [Pose2D(0, 2, math.pi / 2)]) == [pytest.approx(2.0)]

    def test_tree_path_matches_plan(self):
        rng = np.random.default_rng(31)
        for _ in range(6):
            g = build_graph(random_world(rng), 0.25)
            s, t = random_free_pose(rng, g), random_free_pose(rng, g)
            a = CostTree(g, s).path_to(t)
            b = plan(g, s, t)
            assert a.total_time == pytest.approx(b.total_time, abs=1e-9)
            if a.found:
                assert a.total_time == pytest.approx(path_rtr_time(list(a.waypoints)), abs=1e-9)


def test_concat_adds_costs():
    a = GlobalPath((Pose2D(0, 0, 0), Pose2D(1, 0, 0)), 1.0, 1.0)
    b = GlobalPath((Pose2D(1, 0, 0), Pose2D(1, 1, 0)), 2.0, 1.0)
    c = a.concat(b)
    assert len(c.waypoints) == 3 and c.total_time == 3.0 and c.total_length == 2.0
