import json
import math

import jsonschema
import numpy as np
import pytest

from onthemove.geometry import Pose2D, segment_intersects_polygon
from onthemove.world import (
    SCENARIO_SCHEMA,
    ObstacleSpec,
    ProximityGrid,
    Scenario,
    build_grid,
    builtin_scenarios,
    is_pose_free,
    make_scenario,
    proximity_cost,
    scenario_by_name,
)


def square_world(inflate_side=1.0):
    sq = ObstacleSpec("rect", (0.0, 0.0), size=(inflate_side, inflate_side))
    return make_scenario("sq", Pose2D(-3, 0, 0), (3.0, 0.0), (3.0, 3.0), [sq]).world


def point_in_polygon(p, verts) -> bool:
    """Even-odd ray casting, independent of the half-plane test under test."""
    x, y = p
    inside = False
    n = len(verts)
    for i in range(n):
        x1, y1 = verts[i]
        x2, y2 = verts[(i + 1) % n]
        if (y1 > y) != (y2 > y):
            xc = x1 + (y - y1) * (x2 - x1) / (y2 - y1)
            if xc > x:
                inside = not inside
    return inside


def boundary_distance_brute(p, verts, n=400) -> float:
    pts = []
    for i in range(len(verts)):
        a, b = np.asarray(verts[i]), np.asarray(verts[(i + 1) % len(verts)])
        t = np.linspace(0, 1, n)[:, None]
        pts.append(a + t * (b - a))
    pts = np.vstack(pts)
    return float(np.min(np.hypot(pts[:, 0] - p[0], pts[:, 1] - p[1])))


class TestGrid:
    def test_empty_world_all_free(self):
        w = make_scenario("e", Pose2D(0, 0, 0), (5.0, 5.0), (10.0, 10.0), []).world
        g = build_grid(w, 0.25)
        assert not g.occupied.any()
        assert (g.clearance >= 0).all()

    def test_square_occupancy_matches_point_in_polygon(self):
        w = square_world()
        g = build_grid(w, 0.3)
        verts = [(-0.8, -0.8), (0.8, -0.8), (0.8, 0.8), (-0.8, 0.8)]
        centers = g.cell_centers()
        expected = np.array(
            [[point_in_polygon(centers[i, j], verts) for j in range(g.height)] for i in range(g.width)]
        )
        # Cell centers never fall on the boundary here, so the oracles agree exactly.
        assert (g.occupied == expected).all()
        assert g.occupied.sum() == 16 * 16

    def test_clearance_half_metre_from_boundary(self):
        w = square_world()
        g = build_grid(w, 0.3)
        verts = [(-0.8, -0.8), (0.8, -0.8), (0.8, 0.8), (-0.8, 0.8)]
        p = (1.3, 0.05)
        ix, iy = g.cell_of(p)
        c = g.cell_center(ix, iy)
        brute = boundary_distance_brute(c, verts)
        assert g.clearance[ix, iy] == pytest.approx(brute, abs=1e-3)
        assert g.clearance_at(p) == pytest.approx(0.5, abs=g.resolution)

    def test_clearance_sampled_oracle(self):
        w = square_world()
        g = build_grid(w, 0.3)
        verts = [(-0.8, -0.8), (0.8, -0.8), (0.8, 0.8), (-0.8, 0.8)]
        rng = np.random.default_rng(11)
        for _ in range(40):
            ix, iy = int(rng.integers(0, g.width)), int(rng.integers(0, g.height))
            c = g.cell_center(ix, iy)
            if g.occupied[ix, iy]:
                assert g.clearance[ix, iy] == 0.0
            else:
                assert g.clearance[ix, iy] == pytest.approx(boundary_distance_brute(c, verts, 2000), abs=2e-3)

    def test_off_grid_is_occupied(self):
        g = build_grid(square_world(), 0.3)
        assert g.is_occupied((1e4, 0.0))


class TestProximityCost:
    @staticmethod
    def flat(clearance: float) -> ProximityGrid:
        occ = np.zeros((10, 10), bool)
        return ProximityGrid((0.0, 0.0), 0.1, occ, np.full((10, 10), clearance))

    def test_outside_influence(self):
        assert proximity_cost(self.flat(0.8), (0.5, 0.5)) == 0.0
        assert proximity_cost(self.flat(3.0), (0.5, 0.5)) == 0.0

    def test_midpoint(self):
        assert proximity_cost(self.flat(0.4), (0.5, 0.5)) == pytest.approx(0.5)

    def test_occupied(self):
        g = build_grid(square_world(), 0.3)
        assert proximity_cost(g, (0.0, 0.0)) == 1.0

    def test_monotone_towards_obstacle(self):
        g = build_grid(square_world(), 0.3)
        costs = [proximity_cost(g, (x, 0.05)) for x in np.arange(2.0, 0.85, -0.05)]
        assert all(b >= a - 1e-12 for a, b in zip(costs, costs[1:]))


class TestPoseFree:
    def test_open_space(self):
        g = build_grid(square_world(), 0.3)
        assert is_pose_free(g, Pose2D(-2.0, 2.0, 0.0))

    def test_table_center(self):
        s = scenario_by_name("line")
        g = build_grid(s.world, 0.25)
        assert not is_pose_free(g, Pose2D(*s.world.object_position, 0.0))

    def test_just_outside_inflated_boundary(self):
        g = build_grid(square_world(), 0.3)
        p = (0.85, 0.05)
        c = g.cell_center(*g.cell_of(p))
        assert not point_in_polygon(c, [(-0.8, -0.8), (0.8, -0.8), (0.8, 0.8), (-0.8, 0.8)])
        assert is_pose_free(g, Pose2D(*p, 0.0))


class TestScenarios:
    def test_three_builtins(self):
        names = [s.name for s in builtin_scenarios()]
        assert names == ["line", "turn", "obstructed_turn"]

    def test_line_is_collinear(self):
        s = scenario_by_name("line")
        (x0, y0), (x1, y1), (x2, y2) = s.start_pose.xy, s.world.object_position, s.world.drop_position
        assert (x1 - x0) * (y2 - y0) - (y1 - y0) * (x2 - x0) == pytest.approx(0.0)

    def test_obstructed_direct_route_is_blocked(self):
        s = scenario_by_name("obstructed_turn")
        ox, oy = s.world.object_position
        dx, dy = s.world.drop_position
        a = math.atan2(dy - oy, dx - ox)
        ring_point = (ox + 0.6 * math.cos(a), oy + 0.6 * math.sin(a))
        wall = s.world.obstacles[1]
        assert segment_intersects_polygon(ring_point, (dx, dy), wall)
        # Same layout without the wall is open.
        turn = scenario_by_name("turn")
        assert not any(segment_intersects_polygon(ring_point, (dx, dy), p) for p in turn.world.obstacles)

    def test_unknown_name(self):
        with pytest.raises(KeyError):
            scenario_by_name("nope")

    @pytest.mark.parametrize("s", builtin_scenarios(), ids=lambda s: s.name)
    def test_json_round_trip_and_schema(self, s):
        doc = json.loads(json.dumps(s.to_json()))
        jsonschema.validate(doc, SCENARIO_SCHEMA)
        back = Scenario.from_json(doc)
        assert back == s
        assert back.start_pose.theta == pytest.approx(s.start_pose.theta)

    def test_missing_keys_rejected(self):
        with pytest.raises(ValueError):
            Scenario.from_json({"name": "x"})

    def test_unknown_obstacle_rejected(self):
        doc = scenario_by_name("line").to_json()
        doc["obstacles"] = [{"type": "blob", "center": [0, 0]}]
        with pytest.raises(ValueError):
            Scenario.from_json(doc)

    def test_bounds_enclose_content(self):
        for s in builtin_scenarios():
            xmin, ymin, xmax, ymax = s.world.bounds
            for p in (s.start_pose.xy, s.world.object_position, s.world.drop_position):
                assert xmin < p[0] < xmax and ymin < p[1] < ymax
