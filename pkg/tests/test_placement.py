import csv
import math

import numpy as np
import pytest

from onthemove.geometry import Pose2D, angle_diff
from onthemove.placement import (
    Candidate,
    PlacementConfig,
    depart_costs,
    generate_candidates,
    score_candidates,
    select_placement,
    write_debug_csv,
)
from onthemove.planner import build_graph, plan
from onthemove.world import ObstacleSpec, build_grid, is_pose_free, make_scenario, scenario_by_name


@pytest.fixture(scope="module")
def line_setup():
    s = make_scenario("sym", Pose2D(0, 0, 0), (4, 0), (8, 0), [ObstacleSpec("disc", (4, 0), radius=0.3)])
    return s, build_graph(s.world, 0.25), build_grid(s.world, 0.25)


class TestGenerate:
    def test_count_and_radius(self):
        cands = generate_candidates((1.5, -2.0))
        assert len(cands) == 72
        d = [math.hypot(c.pose.x - 1.5, c.pose.y + 2.0) for c in cands]
        assert max(abs(x - 0.6) for x in d) <= 1e-12

    def test_first_position(self):
        a, b = generate_candidates((0.0, 0.0))[:2]
        assert (a.pose.x, a.pose.y) == pytest.approx((0.6, 0.0))
        assert a.pose.theta == pytest.approx(math.pi / 2)
        assert b.pose.theta == pytest.approx(-math.pi / 2)
        assert not a.clockwise and b.clockwise

    def test_headings_tangential(self):
        for c in generate_candidates((2.0, 3.0)):
            radial = math.atan2(c.pose.y - 3.0, c.pose.x - 2.0)
            assert abs(abs(angle_diff(c.pose.theta, radial)) - math.pi / 2) < 1e-12

    def test_ccw_heading_orbits_ccw(self):
        for c in generate_candidates((0.0, 0.0))[::2]:
            cross = c.pose.x * math.sin(c.pose.theta) - c.pose.y * math.cos(c.pose.theta)
            assert cross > 0

    def test_config_validation(self):
        with pytest.raises(ValueError):
            PlacementConfig(angular_step=7.0)
        with pytest.raises(ValueError):
            PlacementConfig(ring_radius=0.0)
        with pytest.raises(ValueError):
            PlacementConfig(headings_per_position=3)
        assert len(generate_candidates((0, 0), PlacementConfig(angular_step=30.0, headings_per_position=1))) == 12


class TestScore:
    def test_mirror_symmetry(self):
        s = make_scenario("empty", Pose2D(0, 0, 0), (4, 0), (8, 0), [])
        graph, grid = build_graph(s.world, 0.25), build_grid(s.world, 0.25)
        scored = score_candidates(generate_candidates((4, 0)), s.start_pose, (8, 0), graph, grid)
        assert all(c.feasible for c in scored)
        by_key = {(round(c.angle_deg) % 360, c.clockwise): c for c in scored}
        for (deg, cw), c in by_key.items():
            m = by_key[((-deg) % 360, not cw)]
            assert c.total == pytest.approx(m.total, abs=1e-9)

    def test_inside_footprint_is_infinite(self, line_setup):
        s, graph, grid = line_setup
        cfg = PlacementConfig(ring_radius=0.3)
        scored = score_candidates(generate_candidates((4, 0), cfg), s.start_pose, (8, 0), graph, grid)
        assert all(not c.feasible for c in scored)
        assert all(math.isinf(c.approach_cost) and math.isinf(c.depart_cost) for c in scored)

    def test_lower_bound(self, line_setup):
        s, graph, grid = line_setup
        r = s.start_pose
        for c in score_candidates(generate_candidates((4, 0)), r, (8, 0), graph, grid):
            if not c.feasible:
                continue
            bound = (math.hypot(c.pose.x - r.x, c.pose.y - r.y) + math.hypot(8 - c.pose.x, c.pose.y)) / 1.0
            assert c.total >= bound - 1e-9
            # The approach leg alone is bounded by its straight-line distance.
            assert c.approach_cost >= math.hypot(c.pose.x - r.x, c.pose.y - r.y) - 1e-9

    def test_costs_equal_plan(self):
        s = scenario_by_name("obstructed_turn")
        graph, grid = build_graph(s.world, 0.25), build_grid(s.world, 0.25)
        drop = s.world.drop_position
        scored = score_candidates(generate_candidates(s.world.object_position), s.start_pose, drop, graph, grid)
        drop_pose = Pose2D(drop[0], drop[1], 0.0)
        for c in scored[::5]:
            if not c.feasible:
                continue
            assert c.approach_cost == pytest.approx(plan(graph, s.start_pose, c.pose).total_time, abs=1e-9)
            depart = plan(graph, c.pose, drop_pose, terminal_heading=False).total_time
            assert c.depart_cost == pytest.approx(depart, abs=1e-9)

    def test_precomputed_depart_matches(self, line_setup):
        s, graph, grid = line_setup
        cands = generate_candidates((4, 0))
        dep = depart_costs(cands, (8, 0), graph, grid)
        a = score_candidates(cands, s.start_pose, (8, 0), graph, grid)
        b = score_candidates(cands, s.start_pose, (8, 0), graph, grid, depart=dep)
        assert [c.total for c in a] == [c.total for c in b]

    def test_occupied_candidates_match_grid(self):
        s = scenario_by_name("obstructed_turn")
        graph, grid = build_graph(s.world, 0.25), build_grid(s.world, 0.25)
        scored = score_candidates(generate_candidates(s.world.object_position), s.start_pose, (0, 1), graph, grid)
        for c in scored:
            if not is_pose_free(grid, c.pose):
                assert not c.feasible


def cand(index: int, total: float, approach: float = 0.0) -> Candidate:
    return Candidate(Pose2D(float(index), 0.0, 0.0), 10.0 * index, index, approach, total - approach)


class TestSelect:
    def test_single_feasible(self):
        scored = [cand(0, math.inf), cand(1, 5.0), cand(2, math.inf)]
        assert select_placement(scored).index == 1

    def test_none_feasible(self):
        assert select_placement([cand(0, math.inf)]) is None

    def test_hysteresis_retains_previous(self):
        scored = [cand(0, 4.95), cand(1, 5.0)]
        assert select_placement(scored, scored[1]).index == 1

    def test_large_improvement_switches(self):
        scored = [cand(0, 4.5), cand(1, 5.0)]
        assert select_placement(scored, scored[1]).index == 0

    def test_previous_rescored(self):
        # The previous choice is judged at its new cost, not the stale one.
        stale = cand(1, 1.0)
        scored = [cand(0, 4.5), cand(1, 5.0)]
        assert select_placement(scored, stale).index == 0

    def test_previous_now_infeasible(self):
        scored = [cand(0, 4.99), cand(1, math.inf)]
        assert select_placement(scored, cand(1, 4.0)).index == 0

    def test_tie_goes_to_first(self):
        scored = [cand(0, 3.0), cand(1, 3.0)]
        assert select_placement(scored).index == 0


def test_debug_csv(tmp_path, line_setup):
    s, graph, grid = line_setup
    scored = score_candidates(generate_candidates((4, 0)), s.start_pose, (8, 0), graph, grid)
    chosen = select_placement(scored)
    p = tmp_path / "ring.csv"
    write_debug_csv(p, scored, chosen)
    rows = list(csv.DictReader(open(p)))
    assert len(rows) == 72
    assert sum(int(r["selected"]) for r in rows) == 1
    totals = np.array([float(r["total"]) for r in rows])
    assert float(rows[int(np.flatnonzero([int(r["selected"]) for r in rows])[0])]["total"]) == pytest.approx(
        np.min(totals), abs=1e-6
    )
