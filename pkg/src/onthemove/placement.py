"""Base placement on a candidate ring around the pick target.

Every candidate is scored by the RTR time to reach it from the robot plus
the RTR time to continue from it to the drop point; the cheapest one is
used as the navigation goal while the object is not yet held.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import Pose2D
from .limits import DEFAULT_LIMITS, RobotLimits
from .planner import CostTree, VisGraph
from .world import ProximityGrid, is_pose_free

INF = math.inf


@dataclass(frozen=True)
class PlacementConfig:
    ring_radius: float = 0.6  # m
    angular_step: float = 10.0  # degrees
    headings_per_position: int = 2
    hysteresis: float = 0.1  # s

    def __post_init__(self) -> None:
        if not self.ring_radius > 0.0:
            raise ValueError("ring_radius must be positive")
        if not self.angular_step > 0.0 or abs(360.0 / self.angular_step - round(360.0 / self.angular_step)) > 1e-9:
            raise ValueError("angular_step must divide 360")
        if self.headings_per_position not in (1, 2):
            raise ValueError("headings_per_position must be 1 (CCW only) or 2")
        if self.hysteresis < 0.0:
            raise ValueError("hysteresis must be non-negative")

    @property
    def n_positions(self) -> int:
        return int(round(360.0 / self.angular_step))


@dataclass(frozen=True)
class Candidate:
    pose: Pose2D
    angle_deg: float
    index: int
    approach_cost: float = INF
    depart_cost: float = INF

    @property
    def total(self) -> float:
        return self.approach_cost + self.depart_cost

    @property
    def feasible(self) -> bool:
        return math.isfinite(self.total)

    @property
    def clockwise(self) -> bool:
        return self.index % 2 == 1


def generate_candidates(obj: Sequence[float], cfg: PlacementConfig = PlacementConfig()) -> list[Candidate]:
    """Ring poses around ``obj``, angle-major, counter-clockwise heading first."""
    ox, oy = float(obj[0]), float(obj[1])
    out = []
    for i in range(cfg.n_positions):
        deg = i * cfg.angular_step
        a = math.radians(deg)
        x = ox + cfg.ring_radius * math.cos(a)
        y = oy + cfg.ring_radius * math.sin(a)
        headings = (a + math.pi / 2, a - math.pi / 2)[: cfg.headings_per_position]
        for h in headings:
            out.append(Candidate(Pose2D(x, y, h), deg, len(out)))
    return out


def score_candidates(
    candidates: Sequence[Candidate],
    robot: Pose2D | CostTree,
    drop: Sequence[float],
    graph: VisGraph,
    grid: ProximityGrid,
    limits: RobotLimits = DEFAULT_LIMITS,
    depart: np.ndarray | None = None,
) -> list[Candidate]:
    """Fill in approach and depart costs.

    ``robot`` may be a pose or a prebuilt :class:`CostTree` rooted at it.
    The depart cost is travel from the candidate to the drop point with a
    free final heading; by reversal symmetry it equals travel from the drop
    (free start heading) to the candidate with its heading flipped, so one
    tree rooted at the drop serves all candidates. Pass a precomputed
    ``depart`` array (see :func:`depart_costs`) to skip that tree.
    """
    free = np.array([is_pose_free(grid, c.pose) for c in candidates], dtype=bool)
    live = [c for c, ok in zip(candidates, free) if ok]
    approach = np.full(len(candidates), INF)
    if live:
        tree = robot if isinstance(robot, CostTree) else CostTree(graph, robot, limits.v_max, limits.omega_max)
        approach[free] = tree.costs([c.pose for c in live])
    if depart is None:
        depart = depart_costs(candidates, drop, graph, grid, limits)
    return [
        replace(c, approach_cost=float(a), depart_cost=float(d)) if ok else replace(c, approach_cost=INF, depart_cost=INF)
        for c, a, d, ok in zip(candidates, approach, depart, free)
    ]


def depart_costs(
    candidates: Sequence[Candidate],
    drop: Sequence[float],
    graph: VisGraph,
    grid: ProximityGrid,
    limits: RobotLimits = DEFAULT_LIMITS,
) -> np.ndarray:
    """Candidate-to-drop RTR times (free heading at the drop); inf where occupied."""
    free = np.array([is_pose_free(grid, c.pose) for c in candidates], dtype=bool)
    out = np.full(len(candidates), INF)
    live = [c for c, ok in zip(candidates, free) if ok]
    if live:
        tree = CostTree(graph, (float(drop[0]), float(drop[1])), limits.v_max, limits.omega_max)
        flipped = [c.pose.with_theta(c.pose.theta + math.pi) for c in live]
        out[free] = tree.costs(flipped)
    return out


def select_placement(
    scored: Sequence[Candidate], previous: Candidate | None = None, cfg: PlacementConfig = PlacementConfig()
) -> Candidate | None:
    """Cheapest feasible candidate, sticky within the hysteresis band.

    ``previous`` is matched by index against the freshly scored list, so its
    current cost is used. Returns None when nothing is feasible.
    """
    best: Candidate | None = None
    for c in scored:
        if c.feasible and (best is None or c.total < best.total):
            best = c
    if best is None:
        return None
    if previous is not None:
        now = next((c for c in scored if c.index == previous.index), None)
        if now is not None and now.feasible and best.total >= now.total - cfg.hysteresis:
            return now
    return best


def write_debug_csv(path: str | Path, scored: Sequence[Candidate], selected: Candidate | None) -> None:
    """One row per candidate: angle, heading, costs, and whether it was selected."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["angle_deg", "heading", "approach_cost", "depart_cost", "total", "selected"])
        for c in scored:
            w.writerow(
                [
                    f"{c.angle_deg:g}",
                    f"{math.degrees(c.pose.theta):.1f}",
                    f"{c.approach_cost:.6f}",
                    f"{c.depart_cost:.6f}",
                    f"{c.total:.6f}",
                    int(selected is not None and c.index == selected.index),
                ]
            )
