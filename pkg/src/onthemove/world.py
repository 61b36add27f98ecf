"""Scenario worlds, the inflated proximity grid, and the builtin benchmark layouts."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .geometry import ConvexPolygon, Pose2D, inflate_polygon, rectangle, regular_polygon

ROBOT_RADIUS = 0.25
GRID_RESOLUTION = 0.1
INFLUENCE_DISTANCE = 0.8
TABLE_RADIUS = 0.30
GRID_PADDING = 1.0
BOUNDS_MARGIN = 1.0
DISC_SIDES = 16


@dataclass(frozen=True)
class ObstacleSpec:
    """File-level obstacle description; ``polygon()`` gives the geometry."""

    kind: str  # "disc" or "rect"
    center: tuple[float, float]
    radius: float = 0.0
    size: tuple[float, float] = (0.0, 0.0)

    def polygon(self) -> ConvexPolygon:
        if self.kind == "disc":
            return regular_polygon(self.center, self.radius, DISC_SIDES)
        if self.kind == "rect":
            return rectangle(self.center, self.size)
        raise ValueError(f"unknown obstacle type {self.kind!r}")

    def to_json(self) -> dict:
        if self.kind == "disc":
            return {"type": "disc", "center": list(self.center), "radius": self.radius}
        return {"type": "rect", "center": list(self.center), "size": list(self.size)}

    @classmethod
    def from_json(cls, d: dict) -> ObstacleSpec:
        kind = d["type"]
        center = (float(d["center"][0]), float(d["center"][1]))
        if kind == "disc":
            return cls("disc", center, radius=float(d["radius"]))
        if kind == "rect":
            return cls("rect", center, size=(float(d["size"][0]), float(d["size"][1])))
        raise ValueError(f"unknown obstacle type {kind!r}")


@dataclass(frozen=True)
class WorldModel:
    obstacle_specs: tuple[ObstacleSpec, ...]
    object_position: tuple[float, float]
    drop_position: tuple[float, float]
    bounds: tuple[float, float, float, float]  # xmin, ymin, xmax, ymax
    obstacles: tuple[ConvexPolygon, ...] = field(init=False, compare=False, repr=False)

    def __post_init__(self) -> None:
        object.__setattr__(self, "obstacles", tuple(s.polygon() for s in self.obstacle_specs))
        xmin, ymin, xmax, ymax = self.bounds
        if not (xmax > xmin and ymax > ymin):
            raise ValueError("degenerate world bounds")
        for name, p in (("object", self.object_position), ("drop", self.drop_position)):
            if not (xmin <= p[0] <= xmax and ymin <= p[1] <= ymax):
                raise ValueError(f"{name} position {p} lies outside the world bounds")

    def inflated(self, r: float) -> list[ConvexPolygon]:
        return [inflate_polygon(p, r) for p in self.obstacles]


@dataclass(frozen=True)
class Scenario:
    name: str
    start_pose: Pose2D
    world: WorldModel

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "start": [self.start_pose.x, self.start_pose.y, math.degrees(self.start_pose.theta)],
            "object": list(self.world.object_position),
            "drop": list(self.world.drop_position),
            "obstacles": [s.to_json() for s in self.world.obstacle_specs],
        }

    @classmethod
    def from_json(cls, d: dict) -> Scenario:
        missing = {"name", "start", "object", "drop", "obstacles"} - set(d)
        if missing:
            raise ValueError(f"scenario is missing keys: {sorted(missing)}")
        start = Pose2D(float(d["start"][0]), float(d["start"][1]), math.radians(float(d["start"][2])))
        obj = (float(d["object"][0]), float(d["object"][1]))
        drop = (float(d["drop"][0]), float(d["drop"][1]))
        specs = tuple(ObstacleSpec.from_json(o) for o in d["obstacles"])
        return make_scenario(str(d["name"]), start, obj, drop, specs)


SCENARIO_SCHEMA = {
    "type": "object",
    "required": ["name", "start", "object", "drop", "obstacles"],
    "properties": {
        "name": {"type": "string"},
        "start": {"type": "array", "items": {"type": "number"}, "minItems": 3, "maxItems": 3},
        "object": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "drop": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
        "obstacles": {
            "type": "array",
            "items": {
                "oneOf": [
                    {
                        "type": "object",
                        "required": ["type", "center", "radius"],
                        "properties": {
                            "type": {"const": "disc"},
                            "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                            "radius": {"type": "number", "exclusiveMinimum": 0},
                        },
                    },
                    {
                        "type": "object",
                        "required": ["type", "center", "size"],
                        "properties": {
                            "type": {"const": "rect"},
                            "center": {"type": "array", "items": {"type": "number"}, "minItems": 2, "maxItems": 2},
                            "size": {"type": "array", "items": {"type": "number", "exclusiveMinimum": 0}, "minItems": 2, "maxItems": 2},
                        },
                    },
                ]
            },
        },
    },
}


def make_scenario(
    name: str,
    start: Pose2D,
    object_position: Sequence[float],
    drop_position: Sequence[float],
    obstacle_specs: Sequence[ObstacleSpec],
) -> Scenario:
    """Build a scenario whose bounds enclose all content plus a margin."""
    obj = (float(object_position[0]), float(object_position[1]))
    drop = (float(drop_position[0]), float(drop_position[1]))
    specs = tuple(obstacle_specs)
    pts = [start.xy, obj, drop]
    for s in specs:
        pts.extend(map(tuple, s.polygon().vertices))
    arr = np.asarray(pts)
    lo = arr.min(axis=0) - BOUNDS_MARGIN
    hi = arr.max(axis=0) + BOUNDS_MARGIN
    bounds = tuple(round(float(v), 9) for v in (lo[0], lo[1], hi[0], hi[1]))
    return Scenario(name, start, WorldModel(specs, obj, drop, bounds))


def load_scenario(path: str | Path) -> Scenario:
    return Scenario.from_json(json.loads(Path(path).read_text()))


def builtin_scenarios() -> list[Scenario]:
    """The line, turn and obstructed-turn pick-and-place layouts."""
    start = Pose2D(0.0, 0.0, 0.0)
    obj = (4.0, 0.0)
    table = ObstacleSpec("disc", obj, radius=TABLE_RADIUS)
    # The wall runs from behind the start to the table, closing the gap
    # between table and wall once both are inflated: a robot arriving south
    # of the wall must orbit the table to reach the drop point north of it.
    wall = ObstacleSpec("rect", (1.75, 0.5), size=(4.5, 0.2))
    return [
        make_scenario("line", start, obj, (8.0, 0.0), [table]),
        make_scenario("turn", start, obj, (0.0, 1.0), [table]),
        make_scenario("obstructed_turn", start, obj, (0.0, 1.0), [table, wall]),
    ]


def scenario_by_name(name: str) -> Scenario:
    for s in builtin_scenarios():
        if s.name == name:
            return s
    raise KeyError(name)


class ProximityGrid:
    """Occupancy and clearance on a regular grid of inflated obstacles.

    Cell (i, j) spans ``[origin + (i, j) * res, origin + (i + 1, j + 1) * res)``;
    arrays are indexed ``[ix, iy]``.
    """

    def __init__(
        self,
        origin: tuple[float, float],
        resolution: float,
        occupied: np.ndarray,
        clearance: np.ndarray,
        influence: float = INFLUENCE_DISTANCE,
    ):
        if resolution <= 0.0:
            raise ValueError("resolution must be positive")
        self.origin = (float(origin[0]), float(origin[1]))
        self.resolution = float(resolution)
        self.occupied = np.ascontiguousarray(occupied, dtype=np.bool_)
        self.clearance = np.ascontiguousarray(clearance, dtype=np.float64)
        self.influence = float(influence)
        self.occupied.flags.writeable = False
        self.clearance.flags.writeable = False

    @property
    def width(self) -> int:
        return self.occupied.shape[0]

    @property
    def height(self) -> int:
        return self.occupied.shape[1]

    def cell_of(self, p: Sequence[float]) -> tuple[int, int] | None:
        ix = math.floor((p[0] - self.origin[0]) / self.resolution)
        iy = math.floor((p[1] - self.origin[1]) / self.resolution)
        if 0 <= ix < self.width and 0 <= iy < self.height:
            return ix, iy
        return None

    def cell_center(self, ix: int, iy: int) -> tuple[float, float]:
        return (self.origin[0] + (ix + 0.5) * self.resolution, self.origin[1] + (iy + 0.5) * self.resolution)

    def cell_centers(self) -> np.ndarray:
        """All cell centers, shape (width, height, 2)."""
        xs = self.origin[0] + (np.arange(self.width) + 0.5) * self.resolution
        ys = self.origin[1] + (np.arange(self.height) + 0.5) * self.resolution
        gx, gy = np.meshgrid(xs, ys, indexing="ij")
        return np.stack((gx, gy), axis=-1)

    def is_occupied(self, p: Sequence[float]) -> bool:
        c = self.cell_of(p)
        return True if c is None else bool(self.occupied[c])

    def clearance_at(self, p: Sequence[float]) -> float:
        """Bilinearly interpolated clearance; 0 inside occupied or off-grid cells."""
        if self.is_occupied(p):
            return 0.0
        fx = (p[0] - self.origin[0]) / self.resolution - 0.5
        fy = (p[1] - self.origin[1]) / self.resolution - 0.5
        ix = min(max(math.floor(fx), 0), self.width - 2)
        iy = min(max(math.floor(fy), 0), self.height - 2)
        tx = min(max(fx - ix, 0.0), 1.0)
        ty = min(max(fy - iy, 0.0), 1.0)
        c = self.clearance
        return float(
            (1 - tx) * (1 - ty) * c[ix, iy]
            + tx * (1 - ty) * c[ix + 1, iy]
            + (1 - tx) * ty * c[ix, iy + 1]
            + tx * ty * c[ix + 1, iy + 1]
        )


def build_grid(world: WorldModel, inflation: float = ROBOT_RADIUS, resolution: float = GRID_RESOLUTION) -> ProximityGrid:
    if resolution <= 0.0:
        raise ValueError("resolution must be positive")
    if inflation < 0.0:
        raise ValueError("inflation must be non-negative")
    xmin, ymin, xmax, ymax = world.bounds
    ox, oy = xmin - GRID_PADDING, ymin - GRID_PADDING
    w = int(math.ceil((xmax + GRID_PADDING - ox) / resolution - 1e-9))
    h = int(math.ceil((ymax + GRID_PADDING - oy) / resolution - 1e-9))
    if w <= 0 or h <= 0:
        raise ValueError("degenerate bounds")
    grid = ProximityGrid((ox, oy), resolution, np.zeros((w, h), bool), np.zeros((w, h)))
    centers = grid.cell_centers().reshape(-1, 2)
    occupied = np.zeros(len(centers), dtype=bool)
    # Finite cap keeps bilinear interpolation free of inf * 0.
    clearance = np.full(len(centers), 1e6)
    for poly in world.inflated(inflation):
        occupied |= poly.contains_points(centers)
        clearance = np.minimum(clearance, poly.boundary_distance(centers))
    clearance[occupied] = 0.0
    return ProximityGrid((ox, oy), resolution, occupied.reshape(w, h), clearance.reshape(w, h))


def proximity_cost(grid: ProximityGrid, p: Sequence[float]) -> float:
    """Linear ramp from 1 at an obstacle to 0 at the influence distance."""
    if grid.is_occupied(p):
        return 1.0
    return max(0.0, 1.0 - grid.clearance_at(p) / grid.influence)


def is_pose_free(grid: ProximityGrid, pose: Pose2D | Sequence[float]) -> bool:
    p = pose.xy if isinstance(pose, Pose2D) else pose
    return not grid.is_occupied(p)
