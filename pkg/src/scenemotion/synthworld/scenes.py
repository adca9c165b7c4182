"""Procedural rooms: geometry, surface queries, and point sampling.

A scene is one rectangular room (floor plus four walls, no ceiling) with
axis-aligned obstacle boxes and labeled goal boxes. All surfaces are
rectangles, which keeps exact projection, ray casting, and area-exact
stratified sampling simple.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..core.types import ScenePointCloud

_EPS = 1e-9


@dataclass(frozen=True)
class Box:
    """Axis-aligned box given by center and full size, meters."""

    center: tuple[float, float, float]
    size: tuple[float, float, float]

    def __post_init__(self):
        if any(s <= 0 for s in self.size):
            raise ValueError(f"box size must be positive, got {self.size}")

    @property
    def min_corner(self) -> np.ndarray:
        return np.array(self.center) - np.array(self.size) / 2

    @property
    def max_corner(self) -> np.ndarray:
        return np.array(self.center) + np.array(self.size) / 2

    def footprint_distance(self, x: float, y: float) -> float:
        """Horizontal distance from (x, y) to the box footprint rectangle."""
        lo, hi = self.min_corner, self.max_corner
        dx = max(lo[0] - x, 0.0, x - hi[0])
        dy = max(lo[1] - y, 0.0, y - hi[1])
        return math.hypot(dx, dy)

    def footprint_overlaps(self, other: "Box", margin: float = 0.0) -> bool:
        lo_a, hi_a = self.min_corner, self.max_corner
        lo_b, hi_b = other.min_corner, other.max_corner
        return (lo_a[0] - margin < hi_b[0] and lo_b[0] - margin < hi_a[0]
                and lo_a[1] - margin < hi_b[1] and lo_b[1] - margin < hi_a[1])


@dataclass(frozen=True)
class GoalSpec:
    label: str
    box: Box


@dataclass(frozen=True)
class SceneSpec:
    """Room extents, obstacles, goals, and the target cloud size.

    The room is centered at the origin horizontally with the floor at
    z = 0.
    """

    room_size: tuple[float, float, float] = (8.0, 8.0, 3.0)
    obstacles: tuple[Box, ...] = ()
    goals: tuple[GoalSpec, ...] = field(
        default_factory=lambda: (
            GoalSpec("goal_0", Box((3.2, 3.2, 0.35), (0.5, 0.5, 0.7))),))
    target_points: int = 4096

    def __post_init__(self):
        if self.target_points < 512:
            raise ValueError("target_points must be >= 512")
        if any(s <= 0 for s in self.room_size):
            raise ValueError("room_size must be positive")
        if not self.goals:
            raise ValueError("scene needs at least one goal")
        half_x, half_y = self.room_size[0] / 2, self.room_size[1] / 2
        for box in self.all_boxes():
            lo, hi = box.min_corner, box.max_corner
            if (lo[0] < -half_x - _EPS or hi[0] > half_x + _EPS
                    or lo[1] < -half_y - _EPS or hi[1] > half_y + _EPS
                    or lo[2] < -_EPS or hi[2] > self.room_size[2] + _EPS):
                raise ValueError(f"box {box} extends outside the room")
        for goal in self.goals:
            for obstacle in self.obstacles:
                if goal.box.footprint_overlaps(obstacle):
                    raise ValueError(
                        f"goal {goal.label} overlaps an obstacle")
        labels = [g.label for g in self.goals]
        if len(set(labels)) != len(labels):
            raise ValueError("goal labels must be unique")

    def all_boxes(self) -> tuple[Box, ...]:
        return self.obstacles + tuple(g.box for g in self.goals)

    def goal_by_label(self, label: str) -> GoalSpec:
        for goal in self.goals:
            if goal.label == label:
                return goal
        raise ValueError(f"unknown goal label {label!r}")

    @property
    def half_extent(self) -> tuple[float, float]:
        return self.room_size[0] / 2, self.room_size[1] / 2


@dataclass(frozen=True)
class Face:
    """Rectangle origin + two edge vectors; u and v are orthogonal."""

    origin: np.ndarray
    u: np.ndarray
    v: np.ndarray

    @property
    def area(self) -> float:
        return float(np.linalg.norm(self.u) * np.linalg.norm(self.v))

    @property
    def normal(self) -> np.ndarray:
        n = np.cross(self.u, self.v)
        return n / np.linalg.norm(n)

    def project(self, point: np.ndarray) -> np.ndarray:
        """Closest point on the rectangle to ``point``."""
        lu, lv = np.linalg.norm(self.u), np.linalg.norm(self.v)
        du, dv = self.u / lu, self.v / lv
        rel = point - self.origin
        a = np.clip(np.dot(rel, du), 0.0, lu)
        b = np.clip(np.dot(rel, dv), 0.0, lv)
        return self.origin + a * du + b * dv

    def distance(self, point: np.ndarray) -> float:
        return float(np.linalg.norm(point - self.project(point)))

    def raycast(self, origin: np.ndarray, direction: np.ndarray) -> float | None:
        """Ray parameter t > 0 of the hit, or None if the ray misses."""
        n = self.normal
        denom = float(np.dot(direction, n))
        if abs(denom) < _EPS:
            return None
        t = float(np.dot(self.origin - origin, n)) / denom
        if t <= 1e-6:
            return None
        hit = origin + t * direction
        lu, lv = np.linalg.norm(self.u), np.linalg.norm(self.v)
        rel = hit - self.origin
        a = np.dot(rel, self.u / lu)
        b = np.dot(rel, self.v / lv)
        if -1e-9 <= a <= lu + 1e-9 and -1e-9 <= b <= lv + 1e-9:
            return t
        return None


def _box_faces(box: Box) -> list[Face]:
    """Top and four side faces; the bottom sits on or near the floor."""
    lo, hi = box.min_corner, box.max_corner
    sx, sy, sz = np.array(box.size)
    ex, ey, ez = np.array([sx, 0, 0]), np.array([0, sy, 0]), np.array([0, 0, sz])
    return [
        Face(np.array([lo[0], lo[1], hi[2]]), ex, ey),   # top
        Face(np.array([lo[0], lo[1], lo[2]]), ex, ez),   # -y side
        Face(np.array([lo[0], hi[1], lo[2]]), ex, ez),   # +y side
        Face(np.array([lo[0], lo[1], lo[2]]), ey, ez),   # -x side
        Face(np.array([hi[0], lo[1], lo[2]]), ey, ez),   # +x side
    ]


def scene_faces(spec: SceneSpec) -> list[Face]:
    """Floor, four walls, and every box face (no ceiling)."""
    w, d, h = spec.room_size
    hx, hy = w / 2, d / 2
    ex, ey = np.array([w, 0, 0]), np.array([0, d, 0])
    ez = np.array([0, 0, h])
    faces = [
        Face(np.array([-hx, -hy, 0.0]), ex, ey),    # floor
        Face(np.array([-hx, -hy, 0.0]), ex, ez),    # -y wall
        Face(np.array([-hx, hy, 0.0]), ex, ez),     # +y wall
        Face(np.array([-hx, -hy, 0.0]), ey, ez),    # -x wall
        Face(np.array([hx, -hy, 0.0]), ey, ez),     # +x wall
    ]
    for box in spec.all_boxes():
        faces.extend(_box_faces(box))
    return faces


def surface_distance(spec: SceneSpec, point: np.ndarray) -> float:
    """Distance from a point to the nearest scene surface."""
    point = np.asarray(point, dtype=np.float64)
    return min(face.distance(point) for face in scene_faces(spec))


def project_to_surface(spec: SceneSpec, point: np.ndarray) -> np.ndarray:
    """Exact projection of a point onto the nearest scene surface."""
    point = np.asarray(point, dtype=np.float64)
    best, best_d = None, math.inf
    for face in scene_faces(spec):
        candidate = face.project(point)
        d = float(np.linalg.norm(point - candidate))
        if d < best_d:
            best, best_d = candidate, d
    return best


def ray_surface_intersection(spec: SceneSpec, origin: np.ndarray,
                             direction: np.ndarray) -> np.ndarray | None:
    """First scene surface hit by the ray, or None if it escapes."""
    origin = np.asarray(origin, dtype=np.float64)
    direction = np.asarray(direction, dtype=np.float64)
    norm = np.linalg.norm(direction)
    if norm < _EPS:
        raise ValueError("ray direction must be nonzero")
    direction = direction / norm
    best_t = math.inf
    for face in scene_faces(spec):
        t = face.raycast(origin, direction)
        if t is not None and t < best_t:
            best_t = t
    if math.isinf(best_t):
        return None
    return origin + best_t * direction


def _allocate_counts(areas: np.ndarray, total: int) -> np.ndarray:
    """Largest-remainder allocation proportional to area, summing to total."""
    share = areas / areas.sum() * total
    counts = np.floor(share).astype(np.int64)
    remainder = total - int(counts.sum())
    if remainder > 0:
        frac = share - counts
        order = np.lexsort((np.arange(len(areas)), -frac))
        counts[order[:remainder]] += 1
    return counts


def generate_scene(spec: SceneSpec,
                   seed: int | np.random.SeedSequence
                   ) -> tuple[ScenePointCloud, SceneSpec]:
    """Uniform area-proportional surface sampling, exact target count."""
    rng = np.random.default_rng(seed)
    faces = scene_faces(spec)
    areas = np.array([f.area for f in faces])
    counts = _allocate_counts(areas, spec.target_points)
    chunks = []
    for face, count in zip(faces, counts):
        if count == 0:
            continue
        ab = rng.random((count, 2))
        chunks.append(face.origin + ab[:, :1] * face.u + ab[:, 1:] * face.v)
    points = np.concatenate(chunks, axis=0)
    return ScenePointCloud(points=points), spec


def benchmark_scene_specs(count: int = 8, seed: int = 7,
                          target_points: int = 4096) -> list[SceneSpec]:
    """Deterministic family of varied rooms for the synthetic benchmark.

    Each room gets two to four obstacles and two or three well-separated
    wall-adjacent goals, so destinations are spatially distinguishable
    and paths have to route around the furniture.
    """
    specs = []
    for i in range(count):
        rng = np.random.default_rng(np.random.SeedSequence([seed, i]))
        for _ in range(200):
            obstacles = _draw_obstacles(rng)
            goals = _draw_goals(rng, obstacles)
            if goals is None:
                continue
            try:
                spec = SceneSpec(obstacles=obstacles, goals=goals,
                                 target_points=target_points)
            except ValueError:
                continue
            specs.append(spec)
            break
        else:
            raise RuntimeError(f"could not draw a valid scene for index {i}")
    return specs


def _draw_obstacles(rng: np.random.Generator) -> tuple[Box, ...]:
    boxes: list[Box] = []
    for _ in range(int(rng.integers(2, 5))):
        for _ in range(50):
            size = (float(rng.uniform(0.6, 1.4)), float(rng.uniform(0.6, 1.4)),
                    float(rng.uniform(0.6, 2.0)))
            center = (float(rng.uniform(-2.4, 2.4)),
                      float(rng.uniform(-2.4, 2.4)), size[2] / 2)
            box = Box(center, size)
            if all(not box.footprint_overlaps(other, margin=1.2)
                   for other in boxes):
                boxes.append(box)
                break
    return tuple(boxes)


def _draw_goals(rng: np.random.Generator,
                obstacles: tuple[Box, ...]) -> tuple[GoalSpec, ...] | None:
    goals: list[GoalSpec] = []
    n_goals = int(rng.integers(2, 4))
    for idx in range(n_goals):
        placed = False
        for _ in range(80):
            side = int(rng.integers(0, 4))
            along = float(rng.uniform(-3.0, 3.0))
            offset = float(rng.uniform(2.9, 3.4))
            x, y = ((offset, along), (-offset, along),
                    (along, offset), (along, -offset))[side]
            size = (float(rng.uniform(0.4, 0.6)), float(rng.uniform(0.4, 0.6)),
                    float(rng.uniform(0.4, 1.0)))
            box = Box((x, y, size[2] / 2), size)
            clear_of_obstacles = all(
                not box.footprint_overlaps(o, margin=1.0) for o in obstacles)
            apart = all(
                math.hypot(x - g.box.center[0], y - g.box.center[1]) >= 2.5
                for g in goals)
            if clear_of_obstacles and apart:
                goals.append(GoalSpec(f"goal_{idx}", box))
                placed = True
                break
        if not placed:
            return None
    return tuple(goals)


def spec_to_dict(spec: SceneSpec) -> dict:
    return {
        "room_size": list(spec.room_size),
        "obstacles": [[*b.center, *b.size] for b in spec.obstacles],
        "goals": [{"label": g.label, "box": [*g.box.center, *g.box.size]}
                  for g in spec.goals],
        "target_points": spec.target_points,
    }


def spec_from_dict(data: dict) -> SceneSpec:
    def as_box(values) -> Box:
        return Box(tuple(values[:3]), tuple(values[3:]))

    return SceneSpec(
        room_size=tuple(data["room_size"]),
        obstacles=tuple(as_box(b) for b in data["obstacles"]),
        goals=tuple(GoalSpec(g["label"], as_box(g["box"]))
                    for g in data["goals"]),
        target_points=int(data["target_points"]))
