"""Goal-directed walking episodes with gaze, gait, and clearance checks.

An episode walks an agent from a random free start toward a randomly
chosen goal object. Paths come from A* on an inflated occupancy grid,
then line-of-sight shortcutting and a short moving average, so an
unobstructed route collapses to a straight line. The gaze ray points at
the chosen goal and lands exactly on whatever surface it hits first,
which is what makes gaze informative about the destination. Walking
speed is set from an arrival factor, so a slice of episodes ends
mid-route and the final position depends on how the path bends around
the furniture rather than only on the gazed goal. Pose embeddings carry
the gait plus proximity channels (at the body and to either side of the
walking direction) that tie articulation to the nearby geometry.
"""
from __future__ import annotations

import heapq
import math
from dataclasses import dataclass

import numpy as np

from ..core.rotations import quat_to_matrix, yaw_quat
from ..core.types import (POSE_EMBEDDING_DIM, GazeSequence, HorizonConfig,
                          MotionSequence, PoseState)
from .scenes import (GoalSpec, SceneSpec, project_to_surface,
                     ray_surface_intersection)

GRID_RESOLUTION = 0.1
AGENT_INFLATION = 0.3
MIN_CLEARANCE = 0.25
PELVIS_HEIGHT = 0.95
HEAD_OFFSET = np.array([0.0, 0.0, 0.62])
GAZE_NOISE_STD = 0.05
STRIDE_LENGTH = 2.5
REFERENCE_SPEED = 0.5
BOB_AMPLITUDE = 0.018
APPROACH_DISTANCE = 0.45
MAX_ATTEMPTS = 20
ROUTE_LENGTH_RANGE = (2.5, 6.5)
ARRIVAL_RANGE = (0.75, 1.5)
SPEED_RANGE = (0.35, 1.4)
CLEARANCE_GAIN = 6.0
CLEARANCE_SCALE = 0.6
LATERAL_OFFSET = 0.5


class UnreachableGoalError(RuntimeError):
    """No collision-free episode could be built for the scene."""


@dataclass(frozen=True)
class EpisodeRecord:
    """One recorded episode: observed motion + gaze, then the future."""

    scene_id: str
    observed: MotionSequence
    gaze: GazeSequence
    future: MotionSequence
    goal_label: str

    def __post_init__(self):
        if len(self.gaze) != len(self.observed):
            raise ValueError("gaze must cover exactly the observed frames")

    @property
    def full_translations(self) -> np.ndarray:
        return np.concatenate([self.observed.translations,
                               self.future.translations])

    @property
    def full_orientations(self) -> np.ndarray:
        return np.concatenate([self.observed.orientations,
                               self.future.orientations])

    @property
    def full_pose_embeddings(self) -> np.ndarray:
        return np.concatenate([self.observed.pose_embeddings,
                               self.future.pose_embeddings])


def boxes_clearance(spec: SceneSpec, x: float, y: float) -> float:
    """Horizontal distance to the nearest obstacle or goal footprint."""
    boxes = spec.all_boxes()
    if not boxes:
        return math.inf
    return min(box.footprint_distance(x, y) for box in boxes)


def _wall_clearance(spec: SceneSpec, x: float, y: float) -> float:
    hx, hy = spec.half_extent
    return min(hx - abs(x), hy - abs(y))


def occupancy_grid(spec: SceneSpec,
                   resolution: float = GRID_RESOLUTION,
                   inflation: float = AGENT_INFLATION
                   ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Boolean free-space grid over the room footprint.

    Returns (free [nx, ny], xs, ys) where xs/ys are cell-center
    coordinates. A cell is free when its center keeps ``inflation``
    distance from every box footprint and from the walls.
    """
    hx, hy = spec.half_extent
    nx = int(round(spec.room_size[0] / resolution))
    ny = int(round(spec.room_size[1] / resolution))
    xs = -hx + (np.arange(nx) + 0.5) * resolution
    ys = -hy + (np.arange(ny) + 0.5) * resolution
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    free = ((hx - np.abs(gx) > inflation) & (hy - np.abs(gy) > inflation))
    for box in spec.all_boxes():
        lo, hi = box.min_corner, box.max_corner
        dx = np.maximum(np.maximum(lo[0] - gx, 0.0), gx - hi[0])
        dy = np.maximum(np.maximum(lo[1] - gy, 0.0), gy - hi[1])
        free &= np.hypot(dx, dy) > inflation
    return free, xs, ys


_NEIGHBORS = [(-1, -1), (-1, 0), (-1, 1), (0, -1),
              (0, 1), (1, -1), (1, 0), (1, 1)]


def astar(free: np.ndarray, start: tuple[int, int],
          goal: tuple[int, int]) -> list[tuple[int, int]] | None:
    """Deterministic 8-connected A* over the free-space grid."""
    if not (free[start] and free[goal]):
        return None
    nx, ny = free.shape

    def heuristic(cell: tuple[int, int]) -> float:
        dx, dy = abs(cell[0] - goal[0]), abs(cell[1] - goal[1])
        return (dx + dy) + (math.sqrt(2.0) - 2.0) * min(dx, dy)

    counter = 0
    open_heap = [(heuristic(start), counter, start)]
    g_cost = {start: 0.0}
    came_from: dict[tuple[int, int], tuple[int, int]] = {}
    closed = set()
    while open_heap:
        _, _, current = heapq.heappop(open_heap)
        if current in closed:
            continue
        if current == goal:
            path = [current]
            while current in came_from:
                current = came_from[current]
                path.append(current)
            return path[::-1]
        closed.add(current)
        ci, cj = current
        base = g_cost[current]
        for di, dj in _NEIGHBORS:
            ni, nj = ci + di, cj + dj
            if not (0 <= ni < nx and 0 <= nj < ny) or not free[ni, nj]:
                continue
            step = math.sqrt(2.0) if di and dj else 1.0
            cand = base + step
            nxt = (ni, nj)
            if cand < g_cost.get(nxt, math.inf) - 1e-12:
                g_cost[nxt] = cand
                came_from[nxt] = current
                counter += 1
                heapq.heappush(open_heap, (cand + heuristic(nxt), counter, nxt))
    return None


def _segment_clear(spec: SceneSpec, a: np.ndarray, b: np.ndarray,
                   margin: float) -> bool:
    length = float(np.linalg.norm(b - a))
    steps = max(2, int(math.ceil(length / 0.05)) + 1)
    for t in np.linspace(0.0, 1.0, steps):
        p = a + t * (b - a)
        if boxes_clearance(spec, p[0], p[1]) < margin:
            return False
        if _wall_clearance(spec, p[0], p[1]) < margin:
            return False
    return True


def shortcut_path(points: np.ndarray, spec: SceneSpec,
                  margin: float = AGENT_INFLATION) -> np.ndarray:
    """Greedy line-of-sight simplification of a waypoint polyline."""
    if len(points) <= 2:
        return points
    out = [points[0]]
    i = 0
    while i < len(points) - 1:
        j = len(points) - 1
        while j > i + 1 and not _segment_clear(spec, points[i], points[j], margin):
            j -= 1
        out.append(points[j])
        i = j
    return np.stack(out)


def resample_polyline(points: np.ndarray, step: float) -> np.ndarray:
    """Evenly spaced samples along a polyline, endpoints preserved."""
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    length = float(seg.sum())
    if length < 1e-12:
        return points[[0, -1]]
    n = max(2, int(math.ceil(length / step)) + 1)
    targets = np.linspace(0.0, length, n)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    x = np.interp(targets, cum, points[:, 0])
    y = np.interp(targets, cum, points[:, 1])
    return np.stack([x, y], axis=1)


def moving_average(points: np.ndarray, window: int = 3) -> np.ndarray:
    """Centered moving average with endpoints pinned."""
    if len(points) <= 2 or window <= 1:
        return points
    half = window // 2
    padded = np.concatenate([np.repeat(points[:1], half, axis=0), points,
                             np.repeat(points[-1:], half, axis=0)])
    kernel = np.ones(window) / window
    sm_x = np.convolve(padded[:, 0], kernel, mode="valid")
    sm_y = np.convolve(padded[:, 1], kernel, mode="valid")
    out = np.stack([sm_x, sm_y], axis=1)
    out[0], out[-1] = points[0], points[-1]
    return out


def _arclength_lookup(points: np.ndarray
                      ) -> tuple[np.ndarray, float]:
    seg = np.linalg.norm(np.diff(points, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    return cum, float(cum[-1])


def _point_at(points: np.ndarray, cum: np.ndarray, s: float) -> np.ndarray:
    x = np.interp(s, cum, points[:, 0])
    y = np.interp(s, cum, points[:, 1])
    return np.array([x, y])


def _tangent_at(points: np.ndarray, cum: np.ndarray, s: float) -> np.ndarray:
    length = cum[-1]
    eps = min(0.05, length / 2)
    a = _point_at(points, cum, max(0.0, min(s, length) - eps))
    b = _point_at(points, cum, min(length, max(s, 0.0) + eps))
    d = b - a
    n = np.linalg.norm(d)
    return d / n if n > 1e-12 else np.array([1.0, 0.0])


def _approach_point(spec: SceneSpec, goal: GoalSpec, free: np.ndarray,
                    xs: np.ndarray, ys: np.ndarray) -> np.ndarray | None:
    """Free standing spot beside the goal box, nearest the room center."""
    cx, cy = goal.box.center[0], goal.box.center[1]
    hx_box = goal.box.size[0] / 2 + APPROACH_DISTANCE
    hy_box = goal.box.size[1] / 2 + APPROACH_DISTANCE
    candidates = [np.array([cx + hx_box, cy]), np.array([cx - hx_box, cy]),
                  np.array([cx, cy + hy_box]), np.array([cx, cy - hy_box])]
    best, best_d = None, math.inf
    for cand in candidates:
        cell = _nearest_free_cell(free, xs, ys, cand, radius=0.25)
        if cell is None:
            continue
        pos = np.array([xs[cell[0]], ys[cell[1]]])
        d = float(np.linalg.norm(pos))
        if d < best_d:
            best, best_d = pos, d
    return best


def _nearest_free_cell(free: np.ndarray, xs: np.ndarray, ys: np.ndarray,
                       point: np.ndarray,
                       radius: float = 0.0) -> tuple[int, int] | None:
    i = int(np.clip(np.searchsorted(xs, point[0]), 0, len(xs) - 1))
    j = int(np.clip(np.searchsorted(ys, point[1]), 0, len(ys) - 1))
    span = int(math.ceil(radius / GRID_RESOLUTION)) + 1
    best, best_d = None, math.inf
    for di in range(-span, span + 1):
        for dj in range(-span, span + 1):
            ni, nj = i + di, j + dj
            if 0 <= ni < free.shape[0] and 0 <= nj < free.shape[1] and free[ni, nj]:
                d = math.hypot(xs[ni] - point[0], ys[nj] - point[1])
                if d < best_d:
                    best, best_d = (ni, nj), d
    if best is None or best_d > radius + GRID_RESOLUTION:
        return None
    return best


def _build_frames(polyline: np.ndarray, spec: SceneSpec, speed: float,
                  horizon: HorizonConfig) -> list[PoseState]:
    cum, length = _arclength_lookup(polyline)
    dt = 1.0 / horizon.frame_rate
    total = horizon.total_frames
    positions = []
    for k in range(total):
        s = min(speed * k * dt, length)
        positions.append(_point_at(polyline, cum, s))
    speeds = [0.0] * total
    for k in range(1, total):
        speeds[k] = float(np.linalg.norm(positions[k] - positions[k - 1])) / dt
    if total > 1:
        speeds[0] = speeds[1]
    frames = []
    for k in range(total):
        s = min(speed * k * dt, length)
        tangent = _tangent_at(polyline, cum, s)
        yaw = math.atan2(tangent[1], tangent[0])
        phase = 2.0 * math.pi * s / STRIDE_LENGTH
        rel_speed = speeds[k] / REFERENCE_SPEED
        z = PELVIS_HEIGHT + BOB_AMPLITUDE * rel_speed * math.sin(2.0 * phase)
        def proximity(px: float, py: float) -> float:
            return CLEARANCE_GAIN * math.exp(
                -boxes_clearance(spec, px, py) / CLEARANCE_SCALE)

        pose = np.zeros(POSE_EMBEDDING_DIM)
        pose[0] = rel_speed * math.sin(phase)
        pose[1] = rel_speed * math.cos(phase)
        pose[2] = proximity(positions[k][0], positions[k][1])
        pose[3] = rel_speed
        # leaning away from furniture on either side of the walking
        # direction; these depend on geometry next to the route, which
        # the motion history alone cannot reveal
        nx, ny = -tangent[1], tangent[0]
        pose[4] = proximity(positions[k][0] + LATERAL_OFFSET * nx,
                            positions[k][1] + LATERAL_OFFSET * ny)
        pose[5] = proximity(positions[k][0] - LATERAL_OFFSET * nx,
                            positions[k][1] - LATERAL_OFFSET * ny)
        frames.append(PoseState(
            translation=np.array([positions[k][0], positions[k][1], z]),
            orientation=yaw_quat(yaw),
            pose_embedding=pose))
    return frames


def _gaze_points(frames: list[PoseState], goal: GoalSpec, spec: SceneSpec,
                 observed: int, rng: np.random.Generator) -> np.ndarray:
    target = np.array(goal.box.center)
    points = []
    for frame in frames[:observed]:
        R = quat_to_matrix(frame.orientation)
        head = frame.translation + R @ HEAD_OFFSET
        direction = target - head
        if np.linalg.norm(direction) < 1e-9:
            direction = R @ np.array([1.0, 0.0, 0.0])
        hit = ray_surface_intersection(spec, head, direction)
        if hit is None:
            hit = project_to_surface(spec, target)
        noisy = hit + rng.normal(0.0, GAZE_NOISE_STD, size=3)
        points.append(project_to_surface(spec, noisy))
    return np.stack(points)


def episode_clearance(record: EpisodeRecord, spec: SceneSpec) -> float:
    """Minimum horizontal clearance of all frames to boxes and walls."""
    worst = math.inf
    for t in record.full_translations:
        worst = min(worst, boxes_clearance(spec, t[0], t[1]),
                    _wall_clearance(spec, t[0], t[1]))
    return worst


def generate_episode(spec: SceneSpec, seed: int | np.random.SeedSequence,
                     horizon: HorizonConfig,
                     scene_id: str = "scene") -> EpisodeRecord:
    """Build one deterministic episode; raises UnreachableGoalError if the
    scene admits no valid path after the retry budget."""
    rng = np.random.default_rng(seed)
    free, xs, ys = occupancy_grid(spec)
    free_cells = np.argwhere(free)
    if len(free_cells) == 0:
        raise UnreachableGoalError("scene has no free space")
    duration = (horizon.total_frames - 1) / horizon.frame_rate
    lo, hi = ROUTE_LENGTH_RANGE
    for _ in range(MAX_ATTEMPTS):
        goal = spec.goals[int(rng.integers(len(spec.goals)))]
        approach = _approach_point(spec, goal, free, xs, ys)
        if approach is None:
            continue
        start = None
        for _ in range(60):
            ci, cj = free_cells[int(rng.integers(len(free_cells)))]
            cand = np.array([xs[ci], ys[cj]])
            if lo <= float(np.linalg.norm(cand - approach)) <= 0.85 * hi:
                start = (int(ci), int(cj))
                break
        if start is None:
            continue
        goal_cell = _nearest_free_cell(free, xs, ys, approach, radius=0.25)
        if goal_cell is None:
            continue
        cells = astar(free, start, goal_cell)
        if cells is None:
            continue
        raw = np.array([[xs[i], ys[j]] for i, j in cells], dtype=np.float64)
        cut = shortcut_path(raw, spec)
        smooth = moving_average(resample_polyline(cut, GRID_RESOLUTION))
        fine = resample_polyline(smooth, 0.05)
        _, length = _arclength_lookup(fine)
        if not (lo <= length <= hi):
            continue
        # Arrival factor: how much of the route fits into the horizon.
        # Values above one leave the walker mid-route at the last frame,
        # so the recorded destination depends on the path around the
        # furniture, not just on which goal was chosen.
        a_lo = max(ARRIVAL_RANGE[0], length / (duration * SPEED_RANGE[1]))
        a_hi = min(ARRIVAL_RANGE[1], length / (duration * SPEED_RANGE[0]))
        if a_lo > a_hi:
            continue
        arrival = float(rng.uniform(a_lo, a_hi))
        speed = length / (duration * arrival)
        if any(boxes_clearance(spec, p[0], p[1]) < MIN_CLEARANCE
               or _wall_clearance(spec, p[0], p[1]) < MIN_CLEARANCE
               for p in fine):
            continue
        frames = _build_frames(fine, spec, speed, horizon)
        if any(boxes_clearance(spec, f.translation[0], f.translation[1])
               < MIN_CLEARANCE for f in frames):
            continue
        gaze = _gaze_points(frames, goal, spec, horizon.observed_frames, rng)
        observed = MotionSequence(frames=tuple(frames[:horizon.observed_frames]),
                                  frame_rate=horizon.frame_rate)
        future = MotionSequence(frames=tuple(frames[horizon.observed_frames:]),
                                frame_rate=horizon.frame_rate)
        return EpisodeRecord(scene_id=scene_id, observed=observed,
                             gaze=GazeSequence(points=gaze), future=future,
                             goal_label=goal.label)
    raise UnreachableGoalError(
        f"no valid episode for scene {scene_id!r} after {MAX_ATTEMPTS} attempts")
