"""
Voxel occupancy map.

Deterministic hit/miss fusion into a sparse voxel hash, integer line-walk
ray-casting, ROI inflation on a half-resolution lattice, and a text snapshot
format (``x y z state`` lines under a JSON header).
"""

import json
import math
import threading
from contextlib import contextmanager
from dataclasses import dataclass
from enum import Enum, IntEnum
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

import numpy as np
from scipy.spatial import cKDTree

from .utils.logger import get_logger

logger = get_logger(__name__)

Key = Tuple[int, int, int]


class VoxelState(IntEnum):
    UNKNOWN = 0
    FREE = 1
    OCCUPIED = 2
    ROI = 3


BLOCKING_STATES = (VoxelState.OCCUPIED, VoxelState.ROI)


class HitLabel(str, Enum):
    PLANT = "plant"
    FRUIT = "fruit"


def state_from_counts(hits: int, misses: int, roi_hits: int) -> VoxelState:
    """Map a count triple to a state; a pure function of the counts."""
    if roi_hits >= 1 and 2 * roi_hits >= hits:
        return VoxelState.ROI
    if hits > misses:
        return VoxelState.OCCUPIED
    if misses > 0:
        return VoxelState.FREE
    return VoxelState.UNKNOWN


@dataclass(slots=True)
class CellRecord:
    hits: int = 0
    misses: int = 0
    roi_hits: int = 0

    @property
    def state(self) -> VoxelState:
        return state_from_counts(self.hits, self.misses, self.roi_hits)


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in meters."""

    lo: Tuple[float, float, float]
    hi: Tuple[float, float, float]

    def __post_init__(self):
        if any(a >= b for a, b in zip(self.lo, self.hi)):
            raise ValueError(f"degenerate box {self.lo} .. {self.hi}")

    @classmethod
    def from_arrays(cls, lo: Sequence[float], hi: Sequence[float]) -> "Box":
        return cls(tuple(float(v) for v in lo), tuple(float(v) for v in hi))

    @property
    def size(self) -> np.ndarray:
        return np.asarray(self.hi) - np.asarray(self.lo)

    @property
    def center(self) -> np.ndarray:
        return (np.asarray(self.lo) + np.asarray(self.hi)) / 2.0

    def contains(self, point: Sequence[float], tol: float = 0.0) -> bool:
        return all(lo - tol <= p <= hi + tol for p, lo, hi in zip(point, self.lo, self.hi))

    def sample(self, rng: np.random.Generator) -> np.ndarray:
        return rng.uniform(self.lo, self.hi)

    def clip_segment(self, start: np.ndarray, end: np.ndarray) -> Optional[Tuple[float, float]]:
        """Parameter interval [t0, t1] of start + t (end - start) inside the box, or None."""
        t0, t1 = 0.0, 1.0
        for axis in range(3):
            d = end[axis] - start[axis]
            if d == 0.0:
                if not self.lo[axis] <= start[axis] <= self.hi[axis]:
                    return None
                continue
            ta = (self.lo[axis] - start[axis]) / d
            tb = (self.hi[axis] - start[axis]) / d
            if ta > tb:
                ta, tb = tb, ta
            t0 = max(t0, ta)
            t1 = min(t1, tb)
            if t0 > t1:
                return None
        return t0, t1

    def to_dict(self) -> Dict[str, List[float]]:
        return {"min": list(self.lo), "max": list(self.hi)}


class RaycastStatus(str, Enum):
    VISIBLE = "visible"
    BLOCKED = "blocked"
    OUT_OF_RANGE = "out_of_range"


@dataclass(frozen=True)
class Ray:
    origin: Tuple[float, float, float]
    direction: Tuple[float, float, float]
    length: float
    max_range: Optional[float] = None

    @classmethod
    def between(cls, origin: Sequence[float], target: Sequence[float],
                max_range: Optional[float] = None) -> "Ray":
        o = np.asarray(origin, dtype=float)
        delta = np.asarray(target, dtype=float) - o
        length = float(np.linalg.norm(delta))
        direction = delta / length if length > 0 else np.zeros(3)
        return cls(tuple(o), tuple(direction), length, max_range)

    @property
    def end(self) -> np.ndarray:
        return np.asarray(self.origin) + self.length * np.asarray(self.direction)


@dataclass(frozen=True)
class RaycastResult:
    status: RaycastStatus
    blocked_key: Optional[Key] = None

    @property
    def visible(self) -> bool:
        return self.status is RaycastStatus.VISIBLE


VISIBLE = RaycastResult(RaycastStatus.VISIBLE)
OUT_OF_RANGE = RaycastResult(RaycastStatus.OUT_OF_RANGE)


class VoxelGrid:
    """Sparse voxel map; absent keys are Unknown."""

    def __init__(self, bounds: Box, resolution: float = 0.01):
        if resolution <= 0:
            raise ValueError(f"resolution must be positive, got {resolution}")
        self.resolution = float(resolution)
        self.bounds = bounds
        self.origin = np.asarray(bounds.lo, dtype=float)
        self._origin = tuple(float(v) for v in bounds.lo)
        self.shape: Key = tuple(
            max(1, int(math.ceil((hi - lo) / self.resolution - 1e-9)))
            for lo, hi in zip(bounds.lo, bounds.hi)
        )
        self.cells: Dict[Key, CellRecord] = {}
        self._lock = threading.RLock()

    # -- indexing ---------------------------------------------------------

    def key_of(self, point: Sequence[float]) -> Key:
        res = self.resolution
        ox, oy, oz = self._origin
        return (
            int(math.floor((point[0] - ox) / res)),
            int(math.floor((point[1] - oy) / res)),
            int(math.floor((point[2] - oz) / res)),
        )

    def center_of(self, key: Sequence[int]) -> np.ndarray:
        return self.origin + (np.asarray(key, dtype=float) + 0.5) * self.resolution

    def in_bounds(self, key: Sequence[int]) -> bool:
        return all(0 <= k < s for k, s in zip(key, self.shape))

    def state(self, key: Key) -> VoxelState:
        cell = self.cells.get(key)
        return VoxelState.UNKNOWN if cell is None else cell.state

    def state_at(self, point: Sequence[float]) -> VoxelState:
        return self.state(self.key_of(point))

    def keys_in_state(self, state: VoxelState) -> List[Key]:
        return sorted(key for key, cell in self.cells.items() if cell.state == state)

    def count_state(self, state: VoxelState) -> int:
        return sum(1 for cell in self.cells.values() if cell.state == state)

    def neighbors6(self, key: Key) -> Iterator[Key]:
        x, y, z = key
        for neighbor in ((x - 1, y, z), (x + 1, y, z), (x, y - 1, z),
                         (x, y + 1, z), (x, y, z - 1), (x, y, z + 1)):
            if self.in_bounds(neighbor):
                yield neighbor

    # -- half-resolution lattice ------------------------------------------

    @property
    def coarse_shape(self) -> Key:
        return tuple((s + 1) // 2 for s in self.shape)

    def coarse_center(self, ckey: Sequence[int]) -> np.ndarray:
        return self.origin + (2 * np.asarray(ckey, dtype=float) + 1.0) * self.resolution

    def coarse_children(self, ckey: Sequence[int]) -> List[Key]:
        cx, cy, cz = (2 * int(c) for c in ckey)
        children = [(cx + dx, cy + dy, cz + dz) for dx in (0, 1) for dy in (0, 1) for dz in (0, 1)]
        return [child for child in children if self.in_bounds(child)]

    def coarse_is_unknown(self, ckey: Sequence[int]) -> bool:
        children = self.coarse_children(ckey)
        return bool(children) and all(self.state(child) == VoxelState.UNKNOWN for child in children)

    # -- traversal --------------------------------------------------------

    def traverse(self, start: Sequence[float], end: Sequence[float]) -> List[Key]:
        """Voxels crossed by the segment, start voxel first, end voxel last.

        6-connected stepping; on equal crossing parameters the axis with the
        smaller index steps first. Only axes with remaining steps may move, so
        the walk always terminates in the end voxel.
        """
        res = self.resolution
        ox, oy, oz = self._origin
        p0 = ((start[0] - ox) / res, (start[1] - oy) / res, (start[2] - oz) / res)
        p1 = ((end[0] - ox) / res, (end[1] - oy) / res, (end[2] - oz) / res)
        cur = [int(math.floor(p0[0])), int(math.floor(p0[1])), int(math.floor(p0[2]))]
        last = (int(math.floor(p1[0])), int(math.floor(p1[1])), int(math.floor(p1[2])))
        keys = [tuple(cur)]
        remaining = [abs(last[a] - cur[a]) for a in range(3)]
        if not any(remaining):
            return keys

        step = [0, 0, 0]
        t_max = [math.inf, math.inf, math.inf]
        t_delta = [math.inf, math.inf, math.inf]
        for a in range(3):
            d = p1[a] - p0[a]
            if d > 0:
                step[a] = 1
                t_max[a] = (cur[a] + 1 - p0[a]) / d
                t_delta[a] = 1.0 / d
            elif d < 0:
                step[a] = -1
                t_max[a] = (p0[a] - cur[a]) / -d
                t_delta[a] = -1.0 / d

        total = sum(remaining)
        for _ in range(total):
            axis = -1
            for a in range(3):
                if remaining[a] and (axis < 0 or t_max[a] < t_max[axis]):
                    axis = a
            cur[axis] += step[axis]
            t_max[axis] += t_delta[axis]
            remaining[axis] -= 1
            keys.append((cur[0], cur[1], cur[2]))
        return keys

    # -- concurrency --------------------------------------------------------

    @contextmanager
    def exclusive(self) -> Iterator["VoxelGrid"]:
        """Hold the integration lock for the duration of the block."""
        with self._lock:
            yield self

    def snapshot(self) -> "VoxelGrid":
        """Independent copy readers can query while integration continues."""
        with self._lock:
            copy = VoxelGrid(self.bounds, self.resolution)
            copy.cells = {
                key: CellRecord(cell.hits, cell.misses, cell.roi_hits)
                for key, cell in self.cells.items()
            }
        return copy

    # -- serialization -----------------------------------------------------

    def header(self) -> Dict[str, object]:
        return {"resolution": self.resolution, "bounds": self.bounds.to_dict(), "shape": list(self.shape)}

    def dump_text(self) -> str:
        """JSON header line, then ``x y z state`` for every known voxel in key order."""
        lines = [json.dumps(self.header())]
        for key in sorted(self.cells):
            state = self.cells[key].state
            if state != VoxelState.UNKNOWN:
                lines.append(f"{key[0]} {key[1]} {key[2]} {state.name.lower()}")
        return "\n".join(lines) + "\n"

    @classmethod
    def load_text(cls, text: str) -> "VoxelGrid":
        """Rebuild a grid from ``dump_text`` output with minimal counts per state."""
        lines = text.strip().splitlines()
        if not lines:
            raise ValueError("empty grid snapshot")
        header = json.loads(lines[0])
        grid = cls(Box.from_arrays(header["bounds"]["min"], header["bounds"]["max"]), header["resolution"])
        counts = {
            VoxelState.FREE: (0, 1, 0),
            VoxelState.OCCUPIED: (1, 0, 0),
            VoxelState.ROI: (1, 0, 1),
        }
        for line in lines[1:]:
            x, y, z, name = line.split()
            state = VoxelState[name.upper()]
            key = (int(x), int(y), int(z))
            if not grid.in_bounds(key):
                raise ValueError(f"snapshot key {key} outside bounds")
            grid.cells[key] = CellRecord(*counts[state])
        return grid


def integrate_observation(grid: VoxelGrid, sensor_origin: Sequence[float],
                          hits: Iterable[Tuple[Sequence[float], HitLabel]]) -> VoxelGrid:
    """Fuse one sensor frame into the grid in place and return it.

    Every voxel strictly between the sensor's own voxel and the terminal voxel
    gets a miss; the terminal voxel gets a hit (and an ROI hit for fruit
    points). Rays whose hit point leaves the map are clipped at the boundary
    and record misses only.
    """
    origin = np.asarray(sensor_origin, dtype=float)
    origin_key = grid.key_of(origin)
    cells = grid.cells
    with grid.exclusive():
        for point, label in hits:
            end = np.asarray(point, dtype=float)
            interval = grid.bounds.clip_segment(origin, end)
            if interval is None:
                continue
            t0, t1 = interval
            inside = t1 >= 1.0 and grid.in_bounds(grid.key_of(end))
            delta = end - origin
            seg_start = origin + t0 * delta
            seg_end = end if inside else origin + t1 * delta
            keys = grid.traverse(seg_start, seg_end)
            terminal = keys[-1] if inside else None
            for key in (keys[:-1] if inside else keys):
                if key == terminal or key == origin_key or not grid.in_bounds(key):
                    continue
                cell = cells.get(key)
                if cell is None:
                    cell = cells[key] = CellRecord()
                cell.misses += 1
            if terminal is not None:
                cell = cells.get(terminal)
                if cell is None:
                    cell = cells[terminal] = CellRecord()
                cell.hits += 1
                if label == HitLabel.FRUIT:
                    cell.roi_hits += 1
    return grid


def raycast(grid: VoxelGrid, origin: Sequence[float], target: Sequence[float],
            max_range: Optional[float] = None, unknown_blocks: bool = False) -> RaycastResult:
    """Line-of-sight check from origin to the voxel containing target.

    Only voxels strictly between the origin voxel and the target voxel are
    tested. Occupied and ROI voxels block; Unknown blocks only in strict mode.
    """
    ray = Ray.between(origin, target, max_range)
    if ray.length == 0.0:
        return VISIBLE
    if ray.max_range is not None and ray.length > ray.max_range:
        return OUT_OF_RANGE
    keys = grid.traverse(ray.origin, target)
    for key in keys[1:-1]:
        state = grid.state(key)
        if state in BLOCKING_STATES or (unknown_blocks and state == VoxelState.UNKNOWN):
            return RaycastResult(RaycastStatus.BLOCKED, key)
    return VISIBLE


def inflate_roi(grid: VoxelGrid, radius: float = 0.10, chunk: int = 256) -> Set[Key]:
    """Half-resolution voxels within ``radius`` of an ROI voxel that are still Unknown.

    The lattice has voxel size 2 * resolution aligned with the map; a coarse
    voxel counts as Unknown iff all of its in-bounds children are Unknown.
    Returned keys are coarse-lattice indices.
    """
    roi_keys = [key for key, cell in grid.cells.items() if cell.state == VoxelState.ROI]
    if not roi_keys:
        return set()

    roi_array = np.asarray(sorted(roi_keys), dtype=np.int64)
    tree = cKDTree(grid.origin + (roi_array + 0.5) * grid.resolution)
    coarse_size = 2.0 * grid.resolution
    reach = int(math.ceil(radius / coarse_size)) + 1
    span = np.arange(-reach, reach + 1)
    offsets = np.stack(np.meshgrid(span, span, span, indexing="ij"), axis=-1).reshape(-1, 3)
    roi_coarse = np.unique(roi_array // 2, axis=0)
    upper = np.asarray(grid.coarse_shape)

    inflated: Set[Key] = set()
    for begin in range(0, len(roi_coarse), chunk):
        block = roi_coarse[begin:begin + chunk]
        candidates = np.unique((block[:, None, :] + offsets[None, :, :]).reshape(-1, 3), axis=0)
        candidates = candidates[np.all((candidates >= 0) & (candidates < upper), axis=1)]
        if len(candidates) == 0:
            continue
        centers = grid.origin + (2 * candidates + 1.0) * grid.resolution
        distances, _ = tree.query(centers, k=1, distance_upper_bound=radius + 1e-6)
        for ckey in candidates[distances <= radius + 1e-9]:
            key = (int(ckey[0]), int(ckey[1]), int(ckey[2]))
            if key not in inflated and grid.coarse_is_unknown(key):
                inflated.add(key)

    logger.debug(f"ROI inflation: {len(roi_keys)} ROI voxels -> {len(inflated)} prior voxels")
    return inflated
