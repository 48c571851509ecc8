"""
Synthetic crop-row scenes and an analytic depth camera.

Two plant rows run along +x at y ~ 0.32 and y ~ 0.48; the robot works from
the aisle at y < 0.15. Fruits are axis-aligned ellipsoids hanging at two
height levels around per-plant stem lines; leaves are thin boxes between the
fruit and the aisle.
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from .schemas import BoxRecord, FruitRecord, ScenarioRecord, ScenarioSpec, SensorConfig
from .utils.logger import get_logger
from .view_sampling import JointConfig, MotionModel, ViewPose
from .world_model import Box, HitLabel, Key, VoxelGrid

logger = get_logger(__name__)

ROW_Y = (0.32, 0.48)
HEIGHT_LEVELS = (0.35, 0.60)
WORLD_Y = (-0.20, 0.65)
WORLD_Z = (0.0, 1.0)
AISLE_Y = (-0.12, 0.12)
AISLE_Z = (0.20, 0.80)
PLACEMENT_RETRIES = 50
LEAF_RETRIES = 20


@dataclass(frozen=True, eq=False)
class Fruit:
    center: np.ndarray
    radii: np.ndarray

    @property
    def volume(self) -> float:
        return 4.0 / 3.0 * math.pi * float(np.prod(self.radii))

    def implicit(self, points: np.ndarray) -> np.ndarray:
        """sum(((p - c) / r)^2) - 1; zero on the surface."""
        return np.sum(((np.atleast_2d(points) - self.center) / self.radii) ** 2, axis=-1) - 1.0


@dataclass
class Scenario:
    name: str
    bounds: Box
    segments: int
    segment_length: float
    fruits: List[Fruit]
    occluders: List[Box]
    seed: int = 0
    placement_failures: int = 0

    def segment_range(self, segment: int) -> Tuple[float, float]:
        x0 = self.bounds.lo[0] + segment * self.segment_length
        return x0, x0 + self.segment_length

    def segment_of(self, point: Sequence[float]) -> int:
        offset = (point[0] - self.bounds.lo[0]) / self.segment_length
        return int(min(max(math.floor(offset), 0), self.segments - 1))

    def segment_workspace(self, segment: int) -> Box:
        x0, x1 = self.segment_range(segment)
        return Box((x0, AISLE_Y[0], AISLE_Z[0]), (x1, AISLE_Y[1], AISLE_Z[1]))

    def start_config(self, segment: int, model: MotionModel) -> JointConfig:
        """Aisle center of the segment, camera facing the rows."""
        x0, x1 = self.segment_range(segment)
        position = np.array([(x0 + x1) / 2.0, 0.0, 0.5])
        return model.ik(ViewPose(position, np.array([0.0, 1.0, 0.0])))

    def fruits_in_segment(self, segment: int) -> List[int]:
        return [i for i, fruit in enumerate(self.fruits) if self.segment_of(fruit.center) == segment]

    def to_record(self) -> ScenarioRecord:
        return ScenarioRecord(
            name=self.name,
            seed=self.seed,
            segments=self.segments,
            segment_length=self.segment_length,
            bounds=BoxRecord(min=self.bounds.lo, max=self.bounds.hi),
            fruits=[FruitRecord(center=tuple(f.center), radii=tuple(f.radii)) for f in self.fruits],
            occluders=[BoxRecord(min=b.lo, max=b.hi) for b in self.occluders],
            placement_failures=self.placement_failures,
        )

    @classmethod
    def from_record(cls, record: ScenarioRecord) -> "Scenario":
        return cls(
            name=record.name,
            bounds=Box.from_arrays(record.bounds.min, record.bounds.max),
            segments=record.segments,
            segment_length=record.segment_length,
            fruits=[Fruit(np.asarray(f.center, dtype=float), np.asarray(f.radii, dtype=float))
                    for f in record.fruits],
            occluders=[Box.from_arrays(b.min, b.max) for b in record.occluders],
            seed=record.seed,
            placement_failures=record.placement_failures,
        )


@dataclass
class FruitTruth:
    surface_keys: frozenset
    volume: float
    centroid: np.ndarray
    segment: int


@dataclass
class GroundTruth:
    resolution: float
    fruits: List[FruitTruth] = field(default_factory=list)

    def in_segment(self, segment: int) -> List[FruitTruth]:
        return [fruit for fruit in self.fruits if fruit.segment == segment]


def voxelize_fruit(fruit: Fruit, grid: VoxelGrid, solid: bool = False) -> List[Key]:
    """Voxels whose centers lie within half a voxel of the shell (or inside it when ``solid``)."""
    res = grid.resolution
    lo = np.asarray(grid.key_of(fruit.center - fruit.radii - res))
    hi = np.asarray(grid.key_of(fruit.center + fruit.radii + res))
    lo = np.maximum(lo, 0)
    hi = np.minimum(hi, np.asarray(grid.shape) - 1)
    if np.any(hi < lo):
        return []
    axes = [np.arange(lo[a], hi[a] + 1) for a in range(3)]
    keys = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)
    offsets = grid.origin + (keys + 0.5) * res - fruit.center
    scale = np.sqrt(np.sum((offsets / fruit.radii) ** 2, axis=1))
    with np.errstate(divide="ignore", invalid="ignore"):
        radial = np.linalg.norm(offsets, axis=1) * np.abs(1.0 - 1.0 / scale)
    shell = (scale > 0) & (radial <= res / 2.0)
    mask = shell | (scale <= 1.0) if solid else shell
    return [tuple(int(v) for v in key) for key in keys[mask]]


def compute_ground_truth(scenario: Scenario, resolution: float) -> GroundTruth:
    grid = VoxelGrid(scenario.bounds, resolution)
    fruits = [
        FruitTruth(frozenset(voxelize_fruit(fruit, grid)), fruit.volume, fruit.center.copy(),
                   scenario.segment_of(fruit.center))
        for fruit in scenario.fruits
    ]
    return GroundTruth(resolution, fruits)


def _fruits_overlap(center: np.ndarray, radius: float, fruits: Sequence[Fruit]) -> bool:
    return any(np.linalg.norm(center - f.center) < radius + float(f.radii.max()) + 0.01 for f in fruits)


def _box_hits_fruit(box: Box, fruits: Sequence[Fruit], margin: float = 0.005) -> bool:
    for fruit in fruits:
        closest = np.clip(fruit.center, box.lo, box.hi)
        if np.linalg.norm(closest - fruit.center) < float(fruit.radii.max()) + margin:
            return True
    return False


def generate_scenario(spec: ScenarioSpec, resolution: float = 0.01,
                      name: Optional[str] = None) -> Tuple[Scenario, GroundTruth]:
    """Seeded scene: one plant per row and segment, fruits at two height levels, leaves toward the aisle.

    Fruits that cannot be placed without overlap after bounded retries are
    skipped and counted in ``placement_failures``.
    """
    rng = np.random.default_rng(spec.seed)
    length = spec.segments * spec.segment_length
    bounds = Box((0.0, WORLD_Y[0], WORLD_Z[0]), (length, WORLD_Y[1], WORLD_Z[1]))

    fruits: List[Fruit] = []
    failures = 0
    for segment in range(spec.segments):
        x0 = segment * spec.segment_length
        stems = [x0 + spec.segment_length * rng.uniform(0.35, 0.65) for _ in ROW_Y]
        for k in range(spec.fruits_per_segment):
            row = k % len(ROW_Y)
            placed = False
            for _ in range(PLACEMENT_RETRIES):
                radii = np.array([rng.uniform(0.03, 0.045), rng.uniform(0.03, 0.045), rng.uniform(0.035, 0.05)])
                reach = float(radii.max())
                level = HEIGHT_LEVELS[rng.integers(len(HEIGHT_LEVELS))]
                center = np.array([
                    stems[row] + rng.uniform(-0.12, 0.12),
                    ROW_Y[row] + rng.uniform(-0.03, 0.03),
                    level + rng.uniform(-0.06, 0.06),
                ])
                if not (x0 + reach + 0.005 <= center[0] <= x0 + spec.segment_length - reach - 0.005):
                    continue
                if _fruits_overlap(center, reach, fruits):
                    continue
                fruits.append(Fruit(center, radii))
                placed = True
                break
            if not placed:
                failures += 1

    occluders: List[Box] = []
    if spec.occlusion_density > 0:
        for fruit in fruits:
            for _ in range(int(rng.poisson(2.0 * spec.occlusion_density))):
                for _ in range(LEAF_RETRIES):
                    half = np.array([rng.uniform(0.02, 0.04), 0.002, rng.uniform(0.02, 0.04)])
                    center = np.array([
                        fruit.center[0] + rng.uniform(-0.05, 0.05),
                        fruit.center[1] - float(fruit.radii.max()) - rng.uniform(0.02, 0.06),
                        fruit.center[2] + rng.uniform(-0.05, 0.05),
                    ])
                    leaf = Box.from_arrays(center - half, center + half)
                    if not (bounds.contains(leaf.lo) and bounds.contains(leaf.hi)):
                        continue
                    if leaf.lo[1] > AISLE_Y[1] + 0.01 and not _box_hits_fruit(leaf, fruits):
                        occluders.append(leaf)
                        break

    if failures:
        logger.warning(f"Scenario seed {spec.seed}: {failures} fruits could not be placed")
    scenario = Scenario(name or f"rows_s{spec.seed}", bounds, spec.segments, spec.segment_length,
                        fruits, occluders, spec.seed, failures)
    return scenario, compute_ground_truth(scenario, resolution)


def camera_rays(pose: ViewPose, sensor: SensorConfig, width: Optional[int] = None,
                height: Optional[int] = None) -> np.ndarray:
    """Unit ray directions of a pinhole camera with zero roll, shape (W * H, 3)."""
    width = width or sensor.width
    height = height or sensor.height
    forward = np.asarray(pose.direction, dtype=float)
    forward = forward / np.linalg.norm(forward)
    right = np.cross(forward, [0.0, 0.0, 1.0])
    if np.linalg.norm(right) < 1e-9:
        right = np.cross(forward, [0.0, 1.0, 0.0])
    right /= np.linalg.norm(right)
    up = np.cross(right, forward)

    tan_h = math.tan(math.radians(sensor.fov_deg) / 2.0)
    tan_v = tan_h * height / width
    u = ((np.arange(width) + 0.5) / width * 2.0 - 1.0) * tan_h
    v = ((np.arange(height) + 0.5) / height * 2.0 - 1.0) * tan_v
    uu, vv = np.meshgrid(u, v, indexing="xy")
    dirs = forward + uu.reshape(-1, 1) * right + vv.reshape(-1, 1) * up
    return dirs / np.linalg.norm(dirs, axis=1, keepdims=True)


def _ellipsoid_hits(origin: np.ndarray, dirs: np.ndarray, fruit: Fruit) -> np.ndarray:
    oc = (origin - fruit.center) / fruit.radii
    dd = dirs / fruit.radii
    a = np.sum(dd * dd, axis=1)
    b = 2.0 * (dd @ oc)
    c = float(oc @ oc) - 1.0
    disc = b * b - 4.0 * a * c
    t = np.full(len(dirs), np.inf)
    ok = disc >= 0.0
    root = np.sqrt(disc[ok])
    near = (-b[ok] - root) / (2.0 * a[ok])
    far = (-b[ok] + root) / (2.0 * a[ok])
    t[ok] = np.where(near > 1e-9, near, np.where(far > 1e-9, far, np.inf))
    return t


def _box_hits(origin: np.ndarray, dirs: np.ndarray, box: Box) -> np.ndarray:
    with np.errstate(divide="ignore", invalid="ignore"):
        inv = 1.0 / dirs
        t_lo = (np.asarray(box.lo) - origin) * inv
        t_hi = (np.asarray(box.hi) - origin) * inv
    t_near = np.nanmax(np.minimum(t_lo, t_hi), axis=1)
    t_far = np.nanmin(np.maximum(t_lo, t_hi), axis=1)
    hit = (t_far >= t_near) & (t_near > 1e-9)
    return np.where(hit, t_near, np.inf)


def render_depth(scenario: Scenario, pose: ViewPose, sensor: SensorConfig,
                 noise_sigma: Optional[float] = None, rng: Optional[np.random.Generator] = None,
                 width: Optional[int] = None, height: Optional[int] = None) -> List[Tuple[np.ndarray, HitLabel]]:
    """Nearest analytic intersection per ray within max_range, with Gaussian range noise."""
    sigma = sensor.noise_sigma if noise_sigma is None else noise_sigma
    origin = np.asarray(pose.position, dtype=float)
    dirs = camera_rays(pose, sensor, width, height)
    best = np.full(len(dirs), np.inf)
    is_fruit = np.zeros(len(dirs), dtype=bool)

    for fruit in scenario.fruits:
        if np.linalg.norm(fruit.center - origin) - float(fruit.radii.max()) > sensor.max_range:
            continue
        t = _ellipsoid_hits(origin, dirs, fruit)
        closer = t < best
        best[closer] = t[closer]
        is_fruit[closer] = True
    for box in scenario.occluders:
        if np.linalg.norm(box.center - origin) - float(np.linalg.norm(box.size)) / 2.0 > sensor.max_range:
            continue
        t = _box_hits(origin, dirs, box)
        closer = t < best
        best[closer] = t[closer]
        is_fruit[closer] = False

    mask = best <= sensor.max_range
    ranges = best[mask]
    if sigma > 0:
        rng = rng or np.random.default_rng()
        ranges = ranges + rng.normal(0.0, sigma, size=len(ranges))
    points = origin + ranges[:, None] * dirs[mask]
    labels = is_fruit[mask]
    return [(point, HitLabel.FRUIT if fruit else HitLabel.PLANT) for point, fruit in zip(points, labels)]
