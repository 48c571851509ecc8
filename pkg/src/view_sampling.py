"""
Candidate view sampling around look-at voxels.

Views are (pose, joint configuration) pairs for a pluggable motion model.
The bundled model is a gantry carrying a pan/tilt wrist, q = (x, y, z, yaw, pitch).
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import List, Optional, Protocol, Sequence, Tuple

import numpy as np

from .frontier_extraction import LookAtKind, LookAtVoxel
from .schemas import SensorConfig
from .utils.logger import get_logger
from .world_model import BLOCKING_STATES, Box, Key, VoxelGrid, raycast

logger = get_logger(__name__)


@dataclass(frozen=True, eq=False)
class ViewPose:
    position: np.ndarray
    direction: np.ndarray
    target_key: Optional[Key] = None
    kind: Optional[LookAtKind] = None

    @classmethod
    def looking_at(cls, position: Sequence[float], target: Sequence[float],
                   target_key: Optional[Key] = None, kind: Optional[LookAtKind] = None) -> "ViewPose":
        position = np.asarray(position, dtype=float)
        direction = np.asarray(target, dtype=float) - position
        return cls(position, direction / np.linalg.norm(direction), target_key, kind)


@dataclass(frozen=True, eq=False)
class JointConfig:
    q: np.ndarray

    @classmethod
    def of(cls, values: Sequence[float]) -> "JointConfig":
        return cls(np.asarray(values, dtype=float))


View = Tuple[ViewPose, JointConfig]


class MotionModel(Protocol):
    """What the planner needs from a robot."""

    workspace: Box

    def ik(self, pose: ViewPose) -> Optional[JointConfig]: ...

    def forward(self, config: JointConfig) -> ViewPose: ...

    def joint_distance(self, a: JointConfig, b: JointConfig) -> float: ...

    def config_valid(self, config: JointConfig, grid: VoxelGrid) -> bool: ...

    def trajectory_valid(self, a: JointConfig, b: JointConfig, grid: VoxelGrid) -> bool: ...


def wrap_angle(angle: float) -> float:
    return (angle + math.pi) % (2.0 * math.pi) - math.pi


class GantryWristModel:
    """Cartesian gantry over ``workspace`` with yaw/pitch wrist at the camera.

    Joint distance is sqrt(sum((w_i * dq_i)^2)) with yaw wrapped to [-pi, pi).
    """

    def __init__(self, workspace: Box, weights: Sequence[float] = (1.0, 1.0, 1.0, 0.3, 0.3)):
        self.workspace = workspace
        self.weights = np.asarray(weights, dtype=float)

    def ik(self, pose: ViewPose) -> Optional[JointConfig]:
        if not self.workspace.contains(pose.position, tol=1e-9):
            return None
        d = pose.direction
        yaw = math.atan2(d[1], d[0])
        pitch = math.asin(max(-1.0, min(1.0, float(d[2]))))
        return JointConfig.of((*pose.position, yaw, pitch))

    def forward(self, config: JointConfig) -> ViewPose:
        x, y, z, yaw, pitch = config.q
        direction = np.array([math.cos(pitch) * math.cos(yaw), math.cos(pitch) * math.sin(yaw), math.sin(pitch)])
        return ViewPose(np.array([x, y, z]), direction)

    def config_from(self, position: Sequence[float], yaw: float, pitch: float = 0.0) -> JointConfig:
        return JointConfig.of((*position, yaw, pitch))

    def joint_distance(self, a: JointConfig, b: JointConfig) -> float:
        diff = a.q - b.q
        diff[3] = wrap_angle(diff[3])
        return float(np.sqrt(np.sum((self.weights * diff) ** 2)))

    def config_valid(self, config: JointConfig, grid: VoxelGrid) -> bool:
        position = config.q[:3]
        return self.workspace.contains(position, tol=1e-9) and grid.state_at(position) not in BLOCKING_STATES

    def trajectory_valid(self, a: JointConfig, b: JointConfig, grid: VoxelGrid) -> bool:
        """Straight-line motion; every voxel the camera center sweeps must be non-blocking."""
        if not (self.workspace.contains(a.q[:3], tol=1e-9) and self.workspace.contains(b.q[:3], tol=1e-9)):
            return False
        for key in grid.traverse(a.q[:3], b.q[:3]):
            if grid.state(key) in BLOCKING_STATES:
                return False
        return True


def angle_between(a: ViewPose, b: ViewPose) -> float:
    """Angle between two viewing directions in degrees."""
    cosine = float(np.clip(np.dot(a.direction, b.direction), -1.0, 1.0))
    return math.degrees(math.acos(cosine))


def is_similar(a: View, b: View, angle_thresh_deg: float, joint_thresh: float,
               model: MotionModel) -> bool:
    return (angle_between(a[0], b[0]) < angle_thresh_deg
            and model.joint_distance(a[1], b[1]) < joint_thresh)


def split_requests(count: int, lookats: Sequence[LookAtVoxel]) -> List[int]:
    """Views requested per look-at: an even share, the first ``count % L`` get one more."""
    if not lookats or count <= 0:
        return [0] * len(lookats)
    base, extra = divmod(count, len(lookats))
    return [base + (1 if i < extra else 0) for i in range(len(lookats))]


def _sample_for_lookat(grid: VoxelGrid, lookat: LookAtVoxel, requested: int, workspace: Box,
                       sensor: SensorConfig, model: MotionModel, rng_seed: int,
                       attempts_per_view: int, unknown_blocks: bool) -> List[Tuple[int, View]]:
    rng = np.random.default_rng([rng_seed, *lookat.key])
    target = np.asarray(lookat.position, dtype=float)
    accepted: List[Tuple[int, View]] = []
    for attempt in range(attempts_per_view * requested):
        if len(accepted) >= requested:
            break
        direction = rng.normal(size=3)
        norm = np.linalg.norm(direction)
        if norm < 1e-12:
            continue
        distance = rng.uniform(sensor.min_range, sensor.max_range)
        position = target + distance * direction / norm

        actual = float(np.linalg.norm(target - position))
        if not sensor.min_range <= actual <= sensor.max_range:
            continue
        if not workspace.contains(position):
            continue
        if grid.state_at(position) in BLOCKING_STATES:
            continue
        if not raycast(grid, position, target, sensor.max_range, unknown_blocks).visible:
            continue
        pose = ViewPose.looking_at(position, target, lookat.key, lookat.kind)
        config = model.ik(pose)
        if config is None or not model.config_valid(config, grid):
            continue
        accepted.append((attempt, (pose, config)))
    return accepted


def sample_views(grid: VoxelGrid, lookats: Sequence[LookAtVoxel], workspace: Box, sensor: SensorConfig,
                 model: MotionModel, count: int, rng_seed: int, attempts_per_view: int = 50,
                 unknown_blocks: bool = False, workers: int = 1) -> List[View]:
    """Sample up to ``count`` views distributed evenly over ``lookats``.

    Each look-at draws from its own stream seeded by (rng_seed, key), and the
    merged result is ordered by (key, attempt index), so output does not
    depend on the worker count. Fewer views are returned when attempts run out.
    """
    requests = split_requests(count, lookats)
    tasks = [(lookat, n) for lookat, n in zip(lookats, requests) if n > 0]

    def run(task):
        lookat, requested = task
        found = _sample_for_lookat(grid, lookat, requested, workspace, sensor, model,
                                   rng_seed, attempts_per_view, unknown_blocks)
        return [(lookat.key, attempt, view) for attempt, view in found]

    if workers > 1 and len(tasks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(run, tasks))
    else:
        parts = [run(task) for task in tasks]

    merged = sorted((item for part in parts for item in part), key=lambda item: (item[0], item[1]))
    views = [view for _, _, view in merged]
    if len(views) < count:
        logger.debug(f"Sampled {len(views)} of {count} requested views from {len(lookats)} look-ats")
    return views
