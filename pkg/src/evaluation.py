"""
Mapping-quality metrics: fruit clusters from ROI voxels, one-to-one matching
against ground truth, surface coverage and hull-volume accuracy.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import ndimage
from scipy.spatial import ConvexHull, QhullError

from .sim_world import FruitTruth
from .utils.logger import get_logger
from .world_model import Key, VoxelGrid, VoxelState

logger = get_logger(__name__)

MATCH_DISTANCE = 0.20
MIN_CLUSTER_SIZE = 3


@dataclass
class FruitCluster:
    members: List[Key]
    centroid: np.ndarray
    hull_volume: float


@dataclass
class MatchResult:
    detected: int
    pairs: List[Tuple[int, int]]

    def cluster_for(self, fruit_index: int) -> Optional[int]:
        for cluster, fruit in self.pairs:
            if fruit == fruit_index:
                return cluster
        return None


def hull_volume(points: np.ndarray) -> float:
    """Convex hull volume; 0 for fewer than four points or a flat set."""
    if len(points) < 4:
        return 0.0
    try:
        return float(ConvexHull(points).volume)
    except QhullError:
        return 0.0


def detect_fruit_clusters(grid: VoxelGrid, min_size: int = MIN_CLUSTER_SIZE) -> List[FruitCluster]:
    """26-connected components of ROI voxels, ordered by smallest member key."""
    roi = grid.keys_in_state(VoxelState.ROI)
    if not roi:
        return []
    keys = np.asarray(roi, dtype=np.int64)
    lo = keys.min(axis=0)
    dense = np.zeros(tuple(keys.max(axis=0) - lo + 1), dtype=bool)
    dense[tuple((keys - lo).T)] = True
    labels, count = ndimage.label(dense, structure=np.ones((3, 3, 3), dtype=bool))

    clusters = []
    component = labels[tuple((keys - lo).T)]
    for label in range(1, count + 1):
        members = keys[component == label]
        if len(members) < min_size:
            continue
        centers = grid.origin + (members + 0.5) * grid.resolution
        clusters.append(FruitCluster(
            members=[tuple(int(v) for v in m) for m in members],
            centroid=centers.mean(axis=0),
            hull_volume=hull_volume(centers),
        ))
    clusters.sort(key=lambda cluster: min(cluster.members))
    logger.debug(f"{len(roi)} ROI voxels -> {len(clusters)} clusters")
    return clusters


def match_fruits(clusters: Sequence[FruitCluster], gt: Sequence[FruitTruth],
                 threshold: float = MATCH_DISTANCE) -> MatchResult:
    """Greedy one-to-one matching by ascending centroid distance, within ``threshold``."""
    candidates = []
    for ci, cluster in enumerate(clusters):
        for fi, fruit in enumerate(gt):
            distance = float(np.linalg.norm(cluster.centroid - fruit.centroid))
            if distance <= threshold:
                candidates.append((distance, ci, fi))
    candidates.sort()
    used_clusters, used_fruits, pairs = set(), set(), []
    for _, ci, fi in candidates:
        if ci in used_clusters or fi in used_fruits:
            continue
        used_clusters.add(ci)
        used_fruits.add(fi)
        pairs.append((ci, fi))
    return MatchResult(len(pairs), sorted(pairs, key=lambda pair: pair[1]))


def surface_coverage(grid: VoxelGrid, gt: Sequence[FruitTruth]) -> float:
    """Mean over ground-truth fruits of the ROI fraction of their surface voxels, in percent."""
    if not gt:
        return 0.0
    fractions = []
    for fruit in gt:
        if not fruit.surface_keys:
            fractions.append(0.0)
            continue
        seen = sum(1 for key in fruit.surface_keys if grid.state(key) == VoxelState.ROI)
        fractions.append(seen / len(fruit.surface_keys))
    return 100.0 * float(np.mean(fractions))


def volume_accuracy(clusters: Sequence[FruitCluster], gt: Sequence[FruitTruth],
                    match: Optional[MatchResult] = None) -> float:
    """Mean hull-volume ratio of matched clusters, capped at 100%; unmatched fruits score 0."""
    if not gt:
        return 0.0
    match = match or match_fruits(clusters, gt)
    scores = np.zeros(len(gt))
    for ci, fi in match.pairs:
        scores[fi] = min(1.0, clusters[ci].hull_volume / gt[fi].volume)
    return 100.0 * float(scores.mean())


def evaluate(grid: VoxelGrid, gt: Sequence[FruitTruth]) -> Tuple[int, float, float]:
    """(detected fruits, surface coverage %, volume accuracy %) for ``gt``."""
    clusters = detect_fruit_clusters(grid)
    match = match_fruits(clusters, gt)
    return match.detected, surface_coverage(grid, gt), volume_accuracy(clusters, gt, match)
