import numpy as np
import pytest

from src.evaluation import (
    FruitCluster,
    detect_fruit_clusters,
    evaluate,
    hull_volume,
    match_fruits,
    surface_coverage,
    volume_accuracy,
)
from src.sim_world import Fruit, FruitTruth, voxelize_fruit
from src.world_model import Box, VoxelGrid, VoxelState
from tests.conftest import set_state

BOUNDS = Box((0.0, 0.0, 0.0), (0.2, 0.2, 0.2))


def truth_for(fruit: Fruit, grid: VoxelGrid) -> FruitTruth:
    return FruitTruth(frozenset(voxelize_fruit(fruit, grid)), fruit.volume, fruit.center.copy(), 0)


def cluster_at(centroid, volume=1e-4):
    return FruitCluster([(0, 0, 0)], np.asarray(centroid, dtype=float), volume)


def flood_fill_components(keys, min_size):
    remaining = set(keys)
    components = []
    while remaining:
        stack = [remaining.pop()]
        members = set(stack)
        while stack:
            x, y, z = stack.pop()
            for dx in (-1, 0, 1):
                for dy in (-1, 0, 1):
                    for dz in (-1, 0, 1):
                        neighbor = (x + dx, y + dy, z + dz)
                        if neighbor in remaining:
                            remaining.remove(neighbor)
                            members.add(neighbor)
                            stack.append(neighbor)
        if len(members) >= min_size:
            components.append(frozenset(members))
    return set(components)


class TestHullVolume:
    def test_tetrahedron(self):
        s = 0.05
        points = np.array([[0, 0, 0], [s, 0, 0], [0, s, 0], [0, 0, s]], dtype=float)
        assert hull_volume(points) == pytest.approx(s ** 3 / 6)

    def test_degenerate_inputs(self):
        assert hull_volume(np.zeros((3, 3))) == 0.0
        flat = np.array([[0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0], [0.5, 0.5, 0]], dtype=float)
        assert hull_volume(flat) == 0.0


class TestClusters:
    def test_no_roi(self):
        assert detect_fruit_clusters(VoxelGrid(BOUNDS, 0.01)) == []

    def test_two_blobs(self):
        grid = VoxelGrid(BOUNDS, 0.01)
        for key in [(1, 1, 1), (2, 1, 1), (2, 2, 2), (10, 10, 10), (11, 10, 10), (11, 11, 10)]:
            set_state(grid, key, VoxelState.ROI)
        set_state(grid, (15, 15, 15), VoxelState.ROI)
        clusters = detect_fruit_clusters(grid)
        assert len(clusters) == 2
        assert sorted(clusters[0].members) == [(1, 1, 1), (2, 1, 1), (2, 2, 2)]
        assert np.allclose(clusters[0].centroid, grid.origin + (np.array([5 / 3, 4 / 3, 4 / 3]) + 0.5) * 0.01)

    @pytest.mark.parametrize("seed", range(5))
    def test_matches_flood_fill(self, seed):
        rng = np.random.default_rng(seed)
        grid = VoxelGrid(BOUNDS, 0.01)
        keys = {tuple(int(v) for v in k) for k in rng.integers(0, 12, size=(260, 3))}
        for key in keys:
            set_state(grid, key, VoxelState.ROI)
        found = {frozenset(c.members) for c in detect_fruit_clusters(grid)}
        assert found == flood_fill_components(keys, 3)


class TestMatching:
    def test_threshold(self):
        gt = [FruitTruth(frozenset(), 1e-4, np.array([0.5, 0.5, 0.5]), 0)]
        assert match_fruits([cluster_at([0.55, 0.5, 0.5])], gt).detected == 1
        assert match_fruits([cluster_at([0.75, 0.5, 0.5])], gt).detected == 0

    def test_one_to_one(self):
        gt = [FruitTruth(frozenset(), 1e-4, np.array([0.5, 0.5, 0.5]), 0)]
        clusters = [cluster_at([0.52, 0.5, 0.5]), cluster_at([0.48, 0.5, 0.5])]
        result = match_fruits(clusters, gt)
        assert result.detected == 1
        assert result.cluster_for(0) in (0, 1)

    def test_nearest_pairs_first(self):
        gt = [FruitTruth(frozenset(), 1e-4, np.array([0.0, 0.0, 0.0]), 0),
              FruitTruth(frozenset(), 1e-4, np.array([0.15, 0.0, 0.0]), 0)]
        clusters = [cluster_at([0.1, 0.0, 0.0]), cluster_at([0.14, 0.0, 0.0])]
        result = match_fruits(clusters, gt)
        assert result.pairs == [(0, 0), (1, 1)]


class TestCoverageAndVolume:
    def test_untouched_grid(self):
        grid = VoxelGrid(BOUNDS, 0.01)
        gt = [truth_for(Fruit(np.array([0.1, 0.1, 0.1]), np.array([0.04, 0.04, 0.05])), grid)]
        assert surface_coverage(grid, gt) == 0.0
        assert evaluate(grid, gt) == (0, 0.0, 0.0)

    def test_fully_observed_surface(self):
        grid = VoxelGrid(BOUNDS, 0.01)
        fruit = Fruit(np.array([0.1, 0.1, 0.1]), np.array([0.04, 0.04, 0.05]))
        gt = [truth_for(fruit, grid)]
        for key in gt[0].surface_keys:
            set_state(grid, key, VoxelState.ROI)
        assert surface_coverage(grid, gt) == pytest.approx(100.0)

    def test_full_voxelization_volume(self):
        grid = VoxelGrid(BOUNDS, 0.01)
        fruit = Fruit(np.array([0.1, 0.1, 0.1]), np.array([0.04, 0.04, 0.05]))
        for key in voxelize_fruit(fruit, grid, solid=True):
            set_state(grid, key, VoxelState.ROI)
        detected, coverage, volume = evaluate(grid, [truth_for(fruit, grid)])
        assert detected == 1
        assert coverage == pytest.approx(100.0)
        assert 90.0 <= volume <= 100.0

    def test_unmatched_fruit_scores_zero(self):
        gt = [FruitTruth(frozenset(), 1e-4, np.array([0.5, 0.5, 0.5]), 0),
              FruitTruth(frozenset(), 1e-4, np.array([0.9, 0.9, 0.9]), 0)]
        clusters = [cluster_at([0.5, 0.5, 0.5], volume=1e-4)]
        assert volume_accuracy(clusters, gt) == pytest.approx(50.0)

    def test_volume_capped(self):
        gt = [FruitTruth(frozenset(), 1e-4, np.array([0.5, 0.5, 0.5]), 0)]
        assert volume_accuracy([cluster_at([0.5, 0.5, 0.5], volume=5e-4)], gt) == pytest.approx(100.0)

    def test_no_ground_truth(self):
        grid = VoxelGrid(BOUNDS, 0.01)
        assert evaluate(grid, []) == (0, 0.0, 0.0)
