import numpy as np
import pytest

from src.schemas import PlannerSettings, ScenarioSpec, SensorConfig
from src.world_model import Box, CellRecord, VoxelGrid, VoxelState

COUNTS = {
    VoxelState.FREE: (0, 1, 0),
    VoxelState.OCCUPIED: (1, 0, 0),
    VoxelState.ROI: (1, 0, 1),
}


def set_state(grid: VoxelGrid, key, state: VoxelState):
    """Write a voxel state directly with minimal counts."""
    if state == VoxelState.UNKNOWN:
        grid.cells.pop(tuple(key), None)
    else:
        grid.cells[tuple(key)] = CellRecord(*COUNTS[state])


@pytest.fixture
def unit_grid():
    """1 m cube at 0.1 m resolution."""
    return VoxelGrid(Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0)), 0.1)


@pytest.fixture
def sensor():
    return SensorConfig(min_range=0.15, max_range=0.60, fov_deg=60.0, width=32, height=24, noise_sigma=0.0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def fast_settings():
    """Settings small enough for closed-loop tests: 2 cm voxels, 32x24 rays, short budgets."""
    return PlannerSettings.model_validate({
        "world": {"resolution": 0.02},
        "sensor": {"width": 32, "height": 24, "noise_sigma": 0.0},
        "sampling": {"lookat_budget": 24, "views_per_cycle": 12, "attempts_per_view": 20, "workers": 1},
        "optimizer": {"time_limit": 5.0, "node_limit": 5000},
        "mission": {"segment_budget": 20.0, "replan_interval": 8.0, "inter_segment_time": 2.0},
        "scenario": {"segments": 1, "fruits_per_segment": 1, "occlusion_density": 0.0, "seed": 3},
        "logging": {"level": "WARNING", "console": False, "file": False},
    })


@pytest.fixture
def small_spec():
    return ScenarioSpec(segments=1, fruits_per_segment=2, occlusion_density=0.5, seed=7)
