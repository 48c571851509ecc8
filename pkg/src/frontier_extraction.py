"""
Look-at voxel extraction.

Unknown voxels on the occupied / free / ROI boundaries plus region-prior
voxels around known ROI, sampled with a fixed kind mix.
"""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from enum import Enum
from typing import Dict, List, Mapping, Optional, Sequence, Set, Tuple

import numpy as np

from .utils.logger import get_logger
from .world_model import Key, VoxelGrid, VoxelState, inflate_roi

logger = get_logger(__name__)


class LookAtKind(str, Enum):
    OCC_UNK = "occ_unk"
    FRE_UNK = "fre_unk"
    ROI_UNK = "roi_unk"
    PRIOR = "prior"


KIND_ORDER = (LookAtKind.OCC_UNK, LookAtKind.FRE_UNK, LookAtKind.ROI_UNK, LookAtKind.PRIOR)

DEFAULT_MIX: Mapping[LookAtKind, float] = {
    LookAtKind.OCC_UNK: 0.30,
    LookAtKind.FRE_UNK: 0.20,
    LookAtKind.ROI_UNK: 0.35,
    LookAtKind.PRIOR: 0.15,
}


@dataclass(frozen=True)
class LookAtVoxel:
    key: Key
    kind: LookAtKind
    position: Tuple[float, float, float]


def classify_boundary(grid: VoxelGrid, key: Key) -> Optional[LookAtKind]:
    """Boundary kind of an Unknown voxel from its 6-neighbors.

    Priority when several apply: ROI_UNK > OCC_UNK > FRE_UNK.
    """
    if grid.state(key) != VoxelState.UNKNOWN:
        return None
    seen = {grid.state(neighbor) for neighbor in grid.neighbors6(key)}
    if VoxelState.ROI in seen:
        return LookAtKind.ROI_UNK
    if VoxelState.OCCUPIED in seen:
        return LookAtKind.OCC_UNK
    if VoxelState.FREE in seen:
        return LookAtKind.FRE_UNK
    return None


def _classify_chunk(grid: VoxelGrid, keys: Sequence[Key]) -> List[Tuple[Key, LookAtKind]]:
    classified = []
    for key in keys:
        kind = classify_boundary(grid, key)
        if kind is not None:
            classified.append((key, kind))
    return classified


def prior_keys(grid: VoxelGrid, radius: float = 0.10) -> List[Key]:
    """Region-prior voxels as map keys: the lowest-index child of each inflated coarse voxel."""
    return sorted((2 * cx, 2 * cy, 2 * cz) for cx, cy, cz in inflate_roi(grid, radius))


def candidate_pools(grid: VoxelGrid, prior_radius: float = 0.10,
                    workers: int = 1) -> Dict[LookAtKind, List[Key]]:
    """Candidate keys per kind, each pool sorted by key.

    Classification may be split across workers; the merge is ordered by key so
    the pools do not depend on the worker count.
    """
    frontier: Set[Key] = set()
    for key, cell in grid.cells.items():
        if cell.state == VoxelState.UNKNOWN:
            continue
        for neighbor in grid.neighbors6(key):
            if grid.state(neighbor) == VoxelState.UNKNOWN:
                frontier.add(neighbor)
    ordered = sorted(frontier)

    if workers > 1 and len(ordered) > workers:
        size = -(-len(ordered) // workers)
        chunks = [ordered[i:i + size] for i in range(0, len(ordered), size)]
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(lambda chunk: _classify_chunk(grid, chunk), chunks))
        classified = sorted(item for part in parts for item in part)
    else:
        classified = _classify_chunk(grid, ordered)

    pools: Dict[LookAtKind, List[Key]] = {kind: [] for kind in KIND_ORDER}
    for key, kind in classified:
        pools[kind].append(key)
    pools[LookAtKind.PRIOR] = prior_keys(grid, prior_radius)
    return pools


def extract_lookats(grid: VoxelGrid, budget: int, rng_seed: int, prior_radius: float = 0.10,
                    mix: Optional[Mapping[LookAtKind, float]] = None,
                    workers: int = 1) -> List[LookAtVoxel]:
    """Draw up to ``budget`` distinct look-at voxels.

    Each draw picks a kind from the mix renormalized over non-empty pools, then
    a uniform key from that pool without replacement. A key already drawn via
    another pool is discarded and the same kind draws again. An empty result
    means nothing is left to explore.
    """
    if budget <= 0:
        raise ValueError(f"budget must be positive, got {budget}")
    mix = mix or DEFAULT_MIX
    pools = candidate_pools(grid, prior_radius, workers)
    sizes = {kind.value: len(pool) for kind, pool in pools.items()}
    rng = np.random.default_rng(rng_seed)

    taken: Set[Key] = set()
    lookats: List[LookAtVoxel] = []
    while len(lookats) < budget:
        live = [kind for kind in KIND_ORDER if pools[kind]]
        if not live:
            break
        weights = np.array([mix.get(kind, 0.0) for kind in live], dtype=float)
        if weights.sum() <= 0:
            break
        kind = live[int(rng.choice(len(live), p=weights / weights.sum()))]

        pool = pools[kind]
        drawn = None
        while pool:
            index = int(rng.integers(len(pool)))
            candidate = pool[index]
            pool[index] = pool[-1]
            pool.pop()
            if candidate not in taken:
                drawn = candidate
                break
        if drawn is None:
            continue

        taken.add(drawn)
        center = grid.center_of(drawn)
        lookats.append(LookAtVoxel(drawn, kind, (float(center[0]), float(center[1]), float(center[2]))))

    logger.debug(f"Extracted {len(lookats)} look-at voxels from pools {sizes}")
    return lookats


def select_targets(lookats: Sequence[LookAtVoxel], kinds: Sequence[LookAtKind]) -> List[LookAtVoxel]:
    """Look-at voxels whose kind is one of ``kinds``, in extraction order."""
    wanted = set(kinds)
    return [lookat for lookat in lookats if lookat.kind in wanted]
