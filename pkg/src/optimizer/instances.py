"""
Problem fixtures: the four-view worked example and seeded random instances.
"""

from typing import Optional

import numpy as np

from ..graph import CoverageMatrix
from ..schemas import EdgePolicy
from .problem import PlanProblem


def four_view_example(edge_policy: EdgePolicy = EdgePolicy.METRIC_CLOSURE) -> PlanProblem:
    """Four views, six targets; the optimum is 0 -> 3 -> 1 at cost 2.0."""
    costs = {
        (0, 1): 1.5, (0, 2): 0.8, (0, 3): 1.0,
        (1, 2): 1.4, (1, 3): 1.0, (2, 3): 1.5,
    }
    cover = {0: [0], 1: [3, 4, 5], 2: [1, 2, 3], 3: [1, 2]}
    visible = np.zeros((4, 6), dtype=bool)
    for view, targets in cover.items():
        visible[view, targets] = True
    return PlanProblem(4, costs, CoverageMatrix(list(range(6)), visible), 20.0, edge_policy)


def random_instance(rng: np.random.Generator, n: int, n_targets: int,
                    edge_policy: EdgePolicy = EdgePolicy.METRIC_CLOSURE,
                    extra_edge_prob: float = 0.3, cover_prob: float = 0.3,
                    time_limit: float = 20.0) -> PlanProblem:
    """Connected random graph (spanning tree plus extra edges) with quarter-unit costs.

    Every target gets at least one covering view.
    """
    costs = {}
    order = rng.permutation(n)
    for k in range(1, n):
        a, b = int(order[k]), int(order[rng.integers(k)])
        costs[(min(a, b), max(a, b))] = float(rng.integers(1, 41)) / 4.0
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in costs and rng.random() < extra_edge_prob:
                costs[(i, j)] = float(rng.integers(1, 41)) / 4.0

    visible = rng.random((n, n_targets)) < cover_prob
    for c in range(n_targets):
        if not visible[:, c].any():
            visible[rng.integers(n), c] = True
    return PlanProblem(n, costs, CoverageMatrix(list(range(n_targets)), visible), time_limit, edge_policy)


def random_batch(seed: int, count: int, n: Optional[int] = None, n_range=(3, 8),
                 target_range=(1, 12), edge_policy: EdgePolicy = EdgePolicy.METRIC_CLOSURE):
    """Yield ``count`` random instances; ``n`` fixes the view count, else it is drawn from ``n_range``."""
    rng = np.random.default_rng(seed)
    for _ in range(count):
        views = n if n is not None else int(rng.integers(n_range[0], n_range[1] + 1))
        targets = int(rng.integers(target_range[0], target_range[1] + 1))
        yield random_instance(rng, views, targets, edge_policy)
