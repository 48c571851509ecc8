"""
Brute-force reference solver for small problems: every coverage-feasible view
subset, each ordered by Held-Karp or by full permutation enumeration.
"""

import itertools
import math
from typing import List, Sequence, Tuple

import numpy as np

from .problem import PlanProblem, PlanSolution, SolveStatus

MAX_ORACLE_VIEWS = 10


def held_karp_path(costs: np.ndarray, members: Sequence[int]) -> Tuple[float, List[int]]:
    """Cheapest open path from 0 visiting every vertex in ``members`` exactly once."""
    members = list(members)
    k = len(members)
    if k == 0:
        return 0.0, [0]
    full = (1 << k) - 1
    dp = [[math.inf] * k for _ in range(1 << k)]
    parent = [[-1] * k for _ in range(1 << k)]
    for idx, vertex in enumerate(members):
        dp[1 << idx][idx] = 0.0 + float(costs[0, vertex])
    for mask in range(1, 1 << k):
        for last in range(k):
            base = dp[mask][last]
            if not mask >> last & 1 or math.isinf(base):
                continue
            for nxt in range(k):
                if mask >> nxt & 1:
                    continue
                candidate = base + float(costs[members[last], members[nxt]])
                grown = mask | 1 << nxt
                if candidate < dp[grown][nxt]:
                    dp[grown][nxt] = candidate
                    parent[grown][nxt] = last
    best_last = min(range(k), key=lambda idx: (dp[full][idx], idx))
    best = dp[full][best_last]
    if math.isinf(best):
        return math.inf, []
    order, mask, last = [], full, best_last
    while last != -1:
        order.append(members[last])
        prev = parent[mask][last]
        mask &= ~(1 << last)
        last = prev
    return best, [0] + order[::-1]


def permutation_path(costs: np.ndarray, members: Sequence[int]) -> Tuple[float, List[int]]:
    best, best_path = math.inf, []
    for order in itertools.permutations(members):
        path = [0, *order]
        total = 0.0
        for a, b in zip(path, path[1:]):
            total += float(costs[a, b])
        if total < best:
            best, best_path = total, path
    return best, best_path


def brute_force_oracle(problem: PlanProblem, method: str = "held_karp") -> PlanSolution:
    """Global optimum over all subsets containing 0 that cover every target."""
    if problem.n > MAX_ORACLE_VIEWS:
        raise ValueError(f"oracle limited to {MAX_ORACLE_VIEWS} views, got {problem.n}")
    if method not in ("held_karp", "permutations"):
        raise ValueError(f"unknown oracle method {method!r}")
    if problem.full_mask & ~problem.cover_masks[0] == 0:
        return PlanSolution.stay(problem)

    order_fn = held_karp_path if method == "held_karp" else permutation_path
    costs = problem.arc_costs
    others = list(range(1, problem.n))
    best, best_path = math.inf, None
    for mask in range(1, 1 << len(others)):
        members = [others[b] for b in range(len(others)) if mask >> b & 1]
        if not problem.covers([0, *members]):
            continue
        total, path = order_fn(costs, members)
        if total < best:
            best, best_path = total, path

    if best_path is None:
        return PlanSolution.failed(problem, SolveStatus.INFEASIBLE)
    solution = PlanSolution.from_path(problem, best_path, SolveStatus.OPTIMAL)
    solution.objective = best
    return solution
