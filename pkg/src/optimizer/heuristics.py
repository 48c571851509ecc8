"""
Greedy plans: the motion-aware warm start for the exact solver and the
coverage-only baseline planner.
"""

import math
from typing import List, Optional

from ..utils.logger import get_logger
from .problem import PlanProblem, PlanSolution, SolveStatus

logger = get_logger(__name__)


def _greedy_cover(problem: PlanProblem, motion_aware: bool) -> Optional[List[int]]:
    """Views picked by greedy set cover, vertex 0 first; None if some target is uncoverable.

    Each step takes the view covering the most uncovered targets. With
    ``motion_aware`` ties go to the smaller cost from the nearest already
    selected view, then to the lower index; otherwise straight to the lower index.
    """
    masks = problem.cover_masks
    costs = problem.arc_costs
    uncovered = problem.full_mask & ~masks[0]
    selected = [0]
    while uncovered:
        best_key, best_view = None, None
        for j in range(1, problem.n):
            if j in selected:
                continue
            gain = bin(masks[j] & uncovered).count("1")
            if gain == 0:
                continue
            added = min(float(costs[s, j]) for s in selected) if motion_aware else 0.0
            key = (-gain, added, j)
            if best_key is None or key < best_key:
                best_key, best_view = key, j
        if best_view is None:
            return None
        selected.append(best_view)
        uncovered &= ~masks[best_view]
    return selected


def _nearest_neighbor_order(problem: PlanProblem, views: List[int]) -> Optional[List[int]]:
    """Open path from 0 through ``views``; None when a finite next hop is missing."""
    costs = problem.arc_costs
    path = [0]
    remaining = sorted(set(views) - {0})
    while remaining:
        head = path[-1]
        nxt = min(remaining, key=lambda j: (float(costs[head, j]), j))
        if not math.isfinite(costs[head, nxt]):
            return None
        path.append(nxt)
        remaining.remove(nxt)
    return path


def _two_opt(problem: PlanProblem, path: List[int]) -> List[int]:
    """Segment reversals on the open path (start fixed) until no move improves it."""
    costs = problem.arc_costs
    path = list(path)
    size = len(path)
    improved = True
    while improved:
        improved = False
        for i in range(1, size - 1):
            for j in range(i + 1, size):
                before = float(costs[path[i - 1], path[i]])
                after = float(costs[path[i - 1], path[j]])
                if j + 1 < size:
                    before += float(costs[path[j], path[j + 1]])
                    after += float(costs[path[i], path[j + 1]])
                if math.isfinite(after) and after < before - 1e-12:
                    path[i:j + 1] = reversed(path[i:j + 1])
                    improved = True
    return path


def _plan(problem: PlanProblem, motion_aware: bool, improve: bool) -> PlanSolution:
    if problem.full_mask & ~problem.cover_masks[0] == 0:
        return PlanSolution.stay(problem)
    views = _greedy_cover(problem, motion_aware)
    if views is None:
        return PlanSolution.failed(problem, SolveStatus.INFEASIBLE)
    path = _nearest_neighbor_order(problem, views)
    if path is None:
        logger.debug("Greedy ordering found no finite path through the selected views")
        return PlanSolution.failed(problem, SolveStatus.INFEASIBLE)
    if improve:
        path = _two_opt(problem, path)
    return PlanSolution.from_path(problem, path, SolveStatus.HEURISTIC)


def greedy_warm_start(problem: PlanProblem) -> PlanSolution:
    """Motion-aware greedy cover, nearest-neighbor ordering, then 2-opt."""
    return _plan(problem, motion_aware=True, improve=True)


def coverage_greedy_plan(problem: PlanProblem) -> PlanSolution:
    """Baseline: greedy cover ignoring motion, nearest-neighbor ordering only."""
    return _plan(problem, motion_aware=False, improve=False)
