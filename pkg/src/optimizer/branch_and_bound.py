"""
Exact solver: depth-first branch and bound over path arcs with lazy subtour
cuts, a greedy warm start and a polled wall clock.

Branching extends the partial path from its head. At each node the arcs
leaving the head are tried cheapest first; taking an arc is the p = 1 branch
and moving on to the next candidate is the p = 0 branch. A node whose path
covers every target is an integral candidate: it is closed through the
virtual vertex, passed through subtour separation and checked against every
materialized constraint before it can replace the incumbent. Head extension
only builds simple paths from vertex 0, so separation finds no cycle on
these candidates and the model's lazy cut list stays empty during a solve.
"""

import math
import time
from typing import Dict, List, Optional, Tuple

import numpy as np

from ..errors import InternalConsistencyError
from ..schemas import EdgePolicy
from ..utils.logger import get_logger, log_performance
from .heuristics import greedy_warm_start
from .model import IlpModel
from .problem import PlanProblem, PlanSolution, SolveStatus

logger = get_logger(__name__)

EPS = 1e-9
CLOCK_POLL = 64
DOMINANCE_CAP = 500_000


class _SearchLimit(Exception):
    pass


class BranchAndBound:
    def __init__(self, model: IlpModel, time_limit: float, rng_seed: int = 0,
                 node_limit: Optional[int] = None):
        self.model = model
        self.problem: PlanProblem = model.problem
        self.time_limit = time_limit
        self.node_limit = node_limit
        self.rng_seed = rng_seed

        problem = self.problem
        n = problem.n
        self.masks = problem.cover_masks
        self.full = problem.full_mask
        self.metric = problem.edge_policy == EdgePolicy.METRIC_CLOSURE

        self.cost = np.full((n, n), math.inf)
        for (i, j), weight in model.arc_costs.items():
            if i < n and j < n:
                self.cost[i, j] = weight
        reach = problem.closure

        rank = np.random.default_rng(rng_seed).permutation(n)
        self.successors: List[List[Tuple[float, int]]] = []
        for i in range(n):
            row = [(float(self.cost[i, j]), j) for j in range(n) if j != i and math.isfinite(self.cost[i, j])]
            row.sort(key=lambda item: (item[0], rank[item[1]]))
            self.successors.append(row)

        n_targets = problem.coverage.n_targets
        self.covering = [problem.coverage.covering_views(c) for c in range(n_targets)]
        # per head: targets with their nearest covering view distance, farthest first
        self.reach_order: List[List[Tuple[float, int]]] = []
        for head in range(n):
            entries = []
            for c, views in enumerate(self.covering):
                nearest = min((float(reach[head, j]) for j in views), default=math.inf)
                entries.append((nearest, c))
            entries.sort(key=lambda item: (-item[0], item[1]))
            self.reach_order.append(entries)

        sole = set()
        for views in self.covering:
            if len(views) == 1 and views[0] != 0:
                sole.add(views[0])
        self.sole_views = sorted(sole)
        self.cheapest_in = {
            j: min((float(self.cost[i, j]) for i in range(n) if i != j), default=math.inf)
            for j in self.sole_views
        }

        self.best_cost = math.inf
        self.best_path: Optional[List[int]] = None
        self.nodes = 0
        self.cuts = 0
        self.seen: Dict[Tuple[int, int], float] = {}
        self.deadline = 0.0

    # -- bounding ----------------------------------------------------------

    def lower_bound(self, head: int, visited: int, covered: int) -> float:
        reach = 0.0
        for distance, c in self.reach_order[head]:
            if not covered >> c & 1:
                reach = distance
                break
        must = 0.0
        for j in self.sole_views:
            if not visited >> j & 1:
                must += self.cheapest_in[j]
        return max(reach, must)

    # -- candidates --------------------------------------------------------

    def offer(self, path: List[int], cost: float):
        values = self.model.assignment(path)
        cuts = self.model.separate(values)
        if cuts:
            self.cuts += len(cuts)
            return
        broken = self.model.violations(values)
        if broken:
            raise InternalConsistencyError(
                f"candidate path {path} violates {len(broken)} constraints ({broken[0].family})"
            )
        if cost < self.best_cost - EPS:
            self.best_cost = cost
            self.best_path = list(path)

    def expand(self, head: int, visited: int, covered: int, cost: float, path: List[int]):
        self.nodes += 1
        if self.node_limit is not None and self.nodes > self.node_limit:
            raise _SearchLimit()
        if self.nodes % CLOCK_POLL == 0 and time.perf_counter() > self.deadline:
            raise _SearchLimit()

        if covered == self.full:
            self.offer(path, cost)
            return

        state = (visited, head)
        previous = self.seen.get(state)
        if previous is not None and previous <= cost + EPS:
            return
        if previous is not None or len(self.seen) < DOMINANCE_CAP:
            self.seen[state] = cost

        if cost + self.lower_bound(head, visited, covered) >= self.best_cost - EPS:
            return

        for step, j in self.successors[head]:
            if cost + step >= self.best_cost - EPS:
                break
            if visited >> j & 1:
                continue
            if self.metric and not self.masks[j] & ~covered:
                continue
            path.append(j)
            self.expand(j, visited | 1 << j, covered | self.masks[j], cost + step, path)
            path.pop()

    # -- driver ------------------------------------------------------------

    def solve(self) -> PlanSolution:
        problem = self.problem
        start = time.perf_counter()
        self.deadline = start + self.time_limit

        if self.full & ~self.masks[0] == 0:
            return PlanSolution.stay(problem)

        warm = greedy_warm_start(problem)
        if warm.status.has_path and warm.status != SolveStatus.TRIVIAL_STAY:
            self.offer(warm.ordered_path, warm.objective)

        complete = True
        try:
            self.expand(0, 1, self.masks[0], 0.0, [0])
        except _SearchLimit:
            complete = False

        elapsed = time.perf_counter() - start
        log_performance("solve_exact", elapsed, {
            "n": problem.n, "targets": problem.coverage.n_targets,
            "nodes": self.nodes, "cuts": self.cuts, "complete": complete,
        })

        if self.best_path is None:
            status = SolveStatus.INFEASIBLE if complete else SolveStatus.NO_INCUMBENT
            return PlanSolution.failed(problem, status, self.nodes)
        status = SolveStatus.OPTIMAL if complete else SolveStatus.FEASIBLE_TIMEOUT
        solution = PlanSolution.from_path(problem, self.best_path, status, self.nodes)
        solution.objective = self.best_cost
        return solution


def solve_exact(model: IlpModel, time_limit: Optional[float] = None, rng_seed: int = 0,
                node_limit: Optional[int] = None) -> PlanSolution:
    """Solve ``model`` exactly unless the wall-clock or node budget runs out first.

    Statuses: Optimal (search completed), FeasibleTimeout (budget hit with an
    incumbent), Infeasible (search completed with none), NoIncumbent (budget
    hit with none), TrivialStay (vertex 0 already covers every target).
    """
    limit = model.problem.time_limit if time_limit is None else time_limit
    return BranchAndBound(model, limit, rng_seed, node_limit).solve()
