"""
Coverage-constrained path optimizer: problem types, the explicit binary model,
the exact branch-and-bound solver, greedy plans and the brute-force oracle.
"""

from .branch_and_bound import solve_exact
from .heuristics import coverage_greedy_plan, greedy_warm_start
from .model import IlpModel, build_model, detect_subtours
from .oracle import brute_force_oracle
from .problem import PlanProblem, PlanSolution, SolveStatus, extract_path, prefilter_targets

__all__ = [
    "IlpModel",
    "PlanProblem",
    "PlanSolution",
    "SolveStatus",
    "brute_force_oracle",
    "build_model",
    "coverage_greedy_plan",
    "detect_subtours",
    "extract_path",
    "greedy_warm_start",
    "prefilter_targets",
    "prefiltered",
    "solve",
    "solve_exact",
]


def prefiltered(problem: PlanProblem) -> PlanProblem:
    """The same problem without targets no view covers; dropped ones are recorded on it."""
    reduced, dropped = prefilter_targets(problem.coverage)
    if not dropped:
        return problem
    return PlanProblem(problem.n, problem.costs, reduced, problem.time_limit, problem.edge_policy,
                       problem.vertex_ids, list(problem.dropped_targets) + dropped)


def solve(problem: PlanProblem, rng_seed: int = 0, node_limit=None):
    """Prefilter, build the model and solve; returns the solved problem and its solution."""
    problem = prefiltered(problem)
    return problem, solve_exact(build_model(problem), rng_seed=rng_seed, node_limit=node_limit)
