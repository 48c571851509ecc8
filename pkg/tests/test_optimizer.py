import math
import time

import numpy as np
import pytest

from src.errors import InternalConsistencyError, InvalidInputError
from src.graph import CoverageMatrix, ViewMotionGraph, add_vertex, connect_knn
from src.optimizer import (
    PlanProblem,
    PlanSolution,
    SolveStatus,
    brute_force_oracle,
    build_model,
    coverage_greedy_plan,
    detect_subtours,
    extract_path,
    greedy_warm_start,
    prefilter_targets,
    prefiltered,
    solve,
    solve_exact,
)
from src.optimizer.instances import four_view_example, random_batch, random_instance
from src.optimizer.model import p, v
from src.schemas import EdgePolicy
from src.view_sampling import GantryWristModel
from src.world_model import Box, VoxelGrid


def coverage_of(n, cover, n_targets):
    visible = np.zeros((n, n_targets), dtype=bool)
    for view, targets in cover.items():
        visible[view, targets] = True
    return CoverageMatrix(list(range(n_targets)), visible)


def assert_feasible(problem: PlanProblem, solution: PlanSolution):
    if solution.status == SolveStatus.TRIVIAL_STAY:
        assert problem.covers([0]) and solution.objective == 0.0
        return
    model = build_model(problem)
    path = extract_path(solution)
    values = model.assignment(path)
    assert model.violations(values) == []
    arcs = [(var[1], var[2]) for var, value in values.items() if var[0] == "p" and value]
    assert detect_subtours(arcs) == []
    assert problem.covers(path)
    assert solution.objective == pytest.approx(problem.path_cost(path), abs=1e-9)


class TestFourViewExample:
    def test_exact_optimum(self):
        problem = four_view_example()
        start = time.perf_counter()
        solution = solve_exact(build_model(problem))
        assert time.perf_counter() - start < 1.0
        assert solution.status == SolveStatus.OPTIMAL
        assert solution.objective == pytest.approx(2.0, abs=1e-12)
        assert solution.ordered_path == [0, 3, 1]
        assert solution.new_views == [1, 3]
        assert extract_path(solution, problem) == [0, 3, 1]

    def test_model_contains_published_solution(self):
        problem = four_view_example()
        model = build_model(problem)
        assert model.violations(model.assignment([0, 3, 1])) == []
        assert model.objective([(0, 3), (3, 1), (1, 4), (4, 0)]) == pytest.approx(2.0)

    def test_warm_start_is_feasible_and_not_better(self):
        problem = four_view_example()
        warm = greedy_warm_start(problem)
        assert warm.status == SolveStatus.HEURISTIC
        assert warm.objective >= 2.0 - 1e-12
        assert warm.ordered_path == [0, 2, 1]
        assert warm.objective == pytest.approx(2.2)

    def test_coverage_greedy_baseline(self):
        baseline = coverage_greedy_plan(four_view_example())
        assert baseline.status == SolveStatus.HEURISTIC
        assert set(baseline.ordered_path) == {0, 1, 2}

    def test_oracle(self):
        problem = four_view_example()
        assert brute_force_oracle(problem).objective == pytest.approx(2.0)
        assert brute_force_oracle(problem, "permutations").objective == pytest.approx(2.0)

    def test_strict_edges_same_optimum(self):
        solution = solve_exact(build_model(four_view_example(EdgePolicy.STRICT_EDGES)))
        assert solution.objective == pytest.approx(2.0)


class TestSmallCases:
    def test_forced_selection(self):
        problem = PlanProblem(2, {(0, 1): 7.0}, coverage_of(2, {1: [0]}, 1))
        solution = solve_exact(build_model(problem))
        assert solution.status == SolveStatus.OPTIMAL
        assert solution.ordered_path == [0, 1]
        assert solution.objective == pytest.approx(7.0)

    def test_start_covers_everything(self):
        problem = PlanProblem(3, {(0, 1): 1.0, (1, 2): 1.0}, coverage_of(3, {0: [0, 1], 2: [1]}, 2))
        solution = solve_exact(build_model(problem))
        assert solution.status == SolveStatus.TRIVIAL_STAY
        assert extract_path(solution) == [0]

    def test_empty_target_set(self):
        problem = PlanProblem(3, {(0, 1): 1.0}, coverage_of(3, {}, 0))
        oracle = brute_force_oracle(problem)
        assert oracle.status == SolveStatus.TRIVIAL_STAY
        assert oracle.ordered_path == [0] and oracle.objective == 0.0

    def test_one_view_covers_all(self):
        problem = PlanProblem(3, {(0, 1): 2.0, (0, 2): 1.0}, coverage_of(3, {1: [0, 1, 2]}, 3))
        warm = greedy_warm_start(problem)
        assert warm.ordered_path == [0, 1]
        assert warm.objective == pytest.approx(2.0)

    def test_unreachable_cover_is_infeasible(self):
        problem = PlanProblem(3, {(0, 1): 1.0}, coverage_of(3, {2: [0]}, 1), edge_policy=EdgePolicy.STRICT_EDGES)
        solution = solve_exact(build_model(problem))
        assert solution.status == SolveStatus.INFEASIBLE
        assert not solution.status.has_path
        with pytest.raises(InternalConsistencyError):
            extract_path(solution)

    def test_invalid_problem_rejected(self):
        with pytest.raises(InvalidInputError):
            PlanProblem(2, {(0, 1): -1.0}, coverage_of(2, {}, 0))
        with pytest.raises(InvalidInputError):
            PlanProblem(2, {(0, 3): 1.0}, coverage_of(2, {}, 0))
        with pytest.raises(InvalidInputError):
            PlanProblem(3, {}, coverage_of(2, {}, 0))


class TestModel:
    def test_two_view_variables(self):
        problem = PlanProblem(2, {(0, 1): 1.0}, coverage_of(2, {1: [0]}, 1))
        model = build_model(problem)
        assert set(model.path_vars) == {p(0, 1), p(1, 0), p(0, 2), p(2, 0), p(1, 2), p(2, 1)}
        assert set(model.view_vars) == {v(0), v(1), v(2)}
        assert model.fixings == {v(0): 1, v(2): 1, p(0, 2): 0, p(2, 0): 1}

    @pytest.mark.parametrize("n", [2, 4, 6])
    def test_path_variable_count_on_complete_graph(self, n):
        costs = {(i, j): 1.0 for i in range(n) for j in range(i + 1, n)}
        model = build_model(PlanProblem(n, costs, coverage_of(n, {}, 0), edge_policy=EdgePolicy.STRICT_EDGES))
        assert len(model.path_vars) == 2 * math.comb(n, 2) + 2 * n

    def test_subtour_candidate_gets_a_cut(self):
        problem = four_view_example()
        model = build_model(problem)
        values = model.assignment([0, 1])
        values[p(2, 3)] = values[p(3, 2)] = 1
        values[v(2)] = values[v(3)] = 1
        cuts = model.separate(values)
        assert len(cuts) == 1 and cuts[0].family == "c"
        assert not cuts[0].satisfied(values)
        assert model.lazy_constraints == cuts

    @pytest.mark.parametrize("seed", range(10))
    def test_head_extension_candidates_need_no_cuts(self, seed):
        problem = random_instance(np.random.default_rng(seed), 7, 4)
        model = build_model(problem)
        solution = solve_exact(model, time_limit=10.0)
        assert solution.status in (SolveStatus.OPTIMAL, SolveStatus.TRIVIAL_STAY, SolveStatus.INFEASIBLE)
        assert model.lazy_constraints == []


class TestDetectSubtours:
    def test_single_tour(self):
        assert detect_subtours([(0, 1), (1, 4), (4, 0)]) == []

    def test_separate_cycle(self):
        assert detect_subtours([(0, 4), (4, 0), (2, 3), (3, 2)]) == [{2, 3}]

    @pytest.mark.parametrize("seed", range(20))
    def test_matches_component_scan(self, seed):
        rng = np.random.default_rng(seed)
        order = list(rng.permutation(10))
        arcs, start = [], 0
        while start < len(order):
            size = int(rng.integers(1, 5))
            cycle = order[start:start + size]
            if len(cycle) > 1:
                arcs += [(int(a), int(b)) for a, b in zip(cycle, cycle[1:] + cycle[:1])]
            start += size

        adjacency = {}
        for a, b in arcs:
            adjacency.setdefault(a, set()).add(b)
            adjacency.setdefault(b, set()).add(a)
        components, seen = [], set()
        for vertex in sorted(adjacency):
            if vertex in seen:
                continue
            stack, members = [vertex], set()
            while stack:
                x = stack.pop()
                if x not in members:
                    members.add(x)
                    stack.extend(adjacency[x] - members)
            seen |= members
            if 0 not in members:
                components.append(members)
        assert detect_subtours(arcs) == sorted(components, key=min)


class TestExtractPath:
    def test_follows_arcs(self):
        solution = PlanSolution(SolveStatus.OPTIMAL, 4, frozenset({0, 1, 3}),
                                frozenset({(0, 3), (3, 1), (1, 4), (4, 0)}), [0, 3, 1], 2.0)
        assert extract_path(solution) == [0, 3, 1]

    def test_closure_hop_expands(self):
        costs = {(0, 2): 1.0, (2, 5): 1.0, (0, 1): 5.0, (1, 3): 1.0, (3, 4): 1.0, (4, 5): 5.0}
        problem = PlanProblem(6, costs, coverage_of(6, {5: [0]}, 1))
        solution = PlanSolution.from_path(problem, [0, 5], SolveStatus.OPTIMAL)
        assert solution.objective == pytest.approx(2.0)
        assert extract_path(solution, problem) == [0, 2, 5]

    def test_broken_chain(self):
        solution = PlanSolution(SolveStatus.OPTIMAL, 4, frozenset({0, 1}), frozenset({(0, 1), (2, 4)}), [0, 1])
        with pytest.raises(InternalConsistencyError):
            extract_path(solution)

    def test_double_successor(self):
        solution = PlanSolution(SolveStatus.OPTIMAL, 3, frozenset({0, 1}), frozenset({(0, 1), (0, 2)}), [0, 1])
        with pytest.raises(InternalConsistencyError):
            extract_path(solution)


class TestPrefilter:
    def test_identity_when_all_covered(self):
        coverage = coverage_of(3, {1: [0], 2: [1]}, 2)
        reduced, dropped = prefilter_targets(coverage)
        assert reduced is coverage and dropped == []

    @pytest.mark.parametrize("seed", range(10))
    def test_drops_zero_columns(self, seed):
        rng = np.random.default_rng(seed)
        visible = rng.random((5, 12)) < 0.15
        coverage = CoverageMatrix([f"t{c}" for c in range(12)], visible)
        reduced, dropped = prefilter_targets(coverage)
        assert dropped == [f"t{c}" for c in range(12) if not visible[:, c].any()]
        assert reduced.visible.any(axis=0).all()

    def test_prefiltered_records_drops(self):
        problem = PlanProblem(2, {(0, 1): 1.0}, coverage_of(2, {1: [0]}, 2))
        reduced = prefiltered(problem)
        assert reduced.dropped_targets == [1]
        _, solution = solve(problem)
        assert solution.status == SolveStatus.OPTIMAL
        assert solution.dropped_targets == [1]


class TestOracle:
    def test_held_karp_matches_permutations(self):
        for problem in random_batch(seed=3, count=100, n_range=(2, 7)):
            a = brute_force_oracle(problem, "held_karp")
            b = brute_force_oracle(problem, "permutations")
            assert a.status == b.status
            if a.objective is not None:
                assert a.objective == pytest.approx(b.objective, abs=1e-9)

    def test_refuses_large_problems(self):
        problem = random_instance(np.random.default_rng(0), 12, 3)
        with pytest.raises(ValueError):
            brute_force_oracle(problem)

    def test_exact_matches_oracle_on_random_instances(self):
        mismatches = 0
        for problem in random_batch(seed=1, count=200):
            reference = brute_force_oracle(problem)
            problem, solution = solve(problem)
            assert solution.status in (SolveStatus.OPTIMAL, SolveStatus.TRIVIAL_STAY)
            if abs(solution.objective - reference.objective) > 1e-9:
                mismatches += 1
            assert_feasible(problem, solution)
        assert mismatches == 0

    def test_strict_edges_match_oracle(self):
        for problem in random_batch(seed=5, count=60, edge_policy=EdgePolicy.STRICT_EDGES):
            reference = brute_force_oracle(problem)
            problem, solution = solve(problem)
            assert solution.status.has_path == reference.status.has_path
            if reference.status.has_path:
                assert solution.objective == pytest.approx(reference.objective, abs=1e-9)

    def test_warm_start_never_beats_optimum(self):
        for problem in random_batch(seed=7, count=50):
            warm = greedy_warm_start(problem)
            reference = brute_force_oracle(problem)
            assert warm.objective >= reference.objective - 1e-9


class TestSolverContracts:
    @pytest.mark.slow
    def test_feasibility_on_many_instances(self):
        for problem in random_batch(seed=11, count=1000):
            problem, solution = solve(problem)
            assert solution.status.has_path
            assert_feasible(problem, solution)

    @pytest.mark.slow
    def test_time_limit_is_honored(self):
        problem = random_instance(np.random.default_rng(99), 15, 40, extra_edge_prob=0.5, cover_prob=0.15,
                                  time_limit=20.0)
        start = time.perf_counter()
        solution = solve_exact(build_model(problem))
        assert time.perf_counter() - start <= 21.0
        assert solution.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE_TIMEOUT)
        assert_feasible(problem, solution)

    def test_node_limit_returns_incumbent(self):
        problem = random_instance(np.random.default_rng(4), 12, 30, cover_prob=0.1)
        solution = solve_exact(build_model(problem), node_limit=5)
        assert solution.status in (SolveStatus.OPTIMAL, SolveStatus.FEASIBLE_TIMEOUT)
        assert_feasible(problem, solution)

    def test_deterministic(self):
        problem = random_instance(np.random.default_rng(21), 9, 10)
        a = solve_exact(build_model(problem), rng_seed=3)
        b = solve_exact(build_model(problem), rng_seed=3)
        assert a.ordered_path == b.ordered_path and a.objective == b.objective

    def test_more_targets_never_cheaper(self):
        rng = np.random.default_rng(17)
        for _ in range(30):
            problem = random_instance(rng, 7, 8)
            subset = sorted(rng.choice(8, size=4, replace=False).tolist())
            smaller = PlanProblem(problem.n, problem.costs, problem.coverage.restrict(subset))
            full = solve_exact(build_model(problem))
            part = solve_exact(build_model(smaller))
            assert part.objective <= full.objective + 1e-9


def _graph_problem(seed: int, k, n: int = 10, n_targets: int = 6):
    rng = np.random.default_rng(seed)
    workspace = Box((0.0, 0.0, 0.0), (1.0, 1.0, 1.0))
    model = GantryWristModel(workspace)
    configs = [model.config_from(rng.uniform(0.05, 0.95, 3), rng.uniform(-math.pi, math.pi))
               for _ in range(n)]
    graph = ViewMotionGraph((model.forward(configs[0]), configs[0]), model, k, 0.0, 0.0)
    for config in configs[1:]:
        add_vertex(graph, (model.forward(config), config))
    connect_knn(graph, VoxelGrid(workspace, 0.1), k=k)
    visible = rng.random((n, n_targets)) < 0.25
    coverage = CoverageMatrix(list(range(n_targets)), visible, list(range(n)))
    return PlanProblem.from_graph(graph, coverage, 0, EdgePolicy.STRICT_EDGES)


@pytest.mark.slow
def test_denser_graphs_never_cost_more():
    n = 15
    violations = compared = distinct_dense = 0
    for seed in range(50):
        problems = [_graph_problem(seed, k, n=n) for k in (None, 10, 5)]
        if any(p.dropped_targets or p.n < n for p in problems):
            continue
        if set(problems[0].costs) != set(problems[1].costs):
            distinct_dense += 1
        results = []
        for problem in problems:
            solution = solve_exact(build_model(problem), time_limit=30.0)
            if solution.status not in (SolveStatus.OPTIMAL, SolveStatus.TRIVIAL_STAY):
                break
            results.append(solution.objective)
        if len(results) == 3:
            compared += 1
            if not results[0] <= results[1] + 1e-9 <= results[2] + 2e-9:
                violations += 1
    assert compared > 0
    assert distinct_dense > 0
    assert violations == 0
