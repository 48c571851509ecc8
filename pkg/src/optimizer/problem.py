"""
Plan problem and solution types shared by the exact solver, the heuristics
and the brute-force oracle.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from functools import cached_property
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from ..errors import InternalConsistencyError, InvalidInputError
from ..graph import CoverageMatrix
from ..schemas import EdgePolicy, PlanInstanceRecord, SolutionRecord
from ..utils.logger import get_logger

logger = get_logger(__name__)


class SolveStatus(str, Enum):
    OPTIMAL = "Optimal"
    FEASIBLE_TIMEOUT = "FeasibleTimeout"
    INFEASIBLE = "Infeasible"
    TRIVIAL_STAY = "TrivialStay"
    HEURISTIC = "Heuristic"
    NO_INCUMBENT = "NoIncumbent"

    @property
    def has_path(self) -> bool:
        return self not in (SolveStatus.INFEASIBLE, SolveStatus.NO_INCUMBENT)


def prefilter_targets(coverage: CoverageMatrix) -> Tuple[CoverageMatrix, List]:
    """Drop targets that no view covers; returns the reduced matrix and the dropped targets."""
    if coverage.n_targets == 0:
        return coverage, []
    covered = coverage.visible.any(axis=0)
    dropped = [coverage.targets[c] for c in np.flatnonzero(~covered)]
    if not dropped:
        return coverage, []
    logger.warning(f"Dropping {len(dropped)} of {coverage.n_targets} targets with no covering view")
    return coverage.restrict([int(c) for c in np.flatnonzero(covered)]), dropped


@dataclass
class PlanProblem:
    """Motion costs over undirected graph edges plus view-target coverage.

    Vertex 0 is the current pose. ``costs`` is keyed by (i, j) with i < j.
    """

    n: int
    costs: Dict[Tuple[int, int], float]
    coverage: CoverageMatrix
    time_limit: float = 20.0
    edge_policy: EdgePolicy = EdgePolicy.METRIC_CLOSURE
    vertex_ids: Optional[List[int]] = None
    dropped_targets: List = field(default_factory=list)

    def __post_init__(self):
        if self.n < 1:
            raise InvalidInputError("a plan problem needs at least vertex 0")
        if self.coverage.n_views != self.n:
            raise InvalidInputError(f"coverage has {self.coverage.n_views} rows for {self.n} views")
        normalized: Dict[Tuple[int, int], float] = {}
        for (i, j), weight in self.costs.items():
            if i == j or not (0 <= i < self.n and 0 <= j < self.n):
                raise InvalidInputError(f"invalid edge ({i}, {j})")
            if not weight > 0 or not math.isfinite(weight):
                raise InvalidInputError(f"edge ({i}, {j}) must have a positive finite cost, got {weight}")
            pair = (min(i, j), max(i, j))
            if pair in normalized and normalized[pair] != weight:
                raise InvalidInputError(f"edge {pair} listed with two different costs")
            normalized[pair] = float(weight)
        self.costs = dict(sorted(normalized.items()))
        self.edge_policy = EdgePolicy(self.edge_policy)

    @property
    def targets(self) -> List:
        return self.coverage.targets

    @cached_property
    def graph(self) -> nx.Graph:
        g = nx.Graph()
        g.add_nodes_from(range(self.n))
        for (i, j), weight in self.costs.items():
            g.add_edge(i, j, weight=weight)
        return g

    @cached_property
    def _shortest(self) -> Tuple[np.ndarray, Dict[int, Dict[int, List[int]]]]:
        distances = np.full((self.n, self.n), math.inf)
        paths: Dict[int, Dict[int, List[int]]] = {}
        for source, (dist, path) in nx.all_pairs_dijkstra(self.graph, weight="weight"):
            paths[source] = path
            for target, d in dist.items():
                distances[source, target] = d
        return distances, paths

    @property
    def closure(self) -> np.ndarray:
        """All-pairs shortest-path distances over the sparse graph (inf when disconnected)."""
        return self._shortest[0]

    @cached_property
    def arc_costs(self) -> np.ndarray:
        """Cost matrix the model optimizes over: graph edges only, or the metric closure."""
        if self.edge_policy == EdgePolicy.METRIC_CLOSURE:
            return self.closure
        matrix = np.full((self.n, self.n), math.inf)
        np.fill_diagonal(matrix, 0.0)
        for (i, j), weight in self.costs.items():
            matrix[i, j] = matrix[j, i] = weight
        return matrix

    def shortest_path(self, i: int, j: int) -> List[int]:
        path = self._shortest[1].get(i, {}).get(j)
        if path is None:
            raise KeyError(f"vertex {j} unreachable from {i}")
        return list(path)

    @cached_property
    def cover_masks(self) -> List[int]:
        """Per view, the targets it covers as a bitmask over target indices."""
        masks = []
        for row in self.coverage.visible:
            mask = 0
            for c in np.flatnonzero(row):
                mask |= 1 << int(c)
            masks.append(mask)
        return masks

    @property
    def full_mask(self) -> int:
        return (1 << self.coverage.n_targets) - 1

    def path_cost(self, path: Sequence[int]) -> float:
        """Cost of an ordered vertex sequence under the problem's edge policy."""
        total = 0.0
        for a, b in zip(path, path[1:]):
            total += float(self.arc_costs[a, b])
        return total

    def covers(self, views: Sequence[int]) -> bool:
        covered = 0
        for view in views:
            covered |= self.cover_masks[view]
        return covered == self.full_mask

    # -- construction ------------------------------------------------------

    @classmethod
    def from_record(cls, record: PlanInstanceRecord) -> "PlanProblem":
        index = {target: c for c, target in enumerate(record.targets)}
        visible = np.zeros((record.n, len(record.targets)), dtype=bool)
        for view, target in record.coverage:
            visible[view, index[target]] = True
        costs: Dict[Tuple[int, int], float] = {}
        for i, j, weight in record.edges:
            costs[(i, j)] = weight
        return cls(record.n, costs, CoverageMatrix(list(record.targets), visible),
                   record.time_limit, record.edge_policy)

    def to_record(self) -> PlanInstanceRecord:
        """Instance record; non-scalar targets (voxel keys) are written as their indices."""
        scalar = all(isinstance(t, (int, str)) for t in self.targets)
        return PlanInstanceRecord(
            n=self.n,
            edges=[(i, j, w) for (i, j), w in self.costs.items()],
            targets=list(self.targets) if scalar else list(range(self.coverage.n_targets)),
            coverage=[(i, self.targets[c] if scalar else c) for i, c in self.coverage.pairs()],
            edge_policy=self.edge_policy,
            time_limit=self.time_limit,
        )

    @classmethod
    def from_graph(cls, graph, coverage: CoverageMatrix, current: int,
                   edge_policy: EdgePolicy = EdgePolicy.METRIC_CLOSURE,
                   time_limit: float = 20.0) -> "PlanProblem":
        """Problem over the graph component containing ``current``, which becomes vertex 0.

        ``coverage`` rows are looked up through its ``view_ids``; targets that no
        included view covers are dropped and recorded in ``dropped_targets``.
        """
        reachable = graph.reachable_from(current)
        ids = [current] + sorted(v for v in reachable if v != current)
        index = {vertex: k for k, vertex in enumerate(ids)}

        row_of = {vertex: row for row, vertex in enumerate(coverage.view_ids or range(coverage.n_views))}
        visible = np.zeros((len(ids), coverage.n_targets), dtype=bool)
        for k, vertex in enumerate(ids):
            row = row_of.get(vertex)
            if row is not None:
                visible[k] = coverage.visible[row]

        costs = {}
        for i, j, weight in graph.edges():
            if i in index and j in index:
                costs[(index[i], index[j])] = weight

        reduced, dropped = prefilter_targets(CoverageMatrix(list(coverage.targets), visible, ids))
        problem = cls(len(ids), costs, reduced, time_limit, edge_policy, ids, dropped)
        return problem


@dataclass
class PlanSolution:
    """Solver output; ``path_vars`` include the virtual-vertex arcs (index ``n``)."""

    status: SolveStatus
    n: int
    selected_views: FrozenSet[int] = frozenset()
    path_vars: FrozenSet[Tuple[int, int]] = frozenset()
    ordered_path: List[int] = field(default_factory=lambda: [0])
    objective: Optional[float] = None
    nodes: int = 0
    dropped_targets: List = field(default_factory=list)

    @classmethod
    def from_path(cls, problem: PlanProblem, path: Sequence[int], status: SolveStatus,
                  nodes: int = 0) -> "PlanSolution":
        path = list(path)
        virtual = problem.n
        arcs = set(zip(path, path[1:]))
        arcs.add((path[-1], virtual))
        arcs.add((virtual, 0))
        return cls(status, virtual, frozenset(path), frozenset(arcs), path,
                   problem.path_cost(path), nodes, list(problem.dropped_targets))

    @classmethod
    def stay(cls, problem: PlanProblem, nodes: int = 0) -> "PlanSolution":
        return cls(SolveStatus.TRIVIAL_STAY, problem.n, frozenset({0}), frozenset(), [0], 0.0,
                   nodes, list(problem.dropped_targets))

    @classmethod
    def failed(cls, problem: PlanProblem, status: SolveStatus, nodes: int = 0) -> "PlanSolution":
        return cls(status, problem.n, frozenset(), frozenset(), [], None, nodes, list(problem.dropped_targets))

    @property
    def new_views(self) -> List[int]:
        return sorted(v for v in self.selected_views if v != 0)

    def to_record(self, executed_path: Optional[Sequence[int]] = None) -> SolutionRecord:
        return SolutionRecord(
            status=self.status.value,
            objective=self.objective,
            ordered_path=list(self.ordered_path),
            selected_views=sorted(self.selected_views),
            new_views=self.new_views,
            executed_path=list(executed_path) if executed_path is not None else list(self.ordered_path),
            dropped_targets=[t if isinstance(t, (int, str)) else str(tuple(t)) for t in self.dropped_targets],
            nodes=self.nodes,
        )


def extract_path(solution: PlanSolution, problem: Optional[PlanProblem] = None) -> List[int]:
    """Vertex sequence from 0 following ``path_vars`` up to the virtual vertex.

    With a metric-closure ``problem`` each hop is expanded into its shortest
    path through the sparse graph.
    """
    if solution.status == SolveStatus.TRIVIAL_STAY or not solution.path_vars:
        if solution.status.has_path:
            return [0]
        raise InternalConsistencyError(f"no path to extract from a {solution.status.value} solution")

    virtual = solution.n
    successor: Dict[int, int] = {}
    for i, j in solution.path_vars:
        if i in successor:
            raise InternalConsistencyError(f"vertex {i} has two outgoing arcs")
        successor[i] = j

    path = [0]
    current = 0
    for _ in range(len(successor) + 1):
        nxt = successor.get(current)
        if nxt is None:
            raise InternalConsistencyError(f"path chain breaks at vertex {current}")
        if nxt == virtual:
            break
        path.append(nxt)
        current = nxt
    else:
        raise InternalConsistencyError("path chain does not reach the virtual vertex")

    if problem is None or problem.edge_policy != EdgePolicy.METRIC_CLOSURE:
        return path
    expanded = [0]
    for a, b in zip(path, path[1:]):
        try:
            expanded.extend(problem.shortest_path(a, b)[1:])
        except KeyError as e:
            raise InternalConsistencyError(f"closure hop {a}->{b} has no graph path") from e
    return expanded
