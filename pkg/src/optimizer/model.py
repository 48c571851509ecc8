"""
Explicit binary program for coverage-constrained shortest Hamiltonian paths.

Variables are ``("p", i, j)`` for directed arcs and ``("v", i)`` for view
selection; index ``n`` is the virtual end vertex joined to every real view
with zero-cost arcs, which turns the open path into a tour through 0.

Constraint families:
  b  at most one arc in, at most one arc out, flow balance (per vertex)
  c  subtour elimination, generated lazily from integral candidates
  e  every target covered by at least one selected view
  f  arcs only touch selected views; selected views have an incident arc
"""

import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Mapping, Sequence, Set, Tuple

from .problem import PlanProblem

Var = Tuple


def p(i: int, j: int) -> Var:
    return ("p", i, j)


def v(i: int) -> Var:
    return ("v", i)


@dataclass
class LinearConstraint:
    family: str
    coeffs: Dict[Var, float]
    sense: str
    rhs: float

    def lhs(self, values: Mapping[Var, int]) -> float:
        return sum(coef * values.get(var, 0) for var, coef in self.coeffs.items())

    def satisfied(self, values: Mapping[Var, int], tol: float = 1e-9) -> bool:
        value = self.lhs(values)
        if self.sense == "<=":
            return value <= self.rhs + tol
        if self.sense == ">=":
            return value >= self.rhs - tol
        return abs(value - self.rhs) <= tol


@dataclass
class IlpModel:
    problem: PlanProblem
    arc_costs: Dict[Tuple[int, int], float]
    constraints: List[LinearConstraint]
    fixings: Dict[Var, int]
    lazy_constraints: List[LinearConstraint] = field(default_factory=list)

    @property
    def n(self) -> int:
        """Index of the virtual end vertex."""
        return self.problem.n

    @property
    def path_vars(self) -> List[Var]:
        return [p(i, j) for i, j in self.arc_costs]

    @property
    def view_vars(self) -> List[Var]:
        return [v(i) for i in range(self.n + 1)]

    def objective(self, arcs: Iterable[Tuple[int, int]]) -> float:
        return sum(self.arc_costs[arc] for arc in arcs)

    def assignment(self, path: Sequence[int]) -> Dict[Var, int]:
        """0/1 values for an open path from 0, closed through the virtual vertex."""
        values: Dict[Var, int] = {var: 0 for var in self.path_vars + self.view_vars}
        for a, b in zip(path, path[1:]):
            values[p(a, b)] = 1
        values[p(path[-1], self.n)] = 1
        values[p(self.n, 0)] = 1
        for vertex in path:
            values[v(vertex)] = 1
        values[v(self.n)] = 1
        return values

    def violations(self, values: Mapping[Var, int]) -> List[LinearConstraint]:
        """Every violated materialized, lazy or fixing constraint; subtours are checked separately."""
        broken = [c for c in self.constraints + self.lazy_constraints if not c.satisfied(values)]
        for var, fixed in self.fixings.items():
            if values.get(var, 0) != fixed:
                broken.append(LinearConstraint("fix", {var: 1.0}, "==", float(fixed)))
        for var, value in values.items():
            if var[0] == "p" and value and (var[1], var[2]) not in self.arc_costs:
                broken.append(LinearConstraint("a", {var: 1.0}, "==", 0.0))
        return broken

    def add_subtour_cut(self, subset: Set[int]) -> LinearConstraint:
        """sum of p_ij over arcs inside ``subset`` <= |subset| - 1."""
        coeffs = {p(i, j): 1.0 for i, j in self.arc_costs if i in subset and j in subset}
        cut = LinearConstraint("c", coeffs, "<=", float(len(subset) - 1))
        self.lazy_constraints.append(cut)
        return cut

    def separate(self, values: Mapping[Var, int]) -> List[LinearConstraint]:
        """Add cuts for every subtour in an integral assignment; returns the new cuts."""
        arcs = [(var[1], var[2]) for var, value in values.items() if var[0] == "p" and value]
        return [self.add_subtour_cut(component) for component in detect_subtours(arcs)]


def detect_subtours(path_vars: Iterable[Tuple[int, int]]) -> List[Set[int]]:
    """Connected components of the arcs that do not contain vertex 0, ordered by smallest member."""
    parent: Dict[int, int] = {}

    def find(x: int) -> int:
        parent.setdefault(x, x)
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, j in path_vars:
        ri, rj = find(i), find(j)
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)

    components: Dict[int, Set[int]] = {}
    for vertex in list(parent):
        components.setdefault(find(vertex), set()).add(vertex)
    root0 = find(0) if 0 in parent else None
    return sorted((members for root, members in components.items() if root != root0), key=min)


def build_model(problem: PlanProblem) -> IlpModel:
    """Materialize variables, families b/e/f and the fixings; family c starts empty."""
    n = problem.n
    costs = problem.arc_costs
    arcs: Dict[Tuple[int, int], float] = {}
    for i in range(n):
        for j in range(n):
            if i != j and math.isfinite(costs[i, j]):
                arcs[(i, j)] = float(costs[i, j])
    for i in range(n):
        arcs[(i, n)] = 0.0
        arcs[(n, i)] = 0.0

    incoming: Dict[int, List[Var]] = {i: [] for i in range(n + 1)}
    outgoing: Dict[int, List[Var]] = {i: [] for i in range(n + 1)}
    for i, j in arcs:
        outgoing[i].append(p(i, j))
        incoming[j].append(p(i, j))

    constraints: List[LinearConstraint] = []
    for i in range(n + 1):
        ins = {var: 1.0 for var in incoming[i]}
        outs = {var: 1.0 for var in outgoing[i]}
        constraints.append(LinearConstraint("b", ins, "<=", 1.0))
        constraints.append(LinearConstraint("b", outs, "<=", 1.0))
        balance = dict(ins)
        for var in outs:
            balance[var] = balance.get(var, 0.0) - 1.0
        constraints.append(LinearConstraint("b", balance, "==", 0.0))

    for c in range(problem.coverage.n_targets):
        coeffs = {v(i): 1.0 for i in problem.coverage.covering_views(c)}
        constraints.append(LinearConstraint("e", coeffs, ">=", 1.0))

    for i in range(n + 1):
        constraints.append(LinearConstraint("f", {**{var: 1.0 for var in incoming[i]}, v(i): -1.0}, "<=", 0.0))
        constraints.append(LinearConstraint("f", {**{var: 1.0 for var in outgoing[i]}, v(i): -1.0}, "<=", 0.0))
        touching = {var: 1.0 for var in incoming[i] + outgoing[i]}
        touching[v(i)] = -1.0
        constraints.append(LinearConstraint("f", touching, ">=", 0.0))

    fixings = {v(0): 1, v(n): 1, p(0, n): 0, p(n, 0): 1}
    return IlpModel(problem, arcs, constraints, fixings)
