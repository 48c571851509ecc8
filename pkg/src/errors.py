"""
Exception hierarchy shared by the planner modules and the CLI.
"""


class PlannerError(Exception):
    """Base class for planner failures."""


class InvalidInputError(PlannerError):
    """Malformed instance, scenario, graph or configuration input."""


class InfeasibleProblemError(PlannerError):
    """A solve finished without any coverage-feasible plan."""


class InternalConsistencyError(PlannerError):
    """An invariant that should hold by construction was violated."""
