"""Convergence record shared by the dense solvers."""
from dataclasses import dataclass, field

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration-limit"


@dataclass
class SolverReport:
    status: str
    objective: float
    violation: float
    residual: float
    iterations: int
    solver: str = ""
    objective_trace: list = field(default_factory=list)
    dual_objective: float = float("nan")
    constraint_index: int = None
    extra: dict = field(default_factory=dict)

    @property
    def ok(self):
        return self.status == OPTIMAL

    def to_dict(self):
        return {
            "status": self.status,
            "objective": self.objective,
            "violation": self.violation,
            "residual": self.residual,
            "iterations": self.iterations,
            "solver": self.solver,
            "dual_objective": self.dual_objective,
            "constraint_index": self.constraint_index,
        }
