"""Solver-agnostic container for one convex SCA subproblem.

Variables are real; complex quantities are expanded into interleaved
(Re, Im) pairs by :func:`interleave` / :func:`deinterleave`. Every constraint is
tagged as affine, second-order cone, or hypograph of a logarithm (exponential cone).
"""
import logging
from enum import Enum
from typing import Dict, List, Optional, Tuple

import cvxpy as cp
import numpy as np
from pydantic import BaseModel, ConfigDict

logger = logging.getLogger(__name__)


class ConstraintKind(str, Enum):
    AFFINE = "affine"
    SOC = "soc"
    LOG = "log"


# tried in order after the requested backend fails numerically
FALLBACK_SOLVERS = ("CLARABEL", "ECOS", "SCS")
CERTIFIED_FAILURES = (cp.INFEASIBLE, cp.UNBOUNDED)


class SubproblemError(RuntimeError):
    """Raised when the backend finds no optimal point (infeasible or unbounded)."""


class SolverFailure(SubproblemError):
    """Every backend failed numerically; the program was not shown infeasible."""


def interleave(z: np.ndarray) -> np.ndarray:
    """Complex vector -> real vector [Re z0, Im z0, Re z1, Im z1, ...]."""
    out = np.empty(2 * z.shape[0])
    out[0::2] = z.real
    out[1::2] = z.imag
    return out


def deinterleave(x: np.ndarray) -> np.ndarray:
    x = np.asarray(x, dtype=float).ravel()
    return x[0::2] + 1j * x[1::2]


def inner_product_matrix(v: np.ndarray) -> np.ndarray:
    """
    Real 2 x 2n matrix A with A interleave(w) = [Re(v^H w), Im(v^H w)].
    """
    A = np.zeros((2, 2 * v.shape[0]))
    A[0, 0::2] = v.real
    A[0, 1::2] = v.imag
    A[1, 0::2] = -v.imag
    A[1, 1::2] = v.real
    return A


def linear_map_matrix(d: np.ndarray) -> np.ndarray:
    """
    Real 2 x 2n matrix B with B interleave(theta) = [Re(d theta), Im(d theta)] for a row d.
    """
    B = np.zeros((2, 2 * d.shape[0]))
    B[0, 0::2] = d.real
    B[0, 1::2] = -d.imag
    B[1, 0::2] = d.imag
    B[1, 1::2] = d.real
    return B


class ConicSolution(BaseModel):
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    status: str
    objective: float
    values: Dict[str, np.ndarray]
    max_violation: float
    solver: Optional[str] = None


class ConicProgram:
    """
    Affine objective over declared real variables with tagged conic constraints.

    Args:
        name (str): Label used in logs and errors
    """

    def __init__(self, name: str):
        self.name = name
        self.variables: Dict[str, cp.Variable] = {}
        self.constraints: List[Tuple[str, ConstraintKind, cp.Constraint]] = []
        self.objective: Optional[cp.Expression] = None

    def variable(self, name: str, size: int) -> cp.Variable:
        if name in self.variables:
            raise ValueError(f"{self.name}: variable {name!r} declared twice")
        var = cp.Variable(size, name=name)
        self.variables[name] = var
        return var

    def add(self, label: str, kind: ConstraintKind, constraint: cp.Constraint) -> None:
        declared = {var.id for var in self.variables.values()}
        stray = [var.name() for var in constraint.variables() if var.id not in declared]
        if stray:
            raise ValueError(f"{self.name}: constraint {label!r} uses undeclared variables {stray}")
        if not constraint.is_dcp():
            raise ValueError(f"{self.name}: constraint {label!r} is not convex")
        self.constraints.append((label, kind, constraint))

    def maximize(self, expression: cp.Expression) -> None:
        if not expression.is_affine():
            raise ValueError(f"{self.name}: objective must be affine")
        self.objective = expression

    def kinds(self) -> Dict[ConstraintKind, int]:
        counts = {kind: 0 for kind in ConstraintKind}
        for _, kind, _ in self.constraints:
            counts[kind] += 1
        return counts

    def _backends(self, solver: Optional[str]) -> List[Optional[str]]:
        installed = cp.installed_solvers()
        if solver is not None and solver not in installed:
            logger.warning("Solver %s not installed, using the cvxpy default", solver)
            solver = None
        return [solver] + [name for name in FALLBACK_SOLVERS if name in installed and name != solver]

    def solve(self, solver: Optional[str] = None) -> ConicSolution:
        """
        Solve with the given cvxpy backend, then with the fallback backends on a numerical failure.

        Args:
            solver (Optional[str]): Backend name; unavailable names fall back to the cvxpy default

        Returns:
            ConicSolution: Optimal values of every declared variable

        Raises:
            SubproblemError: If a backend certifies the program infeasible or unbounded
            SolverFailure: If every backend fails numerically
        """
        if self.objective is None:
            raise ValueError(f"{self.name}: no objective set")

        problem = cp.Problem(cp.Maximize(self.objective), [c for _, _, c in self.constraints])
        failures = []
        for backend in self._backends(solver):
            label = backend or "default"
            try:
                problem.solve(solver=backend)
            except cp.error.SolverError as e:
                failures.append(f"{label}: {e}")
                continue
            if problem.status in CERTIFIED_FAILURES:
                raise SubproblemError(f"{self.name}: solver status {problem.status}")
            if problem.status not in (cp.OPTIMAL, cp.OPTIMAL_INACCURATE):
                failures.append(f"{label}: status {problem.status}")
                continue
            if problem.status == cp.OPTIMAL_INACCURATE:
                logger.debug("%s solved inaccurately by %s", self.name, label)
            if failures:
                logger.info("%s solved by %s after %s", self.name, label, "; ".join(failures))
            return self._solution(problem, backend)
        raise SolverFailure(f"{self.name}: solver failed ({'; '.join(failures)})")

    def _solution(self, problem: cp.Problem, backend: Optional[str]) -> ConicSolution:
        violation = 0.0
        for _, _, constraint in self.constraints:
            violation = max(violation, float(np.max(constraint.violation())))
        return ConicSolution(
            status=problem.status,
            objective=float(problem.value),
            values={name: np.atleast_1d(np.asarray(var.value, dtype=float)) for name, var in self.variables.items()},
            max_violation=violation,
            solver=backend,
        )
