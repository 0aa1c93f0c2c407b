"""Mixed-integer linear programs over binary variables.

Thin problem/solution layer on top of the HiGHS branch-and-bound (via
scipy), keeping the package's maximization and naming conventions and the
relative-gap convention

    gap = |best_bound - incumbent| / max(1, |incumbent|).
"""
from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, replace as dc_replace

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .lp import LinearProgram, LpError

__all__ = ["MilpProblem", "MilpSolution", "MilpStatus", "solve_milp",
           "fix_binaries", "DEFAULT_REL_GAP"]

log = logging.getLogger(__name__)

DEFAULT_REL_GAP = 5e-5   # 0.005 %
INT_TOL = 1e-6


class MilpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"            # node/time limit; incumbent may exist
    ERROR = "error"


@dataclass(frozen=True)
class MilpProblem:
    lp: LinearProgram
    binary_indices: tuple[int, ...]

    def check(self) -> None:
        self.lp.check()
        for j in self.binary_indices:
            if not 0 <= j < self.lp.n_vars:
                raise LpError(f"binary index {j} out of range")
            if self.lp.lb[j] < -INT_TOL or self.lp.ub[j] > 1 + INT_TOL:
                raise LpError(f"binary variable {j} must have bounds within [0, 1]")


@dataclass(frozen=True)
class MilpSolution:
    status: MilpStatus
    x: np.ndarray | None
    objective: float | None
    best_bound: float | None
    rel_gap: float | None
    node_count: int


def solve_milp(problem: MilpProblem, rel_gap: float = DEFAULT_REL_GAP,
               node_limit: int | None = None,
               time_limit: float | None = None) -> MilpSolution:
    """Branch-and-bound solve to the requested relative gap.

    Deterministic for fixed inputs and options.  On a node or time limit the
    best incumbent and bound found so far are reported with status LIMIT.
    """
    problem.check()
    lp = problem.lp
    rel = np.asarray(lp.relations)
    lo = np.where(rel == ">=", lp.rhs, np.where(rel == "=", lp.rhs, -np.inf))
    hi = np.where(rel == "<=", lp.rhs, np.where(rel == "=", lp.rhs, np.inf))
    integrality = np.zeros(lp.n_vars)
    integrality[list(problem.binary_indices)] = 1
    options: dict = {"mip_rel_gap": rel_gap}
    if node_limit is not None:
        options["node_limit"] = node_limit
    if time_limit is not None:
        options["time_limit"] = time_limit
    constraints = None
    if lp.n_rows:
        constraints = LinearConstraint(lp.matrix(), lo, hi)
    res = milp(c=-lp.c, constraints=constraints, integrality=integrality,
               bounds=Bounds(lp.lb, lp.ub), options=options)

    if res.status == 2:
        return MilpSolution(MilpStatus.INFEASIBLE, None, None, None, None, 0)
    if res.status == 3:
        return MilpSolution(MilpStatus.UNBOUNDED, None, None, None, None, 0)
    if res.x is None:
        status = MilpStatus.LIMIT if res.status == 1 else MilpStatus.ERROR
        bound = -res.mip_dual_bound if getattr(res, "mip_dual_bound", None) is not None else None
        return MilpSolution(status, None, None, bound, None,
                            int(getattr(res, "mip_node_count", 0) or 0))

    obj = float(-res.fun)
    bound = float(-res.mip_dual_bound) if res.mip_dual_bound is not None else obj
    gap = abs(bound - obj) / max(1.0, abs(obj))
    # count the root relaxation as one node
    nodes = max(1, int(res.mip_node_count or 0))
    status = MilpStatus.OPTIMAL if res.status == 0 else MilpStatus.LIMIT
    log.info("milp nodes=%d incumbent=%.10g bound=%.10g gap=%.3e",
             nodes, obj, bound, gap)
    return MilpSolution(status, res.x, obj, bound, gap, nodes)


def fix_binaries(problem: MilpProblem, values) -> LinearProgram:
    """LP with the binary variables pinned to the given integral values."""
    lp = problem.lp
    lb = lp.lb.copy()
    ub = lp.ub.copy()
    for j, v in zip(problem.binary_indices, values):
        if abs(v - round(v)) > INT_TOL:
            raise ValueError(f"non-integral value {v} for binary variable {j}")
        lb[j] = ub[j] = float(round(v))
    return dc_replace(lp, lb=lb, ub=ub)
