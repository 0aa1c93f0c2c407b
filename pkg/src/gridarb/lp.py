"""Sparse linear programs with dual extraction.

Problems are stated in maximization form with triplet-sparse rows, row
relations in {"<=", "=", ">="} and finite or infinite variable bounds.
Solutions carry row duals in the convention

    dual_r = d(optimal objective) / d(rhs_r)

so the dual of a binding "<=" row is nonnegative and the dual of a nodal
power-balance equality is the locational marginal price.  Reduced costs are
``c - A' y``: positive at an upper bound, negative at a lower bound.

The numerical core is the HiGHS dual simplex (via scipy); this module owns
problem form, dual sign conventions and feasibility/duality residuals.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import coo_matrix, csr_matrix

__all__ = [
    "LinearProgram", "LpBuilder", "LpSolution", "LpStatus", "LpError",
    "solve_lp", "extract_duals", "dump_lp",
    "primal_residual", "dual_objective", "complementarity_residual",
]

FEAS_TOL = 1e-7
RELATIONS = ("<=", "=", ">=")


class LpError(ValueError):
    """Malformed linear program (dimensions, relations, NaN data)."""


class LpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"
    ERROR = "error"


@dataclass(frozen=True)
class LinearProgram:
    """max c'x subject to triplet-sparse rows and variable bounds."""
    c: np.ndarray
    rows: np.ndarray              # triplet row indices
    cols: np.ndarray              # triplet column indices
    vals: np.ndarray              # triplet coefficients
    relations: tuple[str, ...]
    rhs: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    col_names: tuple[str, ...] = ()
    row_names: tuple[str, ...] = ()

    @property
    def n_vars(self) -> int:
        return self.c.size

    @property
    def n_rows(self) -> int:
        return self.rhs.size

    def matrix(self) -> csr_matrix:
        return coo_matrix(
            (self.vals, (self.rows, self.cols)),
            shape=(self.n_rows, self.n_vars),
        ).tocsr()

    def check(self) -> None:
        if self.lb.size != self.n_vars or self.ub.size != self.n_vars:
            raise LpError("bound arrays do not match variable count")
        if len(self.relations) != self.n_rows:
            raise LpError("relations do not match row count")
        if self.rows.size != self.cols.size or self.rows.size != self.vals.size:
            raise LpError("triplet arrays differ in length")
        if self.rows.size and (self.rows.max() >= self.n_rows
                               or self.cols.max() >= self.n_vars):
            raise LpError("triplet index out of range")
        for rel in self.relations:
            if rel not in RELATIONS:
                raise LpError(f"unknown relation {rel!r}")
        for arr in (self.c, self.vals, self.rhs):
            if arr.size and np.isnan(arr).any():
                raise LpError("NaN coefficient in problem data")


class LpBuilder:
    """Incremental construction of a LinearProgram with named columns/rows."""

    def __init__(self):
        self._c: list[float] = []
        self._lb: list[float] = []
        self._ub: list[float] = []
        self._col_names: list[str] = []
        self._rows: list[int] = []
        self._cols: list[int] = []
        self._vals: list[float] = []
        self._rel: list[str] = []
        self._rhs: list[float] = []
        self._row_names: list[str] = []
        self.col_index: dict[str, int] = {}
        self.row_index: dict[str, int] = {}

    def add_var(self, name: str, lb: float = 0.0, ub: float = np.inf,
                obj: float = 0.0) -> int:
        if name in self.col_index:
            raise LpError(f"duplicate variable {name!r}")
        j = len(self._c)
        self._c.append(obj)
        self._lb.append(lb)
        self._ub.append(ub)
        self._col_names.append(name)
        self.col_index[name] = j
        return j

    def add_row(self, name: str, coeffs, rel: str, rhs: float) -> int:
        if rel not in RELATIONS:
            raise LpError(f"unknown relation {rel!r}")
        if name in self.row_index:
            raise LpError(f"duplicate row {name!r}")
        r = len(self._rhs)
        for j, v in coeffs:
            if v != 0.0:
                self._rows.append(r)
                self._cols.append(j)
                self._vals.append(v)
        self._rel.append(rel)
        self._rhs.append(rhs)
        self._row_names.append(name)
        self.row_index[name] = r
        return r

    def set_obj(self, j: int, value: float) -> None:
        self._c[j] = value

    @property
    def n_vars(self) -> int:
        return len(self._c)

    def build(self) -> LinearProgram:
        lp = LinearProgram(
            c=np.asarray(self._c, float),
            rows=np.asarray(self._rows, int),
            cols=np.asarray(self._cols, int),
            vals=np.asarray(self._vals, float),
            relations=tuple(self._rel),
            rhs=np.asarray(self._rhs, float),
            lb=np.asarray(self._lb, float),
            ub=np.asarray(self._ub, float),
            col_names=tuple(self._col_names),
            row_names=tuple(self._row_names),
        )
        lp.check()
        return lp


@dataclass(frozen=True)
class LpSolution:
    status: LpStatus
    x: np.ndarray | None
    duals: np.ndarray | None          # per original row, d(obj)/d(rhs)
    reduced_costs: np.ndarray | None  # c - A'y
    objective: float | None
    row_index: dict[str, int] = field(default_factory=dict)


_STATUS_MAP = {
    0: LpStatus.OPTIMAL,
    1: LpStatus.LIMIT,
    2: LpStatus.INFEASIBLE,
    3: LpStatus.UNBOUNDED,
    4: LpStatus.ERROR,
}


def solve_lp(lp: LinearProgram) -> LpSolution:
    """Solve the LP; on LpStatus.OPTIMAL the solution carries primal values,
    row duals and reduced costs satisfying strong duality to solver tolerance.
    """
    lp.check()
    A = lp.matrix()
    rel = np.asarray(lp.relations)
    is_eq = rel == "="
    is_le = rel == "<="
    is_ge = rel == ">="

    A_eq = A[is_eq] if is_eq.any() else None
    b_eq = lp.rhs[is_eq] if is_eq.any() else None
    ineq = is_le | is_ge
    if ineq.any():
        sign = np.where(is_le[ineq], 1.0, -1.0)
        A_ub = A[ineq].multiply(sign[:, None]).tocsr()
        b_ub = lp.rhs[ineq] * sign
    else:
        A_ub = b_ub = None

    res = linprog(c=-lp.c, A_ub=A_ub, b_ub=b_ub, A_eq=A_eq, b_eq=b_eq,
                  bounds=np.column_stack([lp.lb, lp.ub]), method="highs")
    status = _STATUS_MAP.get(res.status, LpStatus.ERROR)
    row_index = {name: i for i, name in enumerate(lp.row_names)}
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, None, None, None, None, row_index)

    duals = np.zeros(lp.n_rows)
    if is_eq.any():
        duals[is_eq] = -res.eqlin.marginals
    if ineq.any():
        # d(max obj)/d(rhs): flip once for the max<->min switch and once more
        # for negated ">=" rows
        duals[ineq] = -res.ineqlin.marginals * sign
    x = res.x
    reduced = lp.c - A.T.dot(duals)
    return LpSolution(LpStatus.OPTIMAL, x, duals, reduced, float(-res.fun),
                      row_index)


def extract_duals(solution: LpSolution, row_ids) -> np.ndarray:
    """Duals for the named rows, in the requested order."""
    if solution.status is not LpStatus.OPTIMAL or solution.duals is None:
        raise ValueError("duals are only available for optimal solutions")
    out = np.empty(len(row_ids))
    for k, rid in enumerate(row_ids):
        if rid not in solution.row_index:
            raise KeyError(f"unknown row {rid!r}")
        out[k] = solution.duals[solution.row_index[rid]]
    return out


# ---------------------------------------------------------------------------
# residuals used by tests and solution audits

def primal_residual(lp: LinearProgram, x: np.ndarray) -> float:
    """Largest violation of rows and bounds at x."""
    r = 0.0
    if lp.n_rows:
        Ax = lp.matrix().dot(x)
        for i, rel in enumerate(lp.relations):
            if rel == "<=":
                r = max(r, Ax[i] - lp.rhs[i])
            elif rel == ">=":
                r = max(r, lp.rhs[i] - Ax[i])
            else:
                r = max(r, abs(Ax[i] - lp.rhs[i]))
    finite_lb = np.isfinite(lp.lb)
    finite_ub = np.isfinite(lp.ub)
    if finite_lb.any():
        r = max(r, float((lp.lb[finite_lb] - x[finite_lb]).max(initial=0.0)))
    if finite_ub.any():
        r = max(r, float((x[finite_ub] - lp.ub[finite_ub]).max(initial=0.0)))
    return float(r)


def dual_objective(lp: LinearProgram, sol: LpSolution) -> float:
    """Value of the dual objective at the solution's duals/reduced costs."""
    y = sol.duals
    r = sol.reduced_costs
    nu_ub = np.maximum(r, 0.0)
    nu_lb = np.maximum(-r, 0.0)
    val = float(lp.rhs @ y) if lp.n_rows else 0.0
    fin_ub = np.isfinite(lp.ub)
    fin_lb = np.isfinite(lp.lb)
    val += float(lp.ub[fin_ub] @ nu_ub[fin_ub])
    val -= float(lp.lb[fin_lb] @ nu_lb[fin_lb])
    return val


def complementarity_residual(lp: LinearProgram, sol: LpSolution) -> float:
    """max |dual| * |slack| over rows and bounds, scaled by (1 + |rhs|)."""
    x, y = sol.x, sol.duals
    res = 0.0
    if lp.n_rows:
        Ax = lp.matrix().dot(x)
        for i, rel in enumerate(lp.relations):
            if rel == "=":
                continue
            slack = lp.rhs[i] - Ax[i] if rel == "<=" else Ax[i] - lp.rhs[i]
            res = max(res, abs(y[i] * slack) / (1.0 + abs(lp.rhs[i])))
    r = sol.reduced_costs
    for j in range(lp.n_vars):
        if r[j] > 0 and np.isfinite(lp.ub[j]):
            res = max(res, abs(r[j] * (lp.ub[j] - x[j])) / (1.0 + abs(lp.ub[j])))
        if r[j] < 0 and np.isfinite(lp.lb[j]):
            res = max(res, abs(r[j] * (x[j] - lp.lb[j])) / (1.0 + abs(lp.lb[j])))
    return float(res)


def dump_lp(lp: LinearProgram) -> str:
    """Plain-text fixed layout of the problem for external cross-checking."""
    lines = [f"LP max vars={lp.n_vars} rows={lp.n_rows}"]
    lines.append("OBJECTIVE")
    for j in range(lp.n_vars):
        if lp.c[j] != 0.0:
            name = lp.col_names[j] if lp.col_names else f"x{j}"
            lines.append(f"  {name} {lp.c[j]:.12g}")
    lines.append("ROWS")
    A = lp.matrix().tocoo()
    by_row: dict[int, list[str]] = {}
    for i, j, v in zip(A.row, A.col, A.data):
        name = lp.col_names[j] if lp.col_names else f"x{j}"
        by_row.setdefault(int(i), []).append(f"{v:+.12g} {name}")
    for i in range(lp.n_rows):
        rname = lp.row_names[i] if lp.row_names else f"r{i}"
        terms = " ".join(by_row.get(i, []))
        lines.append(f"  {rname}: {terms} {lp.relations[i]} {lp.rhs[i]:.12g}")
    lines.append("BOUNDS")
    for j in range(lp.n_vars):
        name = lp.col_names[j] if lp.col_names else f"x{j}"
        lines.append(f"  {lp.lb[j]:.12g} <= {name} <= {lp.ub[j]:.12g}")
    return "\n".join(lines) + "\n"
