"""Dense revised simplex for the small programs produced by the DEA builders.

Problems are maximizations over variables with finite lower bounds::

    maximize    c @ x
    subject to  A[i] @ x  (<=, >=, =)  b[i]
                x >= lb

Equality and ``>=`` rows are handled with the two-phase method. Dantzig pricing
is used until the objective stalls, after which Bland's rule takes over to
guarantee termination on degenerate vertices.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from .exceptions import ValidationError

SENSES = ("<=", ">=", "=")


class LpStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    UNBOUNDED = "Unbounded"
    ITERATION_LIMIT = "IterationLimit"


@dataclass
class LinearProgram:
    """A dense LP in maximization form."""

    objective_coeffs: np.ndarray
    constraint_matrix: np.ndarray
    constraint_senses: list[str]
    rhs: np.ndarray
    variable_lower_bounds: np.ndarray | None = None

    def __post_init__(self) -> None:
        self.objective_coeffs = np.asarray(self.objective_coeffs, dtype=float).ravel()
        self.constraint_matrix = np.atleast_2d(np.asarray(self.constraint_matrix, dtype=float))
        self.rhs = np.asarray(self.rhs, dtype=float).ravel()
        self.constraint_senses = list(self.constraint_senses)
        n = self.objective_coeffs.size
        if self.variable_lower_bounds is None:
            self.variable_lower_bounds = np.zeros(n)
        else:
            self.variable_lower_bounds = np.asarray(self.variable_lower_bounds, dtype=float).ravel()

        m = self.constraint_matrix.shape[0]
        if self.constraint_matrix.shape[1] != n:
            raise ValidationError(
                f"constraint matrix has {self.constraint_matrix.shape[1]} columns, "
                f"objective has {n} coefficients"
            )
        if len(self.constraint_senses) != m or self.rhs.size != m:
            raise ValidationError("senses and rhs must have one entry per constraint row")
        bad = [s for s in self.constraint_senses if s not in SENSES]
        if bad:
            raise ValidationError(f"unknown constraint senses {bad}; expected one of {SENSES}")
        if self.variable_lower_bounds.size != n:
            raise ValidationError("one lower bound per variable is required")
        if not np.all(np.isfinite(self.variable_lower_bounds)):
            raise ValidationError("variable lower bounds must be finite")

    @property
    def shape(self) -> tuple[int, int]:
        return self.constraint_matrix.shape


@dataclass
class LpSolution:
    status: LpStatus
    objective_value: float | None = None
    primal_values: np.ndarray | None = None
    # One multiplier per original row, sign-consistent with the row sense
    # (>= 0 for "<=", <= 0 for ">=" rows of a maximization).
    dual_values: np.ndarray | None = None
    iterations: int = 0

    @property
    def optimal(self) -> bool:
        return self.status is LpStatus.OPTIMAL


@dataclass(frozen=True)
class SimplexOptions:
    max_pivots: int = 10_000
    pivot_tol: float = 1e-9
    feasibility_tol: float = 1e-9
    optimality_tol: float = 1e-9


class _Tableau:
    """Standard-form data plus the pivot bookkeeping shared by both phases."""

    def __init__(self, matrix, rhs, options: SimplexOptions):
        self.M = matrix
        self.b = rhs
        self.opts = options
        self.pivots = 0

    def _factor(self, basis):
        return lu_factor(self.M[:, basis], check_finite=False)

    def run(self, cost, basis, allowed) -> LpStatus:
        m, ncols = self.M.shape
        stall_limit = 2 * (m + ncols)
        stall = 0
        best = -np.inf
        bland = False
        tol = self.opts
        while True:
            lu = self._factor(basis)
            x_b = np.maximum(lu_solve(lu, self.b, check_finite=False), 0.0)
            y = lu_solve(lu, cost[basis], trans=1, check_finite=False)
            reduced = cost - y @ self.M
            reduced[basis] = 0.0
            reduced[~allowed] = 0.0
            candidates = np.flatnonzero(reduced > tol.optimality_tol)
            if candidates.size == 0:
                return LpStatus.OPTIMAL
            if self.pivots >= tol.max_pivots:
                return LpStatus.ITERATION_LIMIT

            if bland:
                q = candidates[0]
            else:
                q = candidates[np.argmax(reduced[candidates])]
            direction = lu_solve(lu, self.M[:, q], check_finite=False)
            eligible = direction > tol.pivot_tol
            if not eligible.any():
                return LpStatus.UNBOUNDED
            ratios = np.full(m, np.inf)
            ratios[eligible] = x_b[eligible] / direction[eligible]
            step = ratios.min()
            ties = np.flatnonzero(ratios <= step + tol.feasibility_tol)
            if bland:
                leave = ties[np.argmin(basis[ties])]
            else:
                leave = ties[np.argmax(direction[ties])]

            objective = cost[basis] @ x_b
            if objective > best + tol.optimality_tol * max(1.0, abs(best) if np.isfinite(best) else 1.0):
                best = objective
                stall = 0
            else:
                stall += 1
                if stall > stall_limit:
                    bland = True

            basis[leave] = q
            self.pivots += 1


def solve(lp: LinearProgram, options: SimplexOptions | None = None) -> LpSolution:
    """Solve ``lp`` with the two-phase revised simplex method."""
    opts = options or SimplexOptions()
    A = lp.constraint_matrix
    m, n = A.shape
    lb = lp.variable_lower_bounds
    c = lp.objective_coeffs

    # Shift to x' = x - lb >= 0 and make every rhs nonnegative.
    b = lp.rhs - A @ lb
    flip = np.where(b < 0, -1.0, 1.0)
    A = A * flip[:, None]
    b = b * flip
    senses = []
    for s, f in zip(lp.constraint_senses, flip):
        if f < 0 and s != "=":
            s = ">=" if s == "<=" else "<="
        senses.append(s)

    n_slack = sum(s != "=" for s in senses)
    n_art = sum(s != "<=" for s in senses)
    ncols = n + n_slack + n_art
    M = np.zeros((m, ncols))
    M[:, :n] = A
    basis = np.empty(m, dtype=int)
    artificial = np.zeros(ncols, dtype=bool)
    k_slack, k_art = n, n + n_slack
    for i, s in enumerate(senses):
        if s == "<=":
            M[i, k_slack] = 1.0
            basis[i] = k_slack
            k_slack += 1
        else:
            if s == ">=":
                M[i, k_slack] = -1.0
                k_slack += 1
            M[i, k_art] = 1.0
            artificial[k_art] = True
            basis[i] = k_art
            k_art += 1

    tab = _Tableau(M, b, opts)

    if n_art:
        cost1 = np.where(artificial, -1.0, 0.0)
        status = tab.run(cost1, basis, np.ones(ncols, dtype=bool))
        if status is LpStatus.ITERATION_LIMIT:
            return LpSolution(status, iterations=tab.pivots)
        x_b = lu_solve(tab._factor(basis), tab.b, check_finite=False)
        infeasibility = x_b[artificial[basis]].sum()
        if infeasibility > opts.feasibility_tol * max(1.0, np.abs(b).max(initial=0.0)):
            return LpSolution(LpStatus.INFEASIBLE, iterations=tab.pivots)

        # Pivot zero-level artificials out of the basis. An artificial whose
        # row has no eligible structural/slack entry belongs to a redundant
        # row; it stays basic at zero because no later pivot can move it.
        for r in range(m):
            if not artificial[basis[r]]:
                continue
            e = np.zeros(m)
            e[r] = 1.0
            row = lu_solve(tab._factor(basis), e, trans=1, check_finite=False) @ tab.M
            nonbasic = ~artificial
            nonbasic[basis] = False
            cand = np.flatnonzero(nonbasic & (np.abs(row) > opts.pivot_tol))
            if cand.size:
                basis[r] = cand[np.argmax(np.abs(row[cand]))]

    cost2 = np.zeros(ncols)
    cost2[:n] = c
    status = tab.run(cost2, basis, ~artificial)
    if status is not LpStatus.OPTIMAL:
        return LpSolution(status, iterations=tab.pivots)

    lu = tab._factor(basis)
    x_b = np.maximum(lu_solve(lu, tab.b, check_finite=False), 0.0)
    full = np.zeros(ncols)
    full[basis] = x_b
    x = full[:n] + lb
    y_std = lu_solve(lu, cost2[basis], trans=1, check_finite=False)
    duals = y_std * flip
    return LpSolution(
        LpStatus.OPTIMAL,
        objective_value=float(c @ x),
        primal_values=x,
        dual_values=duals,
        iterations=tab.pivots,
    )
