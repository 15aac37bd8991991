"""Minimal linear/integer model builder with two interchangeable backends.

The bundled backend is a two-phase dense simplex plus depth-first branch
and bound, good for desk-scale models; the scipy backend delegates to
HiGHS (``linprog``/``milp``). Duals follow the shadow-price convention
``d(objective)/d(rhs)`` in the model's own sense, so for a maximization
LP the dual of a binding ``<=`` row is non-negative.
"""

from __future__ import annotations

import os
import time
from dataclasses import dataclass

import numpy as np

EPS = 1e-9
INT_TOL = 1e-6


@dataclass
class _Var:
    name: str
    lb: float
    ub: float | None
    integer: bool
    obj: float


@dataclass
class _Constr:
    coeffs: dict[int, float]
    sense: str
    rhs: float


@dataclass
class Solution:
    status: str  # optimal | feasible | infeasible | unbounded
    objective: float
    x: np.ndarray
    duals: np.ndarray | None = None

    @property
    def ok(self) -> bool:
        return self.status in ("optimal", "feasible")


class LinearModel:
    def __init__(self, maximize: bool = True):
        self.maximize = maximize
        self.vars: list[_Var] = []
        self.constrs: list[_Constr] = []

    def add_var(self, name: str = "", lb: float = 0.0, ub: float | None = 1.0,
                obj: float = 0.0, integer: bool = False) -> int:
        if lb != 0.0:
            raise ValueError("only lb=0 variables are supported")
        self.vars.append(_Var(name or f"v{len(self.vars)}", lb, ub, integer, obj))
        return len(self.vars) - 1

    def add_binary(self, name: str = "", obj: float = 0.0) -> int:
        return self.add_var(name, 0.0, 1.0, obj, integer=True)

    def add_constr(self, coeffs, sense: str, rhs: float) -> int:
        if sense not in ("<=", ">=", "=="):
            raise ValueError(f"bad sense {sense!r}")
        if not isinstance(coeffs, dict):
            coeffs = dict(coeffs)
        coeffs = {int(k): float(v) for k, v in coeffs.items() if v != 0.0}
        self.constrs.append(_Constr(coeffs, sense, float(rhs)))
        return len(self.constrs) - 1

    @property
    def has_integers(self) -> bool:
        return any(v.integer for v in self.vars)

    def objective_value(self, x) -> float:
        return float(sum(v.obj * x[i] for i, v in enumerate(self.vars)))

    def check_feasible(self, x, tol: float = 1e-6) -> bool:
        for con in self.constrs:
            lhs = sum(c * x[i] for i, c in con.coeffs.items())
            if con.sense == "<=" and lhs > con.rhs + tol:
                return False
            if con.sense == ">=" and lhs < con.rhs - tol:
                return False
            if con.sense == "==" and abs(lhs - con.rhs) > tol:
                return False
        for i, v in enumerate(self.vars):
            if x[i] < v.lb - tol or (v.ub is not None and x[i] > v.ub + tol):
                return False
            if v.integer and abs(x[i] - round(x[i])) > tol:
                return False
        return True

    def export_lp(self) -> str:
        """LP-format text dump for debugging with external solvers."""
        lines = ["Maximize" if self.maximize else "Minimize"]
        terms = " + ".join(f"{v.obj} {v.name}" for v in self.vars if v.obj) or "0"
        lines.append(f" obj: {terms}")
        lines.append("Subject To")
        op = {"<=": "<=", ">=": ">=", "==": "="}
        for r, con in enumerate(self.constrs):
            body = " + ".join(f"{c} {self.vars[i].name}" for i, c in sorted(con.coeffs.items()))
            lines.append(f" c{r}: {body or '0'} {op[con.sense]} {con.rhs}")
        lines.append("Bounds")
        for v in self.vars:
            ub = "+inf" if v.ub is None else v.ub
            lines.append(f" 0 <= {v.name} <= {ub}")
        ints = [v.name for v in self.vars if v.integer]
        if ints:
            lines.append("Binaries" if all(self.vars[i].ub == 1.0 for i, v in enumerate(self.vars) if v.integer) else "Generals")
            lines.append(" " + " ".join(ints))
        lines.append("End")
        return "\n".join(lines)


def solve_model(model: LinearModel, backend: str = "auto", time_limit: float | None = None) -> Solution:
    backend = backend or "auto"
    if backend == "auto":
        backend = os.environ.get("RIDEPOOL_SOLVER", "scipy")
    if backend == "scipy":
        return _solve_scipy(model, time_limit)
    if backend == "bundled":
        return _solve_bundled(model, time_limit)
    raise ValueError(f"unknown solver backend {backend!r}")


# ---------------------------------------------------------------- scipy


def _solve_scipy(model: LinearModel, time_limit):
    from scipy import optimize, sparse

    n = len(model.vars)
    if n == 0:
        return Solution("optimal", 0.0, np.zeros(0), np.zeros(len(model.constrs)))
    sign = -1.0 if model.maximize else 1.0
    c = sign * np.array([v.obj for v in model.vars])
    lb = np.array([v.lb for v in model.vars])
    ub = np.array([np.inf if v.ub is None else v.ub for v in model.vars])

    rows, cols, data, clo, chi = [], [], [], [], []
    for r, con in enumerate(model.constrs):
        for i, coef in con.coeffs.items():
            rows.append(r)
            cols.append(i)
            data.append(coef)
        if con.sense == "<=":
            clo.append(-np.inf)
            chi.append(con.rhs)
        elif con.sense == ">=":
            clo.append(con.rhs)
            chi.append(np.inf)
        else:
            clo.append(con.rhs)
            chi.append(con.rhs)
    mat = sparse.csr_matrix((data, (rows, cols)), shape=(len(model.constrs), n))

    if model.has_integers:
        integrality = np.array([1 if v.integer else 0 for v in model.vars])
        options = {}
        if time_limit is not None:
            options["time_limit"] = max(float(time_limit), 0.05)
        constraints = optimize.LinearConstraint(mat, np.array(clo), np.array(chi)) if model.constrs else ()
        res = optimize.milp(
            c,
            integrality=integrality,
            bounds=optimize.Bounds(lb, ub),
            constraints=constraints,
            options=options,
        )
        if res.status == 2:
            return Solution("infeasible", 0.0, np.zeros(n))
        if res.status == 3:
            return Solution("unbounded", 0.0, np.zeros(n))
        if res.x is None:
            if res.status == 1 and model.check_feasible(np.zeros(n)):
                return Solution("feasible", model.objective_value(np.zeros(n)), np.zeros(n))
            return Solution("infeasible", 0.0, np.zeros(n))
        x = np.array(res.x)
        for i, v in enumerate(model.vars):
            if v.integer:
                x[i] = round(x[i])
        status = "optimal" if res.status == 0 else "feasible"
        return Solution(status, model.objective_value(x), x)

    a_ub_rows, b_ub, a_eq_rows, b_eq = [], [], [], []
    row_map = []  # (kind, index in linprog arrays, flip)
    for con in model.constrs:
        vec = np.zeros(n)
        for i, coef in con.coeffs.items():
            vec[i] = coef
        if con.sense == "<=":
            row_map.append(("ub", len(a_ub_rows), 1.0))
            a_ub_rows.append(vec)
            b_ub.append(con.rhs)
        elif con.sense == ">=":
            row_map.append(("ub", len(a_ub_rows), -1.0))
            a_ub_rows.append(-vec)
            b_ub.append(-con.rhs)
        else:
            row_map.append(("eq", len(a_eq_rows), 1.0))
            a_eq_rows.append(vec)
            b_eq.append(con.rhs)
    res = optimize.linprog(
        c,
        A_ub=np.array(a_ub_rows) if a_ub_rows else None,
        b_ub=np.array(b_ub) if b_ub else None,
        A_eq=np.array(a_eq_rows) if a_eq_rows else None,
        b_eq=np.array(b_eq) if b_eq else None,
        bounds=list(zip(lb, [None if np.isinf(u) else u for u in ub])),
        method="highs-ds",
    )
    if res.status == 2:
        return Solution("infeasible", 0.0, np.zeros(n))
    if res.status == 3:
        return Solution("unbounded", 0.0, np.zeros(n))
    if not res.success:
        return Solution("infeasible", 0.0, np.zeros(n))
    x = np.array(res.x)
    duals = np.zeros(len(model.constrs))
    for r, (kind, idx, flip) in enumerate(row_map):
        marg = res.ineqlin.marginals[idx] if kind == "ub" else res.eqlin.marginals[idx]
        # linprog minimizes; convert to d(obj)/d(rhs) in the model's sense
        duals[r] = sign * flip * marg
    return Solution("optimal", model.objective_value(x), x, duals)


# ---------------------------------------------------------------- bundled


def _simplex(c, rows, senses, rhs):
    """Two-phase tableau simplex for min c'x, x >= 0.

    rows is a dense matrix; senses in {<=, >=, ==}. Returns (status, x,
    duals) where duals are d(obj)/d(rhs) per original row orientation.
    Bland's rule keeps it cycle-free.
    """
    m, n = rows.shape if rows.size else (0, len(c))
    if m == 0:
        x = np.zeros(n)
        # unconstrained: minimize over x >= 0 -> any negative cost is unbounded
        if np.any(np.asarray(c) < -EPS):
            return "unbounded", x, np.zeros(0)
        return "optimal", x, np.zeros(0)

    a = rows.astype(float).copy()
    b = np.asarray(rhs, dtype=float).copy()
    sense = list(senses)
    flip = np.ones(m)
    for r in range(m):
        if b[r] < 0:
            a[r] *= -1
            b[r] *= -1
            flip[r] = -1.0
            sense[r] = {"<=": ">=", ">=": "<=", "==": "=="}[sense[r]]

    slack_col = {}
    art_col = {}
    cols = [a]
    ncol = n
    for r in range(m):
        if sense[r] == "<=":
            vec = np.zeros((m, 1))
            vec[r, 0] = 1.0
            cols.append(vec)
            slack_col[r] = ncol
            ncol += 1
        elif sense[r] == ">=":
            vec = np.zeros((m, 1))
            vec[r, 0] = -1.0
            cols.append(vec)
            slack_col[r] = ncol
            ncol += 1
    for r in range(m):
        if sense[r] != "<=":
            vec = np.zeros((m, 1))
            vec[r, 0] = 1.0
            cols.append(vec)
            art_col[r] = ncol
            ncol += 1
    tab = np.hstack(cols)
    ntot = tab.shape[1]

    basis = [0] * m
    for r in range(m):
        basis[r] = slack_col[r] if sense[r] == "<=" else art_col[r]

    def pivot(tableau, basis, row, col):
        tableau[row] /= tableau[row, col]
        for rr in range(tableau.shape[0]):
            if rr != row and abs(tableau[rr, col]) > EPS:
                tableau[rr] -= tableau[rr, col] * tableau[row]
        basis[row] = col

    def run(tableau, basis, cost, banned):
        while True:
            cb = cost[basis]
            red = cost - cb @ tableau[:, :ntot]
            enter = -1
            for j in range(ntot):
                if j in banned or any(j == bb for bb in basis):
                    continue
                if red[j] < -EPS:
                    enter = j
                    break  # Bland's rule: smallest index
            if enter < 0:
                return "optimal"
            ratios = []
            for r in range(m):
                if tableau[r, enter] > EPS:
                    ratios.append((tableau[r, ntot] / tableau[r, enter], basis[r], r))
            if not ratios:
                return "unbounded"
            ratios.sort(key=lambda t: (t[0], t[1]))
            _, _, leave_row = ratios[0]
            pivot(tableau, basis, leave_row, enter)

    full = np.hstack([tab, b.reshape(-1, 1)])
    # phase 1: minimize the artificials out of the basis
    if art_col:
        cost1 = np.zeros(ntot)
        for col in art_col.values():
            cost1[col] = 1.0
        run(full, basis, cost1, banned=set())
        obj1 = cost1[basis] @ full[:, ntot]
        if obj1 > 1e-7:
            return "infeasible", np.zeros(n), np.zeros(m)
        # drive remaining artificials out of the basis where possible
        for r in range(m):
            if basis[r] in art_col.values():
                for j in range(ntot):
                    if j in art_col.values():
                        continue
                    if abs(full[r, j]) > EPS:
                        pivot(full, basis, r, j)
                        break

    cost2 = np.zeros(ntot)
    cost2[:n] = c
    status = run(full, basis, cost2, banned=set(art_col.values()))
    if status == "unbounded":
        return "unbounded", np.zeros(n), np.zeros(m)
    x = np.zeros(ntot)
    for r in range(m):
        x[basis[r]] = full[r, ntot]
    # duals from the basis: solve B^T y = c_B on the original column data
    bmat = tab[:, basis]
    cb = cost2[basis]
    try:
        y = np.linalg.solve(bmat.T, cb)
    except np.linalg.LinAlgError:
        y = np.linalg.lstsq(bmat.T, cb, rcond=None)[0]
    duals = y * flip
    return "optimal", x[:n], duals


def _solve_lp_bundled(model: LinearModel):
    n = len(model.vars)
    if n == 0:
        return Solution("optimal", 0.0, np.zeros(0), np.zeros(len(model.constrs)))
    sign = -1.0 if model.maximize else 1.0
    c = sign * np.array([v.obj for v in model.vars])
    rows, senses, rhs = [], [], []
    for con in model.constrs:
        vec = np.zeros(n)
        for i, coef in con.coeffs.items():
            vec[i] = coef
        rows.append(vec)
        senses.append(con.sense)
        rhs.append(con.rhs)
    nrows_model = len(rows)
    for i, v in enumerate(model.vars):
        if v.ub is not None:
            vec = np.zeros(n)
            vec[i] = 1.0
            rows.append(vec)
            senses.append("<=")
            rhs.append(v.ub)
    mat = np.array(rows) if rows else np.zeros((0, n))
    status, x, duals = _simplex(c, mat, senses, rhs)
    if status != "optimal":
        return Solution(status, 0.0, np.zeros(n))
    model_duals = sign * duals[:nrows_model]
    return Solution("optimal", model.objective_value(x), x, model_duals)


def _solve_bundled(model: LinearModel, time_limit):
    if not model.has_integers:
        return _solve_lp_bundled(model)

    deadline = None if time_limit is None else time.perf_counter() + time_limit
    int_vars = [i for i, v in enumerate(model.vars) if v.integer]
    base_ub = {i: model.vars[i].ub for i in int_vars}
    best_obj = -np.inf if model.maximize else np.inf
    best_x = None
    hit_limit = False
    better = (lambda a, b: a > b + EPS) if model.maximize else (lambda a, b: a < b - EPS)

    relax = LinearModel(maximize=model.maximize)
    for v in model.vars:
        relax.add_var(v.name, v.lb, v.ub, v.obj, integer=False)
    for con in model.constrs:
        relax.add_constr(dict(con.coeffs), con.sense, con.rhs)

    extra_rows: list[int] = []

    def solve_relax(fixes):
        # fixes: var -> (lb, ub) applied through temporary rows
        for i, (lo, hi) in fixes.items():
            extra_rows.append(relax.add_constr({i: 1.0}, ">=", lo))
            extra_rows.append(relax.add_constr({i: 1.0}, "<=", hi))
        sol = _solve_lp_bundled(relax)
        for _ in range(2 * len(fixes)):
            relax.constrs.pop()
        extra_rows.clear()
        return sol

    stack = [dict()]
    while stack:
        if deadline is not None and time.perf_counter() > deadline:
            hit_limit = True
            break
        fixes = stack.pop()
        sol = solve_relax(fixes)
        if sol.status != "optimal":
            continue
        if best_x is not None and not better(sol.objective, best_obj):
            continue
        frac_var = -1
        frac_dist = -1.0
        for i in int_vars:
            f = abs(sol.x[i] - round(sol.x[i]))
            if f > INT_TOL and f > frac_dist:
                frac_dist = f
                frac_var = i
        if frac_var < 0:
            x = sol.x.copy()
            for i in int_vars:
                x[i] = round(x[i])
            obj = model.objective_value(x)
            if best_x is None or better(obj, best_obj):
                best_obj = obj
                best_x = x
            continue
        val = sol.x[frac_var]
        lo_cur, hi_cur = fixes.get(frac_var, (0.0, base_ub[frac_var] if base_ub[frac_var] is not None else np.inf))
        down = dict(fixes)
        down[frac_var] = (lo_cur, float(np.floor(val)))
        up = dict(fixes)
        up[frac_var] = (float(np.ceil(val)), hi_cur)
        stack.append(down)
        stack.append(up)

    if best_x is None:
        return Solution("feasible" if hit_limit else "infeasible", 0.0, np.zeros(len(model.vars)))
    status = "feasible" if hit_limit else "optimal"
    return Solution(status, best_obj, best_x)
