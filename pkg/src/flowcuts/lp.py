"""Bounded-variable LP kernel.

Two backends behind one interface:

* ``tableau`` -- a deterministic two-phase primal simplex on a dense numpy
  tableau with bounded variables, Dantzig pricing and a Bland fallback after
  stalling.  Default for desk-scale models.
* ``highs``   -- scipy's HiGHS wrapper, used automatically once the dense
  tableau would outgrow desk scale (and available explicitly as an
  independent reference for cross-checks).

``backend="auto"`` picks by model size, so a given model always resolves to
the same backend and re-solves are bit-identical.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
UNBOUNDED = "unbounded"

LE, GE, EQ = "<=", ">=", "=="

# dense tableau beyond this many cells falls back to HiGHS under "auto"
_AUTO_CELL_LIMIT = 2_500_000

_PIVOT_TOL = 1e-9
_STALL_LIMIT = 120


class NumericalFailure(Exception):
    """Pivoting stalled past the iteration cap or the backend gave up."""


@dataclass
class _Var:
    name: str
    lb: float
    ub: float
    obj: float


@dataclass
class _Con:
    name: str
    coeffs: dict[str, float]
    sense: str
    rhs: float


@dataclass
class LpSolution:
    status: str
    x: dict[str, float] = field(default_factory=dict)
    objective: float = math.nan
    max_violation: float = math.nan

    def __getitem__(self, name: str) -> float:
        return self.x[name]


class LpModel:
    def __init__(self, name: str = "lp", minimize: bool = True):
        self.name = name
        self.minimize = minimize
        self._vars: dict[str, _Var] = {}
        self._cons: list[_Con] = []

    # -- construction ---------------------------------------------------

    def add_var(self, name: str, lb: float = 0.0, ub: float = math.inf,
                obj: float = 0.0) -> str:
        if name in self._vars:
            raise ValueError(f"duplicate variable {name}")
        lb, ub, obj = float(lb), float(ub), float(obj)
        if not (lb <= ub):
            raise ValueError(f"empty bound range for {name}")
        if not math.isfinite(obj):
            raise ValueError(f"non-finite objective coefficient on {name}")
        self._vars[name] = _Var(name, lb, ub, obj)
        return name

    def add_constraint(self, coeffs: dict[str, float], sense: str, rhs,
                       name: str | None = None) -> None:
        if sense not in (LE, GE, EQ):
            raise ValueError(f"bad sense {sense}")
        for v in coeffs:
            if v not in self._vars:
                raise ValueError(f"constraint references unknown variable {v}")
        cname = name if name is not None else f"c{len(self._cons)}"
        self._cons.append(_Con(cname, {k: float(v) for k, v in coeffs.items()},
                               sense, float(rhs)))

    def set_objective(self, coeffs: dict[str, float], minimize: bool = True) -> None:
        self.minimize = minimize
        for v in self._vars.values():
            v.obj = 0.0
        for k, c in coeffs.items():
            self._vars[k].obj = float(c)

    @property
    def var_names(self) -> list[str]:
        return list(self._vars)

    @property
    def num_vars(self) -> int:
        return len(self._vars)

    @property
    def num_constraints(self) -> int:
        return len(self._cons)

    def bounds(self, name: str) -> tuple[float, float]:
        v = self._vars[name]
        return v.lb, v.ub

    # -- diagnostics ------------------------------------------------------

    def violation(self, x: dict[str, float]) -> float:
        """Max infeasibility of a point over rows and bounds."""
        worst = 0.0
        for v in self._vars.values():
            val = x[v.name]
            worst = max(worst, v.lb - val, val - v.ub)
        for c in self._cons:
            lhs = sum(a * x[n] for n, a in c.coeffs.items())
            if c.sense == LE:
                worst = max(worst, lhs - c.rhs)
            elif c.sense == GE:
                worst = max(worst, c.rhs - lhs)
            else:
                worst = max(worst, abs(lhs - c.rhs))
        return worst

    def objective_value(self, x: dict[str, float]) -> float:
        return sum(v.obj * x[v.name] for v in self._vars.values())


def dump(model: LpModel) -> str:
    """Deterministic plain-text rendering for external cross-checks."""
    out = ["min" if model.minimize else "max"]
    terms = [f"{v.obj:+.12g} {v.name}" for v in model._vars.values() if v.obj]
    out.append("  " + (" ".join(terms) if terms else "0"))
    out.append("s.t.")
    for c in model._cons:
        body = " ".join(f"{a:+.12g} {n}" for n, a in sorted(c.coeffs.items()))
        out.append(f"  {c.name}: {body or '0'} {c.sense} {c.rhs:.12g}")
    out.append("bounds")
    for v in model._vars.values():
        lo = "-inf" if v.lb == -math.inf else f"{v.lb:.12g}"
        hi = "inf" if v.ub == math.inf else f"{v.ub:.12g}"
        out.append(f"  {lo} <= {v.name} <= {hi}")
    return "\n".join(out) + "\n"


# ---------------------------------------------------------------------------
# tableau backend
# ---------------------------------------------------------------------------


class _Tableau:
    """Standard-form data: min c.x, A x = b, 0 <= x <= u (u may be inf)."""

    def __init__(self, model: LpModel):
        self.model = model
        names = model.var_names
        self.col_of: dict[str, list[tuple[int, float]]] = {}
        self.offset: dict[str, float] = {}
        cols_ub: list[float] = []

        def new_col(ub: float) -> int:
            cols_ub.append(ub)
            return len(cols_ub) - 1

        for n in names:
            lb, ub = model.bounds(n)
            if lb == -math.inf and ub == math.inf:
                p, q = new_col(math.inf), new_col(math.inf)
                self.col_of[n] = [(p, 1.0), (q, -1.0)]
                self.offset[n] = 0.0
            elif lb == -math.inf:
                c = new_col(math.inf)
                self.col_of[n] = [(c, -1.0)]
                self.offset[n] = ub
            else:
                c = new_col(ub - lb)
                self.col_of[n] = [(c, 1.0)]
                self.offset[n] = lb

        nstruct = len(cols_ub)
        m = model.num_constraints
        A = np.zeros((m, nstruct))
        b = np.zeros(m)
        senses = []
        for i, con in enumerate(model._cons):
            rhs = con.rhs
            for n, a in con.coeffs.items():
                rhs -= a * self.offset[n]
                for j, mult in self.col_of[n]:
                    A[i, j] += a * mult
            b[i] = rhs
            senses.append(con.sense)

        # slacks, then row sign normalization so b >= 0
        slack_cols = np.zeros((m, sum(1 for s in senses if s != EQ)))
        self.slack_of_row = {}
        k = 0
        for i, s in enumerate(senses):
            if s == EQ:
                continue
            slack_cols[i, k] = 1.0 if s == LE else -1.0
            self.slack_of_row[i] = nstruct + k
            cols_ub.append(math.inf)
            k += 1
        A = np.hstack([A, slack_cols])
        flip = b < 0
        A[flip] *= -1.0
        b[flip] = -b[flip]

        self.A = A
        self.b = b
        self.ub = np.array(cols_ub)
        self.nstruct = nstruct
        self.flip = flip

        c = np.zeros(A.shape[1])
        sgn = 1.0 if model.minimize else -1.0
        for n in names:
            co = model._vars[n].obj
            for j, mult in self.col_of[n]:
                c[j] += sgn * co * mult
        self.c = c

    def initial_basis(self):
        """Per row: slack column if usable (coef +1 after flips), else -1."""
        m = self.A.shape[0]
        basis = np.full(m, -1, dtype=int)
        for i in range(m):
            j = self.slack_of_row.get(i)
            if j is not None and self.A[i, j] > 0.5:
                basis[i] = j
        return basis


def _simplex_phase(T, xB, basis, status, ub, c, cap, noenter, opt_tol):
    """Run bounded-variable simplex to optimality of cost vector ``c``.

    Mutates T, xB, basis, status in place.  Returns "optimal" or "unbounded".
    Raises NumericalFailure past ``cap`` iterations.
    """
    m, n = T.shape
    bland = False
    stall = 0
    iters = 0
    while True:
        iters += 1
        if iters > cap:
            raise NumericalFailure(
                f"simplex iteration cap {cap} exceeded ({m} rows, {n} cols)")
        cB = c[basis]
        d = c - cB @ T
        at_lo = (status == 0) & ~noenter
        at_up = (status == 1) & ~noenter
        elig_lo = at_lo & (d < -opt_tol)
        elig_up = at_up & (d > opt_tol)
        elig = elig_lo | elig_up
        if not elig.any():
            return OPTIMAL
        idx = np.flatnonzero(elig)
        if bland:
            j = int(idx[0])
        else:
            j = int(idx[np.argmax(np.abs(d[idx]))])
        direction = 1.0 if status[j] == 0 else -1.0
        alpha = T[:, j]
        delta = direction * alpha

        t_best = ub[j]  # bound-flip step; may be inf
        r_best = -1
        pos = delta > _PIVOT_TOL
        neg = delta < -_PIVOT_TOL
        if pos.any():
            ratios = np.full(m, math.inf)
            ratios[pos] = np.maximum(xB[pos], 0.0) / delta[pos]
            r = int(np.argmin(ratios))
            if ratios[r] < t_best - 1e-15:
                t_best, r_best = ratios[r], r
        if neg.any():
            ratios = np.full(m, math.inf)
            room = np.maximum(ub[basis[neg]] - xB[neg], 0.0)
            ratios[neg] = room / (-delta[neg])
            r = int(np.argmin(ratios))
            if ratios[r] < t_best - 1e-15:
                t_best, r_best = ratios[r], r

        if t_best == math.inf:
            return UNBOUNDED

        stall = stall + 1 if t_best <= 1e-11 else 0
        if stall > _STALL_LIMIT:
            bland = True

        if r_best < 0:
            # entering variable flips to its other bound
            xB -= t_best * delta
            status[j] = 1 - status[j]
            continue

        leave = basis[r_best]
        leave_dir = delta[r_best]
        xB -= t_best * delta
        enter_val = t_best if direction > 0 else ub[j] - t_best
        xB[r_best] = enter_val
        piv = T[r_best, j]
        T[r_best] = T[r_best] / piv
        colj = T[:, j].copy()
        colj[r_best] = 0.0
        T -= np.outer(colj, T[r_best])
        basis[r_best] = j
        status[j] = 2
        status[leave] = 0 if leave_dir > 0 else 1


def _solve_tableau(model: LpModel, feas_tol: float, opt_tol: float) -> LpSolution:
    std = _Tableau(model)
    A, b, colub, c = std.A, std.b, std.ub, std.c
    m, n = A.shape

    basis = std.initial_basis()
    need_art = np.flatnonzero(basis < 0)
    n_art = len(need_art)
    T = np.hstack([A, np.zeros((m, n_art))])
    colub = np.concatenate([colub, np.full(n_art, math.inf)])
    art_idx = []
    for k, i in enumerate(need_art):
        T[i, n + k] = 1.0
        basis[i] = n + k
        art_idx.append(n + k)
    art_idx = np.array(art_idx, dtype=int)

    status = np.zeros(T.shape[1], dtype=np.int8)
    status[basis] = 2
    xB = b.copy()

    is_art = np.zeros(T.shape[1], dtype=bool)
    is_art[art_idx] = True
    cap = 50 * (m + T.shape[1])

    # phase 1: drive artificial variables to zero
    if n_art:
        c1 = np.zeros(T.shape[1])
        c1[art_idx] = 1.0
        out1 = _simplex_phase(T, xB, basis, status, colub, c1, cap,
                              np.zeros_like(is_art), opt_tol)
        if out1 == UNBOUNDED:
            raise NumericalFailure("phase-1 cost reported unbounded")
        art_val = sum(xB[i] for i in range(m) if is_art[basis[i]])
        scale = max(1.0, float(np.abs(b).max()) if m else 1.0)
        if art_val > 10 * feas_tol * scale:
            return LpSolution(INFEASIBLE)
        colub[art_idx] = 0.0

    c_full = np.concatenate([c, np.zeros(n_art)])
    out = _simplex_phase(T, xB, basis, status, colub, c_full, cap, is_art, opt_tol)
    if out == UNBOUNDED:
        return LpSolution(UNBOUNDED)

    vals = np.where(status == 1, colub, 0.0)
    vals[basis] = xB
    x = {}
    for name in model.var_names:
        v = std.offset[name]
        for j, mult in std.col_of[name]:
            v += mult * float(vals[j])
        x[name] = v
    obj = model.objective_value(x)
    return LpSolution(OPTIMAL, x, obj, model.violation(x))


# ---------------------------------------------------------------------------
# HiGHS backend
# ---------------------------------------------------------------------------


def _solve_highs(model: LpModel, feas_tol: float, opt_tol: float) -> LpSolution:
    from scipy import sparse
    from scipy.optimize import linprog

    names = model.var_names
    pos = {n: i for i, n in enumerate(names)}
    sgn = 1.0 if model.minimize else -1.0
    c = np.array([sgn * model._vars[n].obj for n in names])
    bounds = [model.bounds(n) for n in names]

    ub_rows, ub_rhs, eq_rows, eq_rhs = [], [], [], []
    for con in model._cons:
        cols = [pos[n] for n in con.coeffs]
        vals = list(con.coeffs.values())
        if con.sense == EQ:
            eq_rows.append((cols, vals))
            eq_rhs.append(con.rhs)
        elif con.sense == LE:
            ub_rows.append((cols, vals))
            ub_rhs.append(con.rhs)
        else:
            ub_rows.append((cols, [-v for v in vals]))
            ub_rhs.append(-con.rhs)

    def mat(rows):
        data, ri, ci = [], [], []
        for i, (cols, vals) in enumerate(rows):
            for j, v in zip(cols, vals):
                ri.append(i)
                ci.append(j)
                data.append(v)
        return sparse.csr_matrix((data, (ri, ci)), shape=(len(rows), len(names)))

    kw = {}
    if ub_rows:
        kw["A_ub"], kw["b_ub"] = mat(ub_rows), np.array(ub_rhs)
    if eq_rows:
        kw["A_eq"], kw["b_eq"] = mat(eq_rows), np.array(eq_rhs)
    res = linprog(c, bounds=bounds, method="highs",
                  options={"presolve": True}, **kw)
    if res.status in (2, 3):
        # presolve reports "infeasible or unbounded" as infeasible; settle it
        # with a zero-objective feasibility solve
        feas = linprog(np.zeros_like(c), bounds=bounds, method="highs",
                       options={"presolve": True}, **kw)
        if feas.status == 0:
            return LpSolution(UNBOUNDED)
        if feas.status == 2:
            return LpSolution(INFEASIBLE)
        raise NumericalFailure(f"HiGHS feasibility probe status {feas.status}")
    if res.status != 0:
        raise NumericalFailure(f"HiGHS status {res.status}: {res.message}")
    x = {n: float(res.x[pos[n]]) for n in names}
    return LpSolution(OPTIMAL, x, model.objective_value(x), model.violation(x))


def _auto_backend(model: LpModel) -> str:
    rows = model.num_constraints
    cols = model.num_vars + rows  # slacks
    return "tableau" if (rows + 1) * (cols + 1) <= _AUTO_CELL_LIMIT else "highs"


def solve(model: LpModel, feas_tol: float = 1e-7, opt_tol: float = 1e-7,
          backend: str = "auto") -> LpSolution:
    """Solve; returns status optimal/infeasible/unbounded.

    Raises :class:`NumericalFailure` instead of ever returning a silently
    wrong answer.
    """
    if backend == "auto":
        backend = _auto_backend(model)
    if backend == "tableau":
        return _solve_tableau(model, feas_tol, opt_tol)
    if backend == "highs":
        return _solve_highs(model, feas_tol, opt_tol)
    raise ValueError(f"unknown backend {backend}")
