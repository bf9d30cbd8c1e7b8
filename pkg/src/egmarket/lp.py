"""Dense two-phase simplex kernel.

Solves desk-scale linear programs with explicit row duals and, on
infeasibility, a Farkas row-multiplier certificate. Pivoting uses Bland's
rule throughout because the tie-splitting systems fed to this kernel are
highly degenerate by construction.

Conventions
-----------
* ``status`` is one of Optimal | Infeasible | Unbounded.
* ``dual[i]`` is the sensitivity of the optimal objective to ``b[i]``
  (same convention for max and min problems). For a max problem this gives
  the textbook signs: >= 0 on "<=" rows, <= 0 on ">=" rows, free on "=".
* The infeasibility certificate ``y`` satisfies the sign conditions above
  and proves emptiness: combining the rows with weights y yields a linear
  form whose minimum over the variable box still exceeds y . b
  (see :func:`farkas_gap`).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, InvariantViolation, NumericalBreakdown
from .tolerances import TOL_LP

LE, EQ, GE = "<=", "=", ">="

_PIV_TOL = 1e-11       # smallest pivot element accepted outright
_BREAKDOWN_TOL = 1e-12  # below this no column is admissible


@dataclass
class LpProblem:
    """max/min c.x subject to row constraints and variable bounds.

    lower defaults to 0 for every variable; upper entries may be +inf.
    """

    c: np.ndarray
    A: np.ndarray
    b: np.ndarray
    senses: tuple[str, ...]
    lower: np.ndarray | None = None
    upper: np.ndarray | None = None
    sense: str = "max"

    def __post_init__(self):
        self.c = np.atleast_1d(np.asarray(self.c, dtype=float))
        self.A = np.asarray(self.A, dtype=float)
        self.b = np.atleast_1d(np.asarray(self.b, dtype=float))
        nvar = self.c.shape[0]
        if self.A.size == 0:
            self.A = self.A.reshape(self.b.shape[0], nvar)
        if self.A.ndim != 2 or self.A.shape != (self.b.shape[0], nvar):
            raise DimensionMismatch(
                f"A must be ({self.b.shape[0]}, {nvar}), got {self.A.shape}"
            )
        self.senses = tuple(self.senses)
        if len(self.senses) != self.b.shape[0]:
            raise DimensionMismatch("one sense per constraint row required")
        for s in self.senses:
            if s not in (LE, EQ, GE):
                raise InvariantViolation(f"unknown row sense {s!r}")
        if self.sense not in ("max", "min"):
            raise InvariantViolation(f"sense must be 'max' or 'min', got {self.sense!r}")
        self.lower = (np.zeros(nvar) if self.lower is None
                      else np.asarray(self.lower, dtype=float).copy())
        self.upper = (np.full(nvar, np.inf) if self.upper is None
                      else np.asarray(self.upper, dtype=float).copy())
        if self.lower.shape != (nvar,) or self.upper.shape != (nvar,):
            raise DimensionMismatch("lower/upper must have one entry per variable")
        if not np.isfinite(self.lower).all():
            raise InvariantViolation("lower bounds must be finite")
        if (self.upper < self.lower).any():
            k = int(np.argmax(self.lower - self.upper))
            raise InvariantViolation(f"variable {k} has upper < lower bound")
        if not (np.isfinite(self.c).all() and np.isfinite(self.A).all()
                and np.isfinite(self.b).all()):
            raise InvariantViolation("c, A, b must be finite")

    @property
    def nvar(self) -> int:
        return self.c.shape[0]

    @property
    def nrow(self) -> int:
        return self.b.shape[0]


@dataclass
class LpSolution:
    status: str
    x: np.ndarray | None = None
    dual: np.ndarray | None = None
    objective: float | None = None
    certificate: np.ndarray | None = None
    gap: float | None = None  # |primal - dual disagreement| of the internal solve


def _pivot(T: np.ndarray, r: int, j: int) -> None:
    pivrow = T[r] / T[r, j]
    T -= np.outer(T[:, j], pivrow)
    T[r] = pivrow
    rhs = T[:-1, -1]
    rhs[(rhs < 0) & (rhs > -1e-11)] = 0.0


def _price_out(T: np.ndarray, basis: list[int], c_ext: np.ndarray) -> None:
    T[-1, :-1] = c_ext
    T[-1, -1] = 0.0
    for r, col in enumerate(basis):
        if c_ext[col] != 0.0:
            T[-1] -= c_ext[col] * T[r]


def _run_simplex(T: np.ndarray, basis: list[int], enterable: np.ndarray,
                 enter_tol: float) -> str:
    """Iterate Bland pivots until optimal, unbounded, or breakdown."""
    nrows = T.shape[0] - 1
    ncols = T.shape[1] - 1
    max_iter = 2000 + 60 * (nrows + ncols)
    for _ in range(max_iter):
        reduced = T[-1, :ncols]
        cand = np.flatnonzero(enterable & (reduced > enter_tol))
        if cand.size == 0:
            return "optimal"
        pivoted = False
        saw_tiny_only = False
        for j in cand:  # Bland: ascending column index
            col = T[:nrows, j]
            pos = col > _PIV_TOL
            if not pos.any():
                if (col > _BREAKDOWN_TOL).any():
                    saw_tiny_only = True
                    continue
                return "unbounded"
            rows = np.flatnonzero(pos)
            ratios = T[rows, -1] / col[rows]
            rmin = ratios.min()
            tied = rows[ratios <= rmin + 1e-12 * (1.0 + abs(rmin))]
            r = int(tied[np.argmin([basis[t] for t in tied])])
            _pivot(T, r, j)
            basis[r] = int(j)
            pivoted = True
            break
        if not pivoted:
            if saw_tiny_only:
                raise NumericalBreakdown(
                    "all candidate pivots below 1e-12 with no admissible column"
                )
            return "optimal"
    raise NumericalBreakdown("simplex iteration guard exceeded (cycling?)")


class _StandardForm:
    """User problem rewritten as max c.z, A z (sense) b, z >= 0, b >= 0."""

    def __init__(self, p: LpProblem):
        self.p = p
        nvar = p.nvar
        sign = 1.0 if p.sense == "max" else -1.0
        self.obj_sign = sign

        rows = [p.A.copy()]
        rhs = [p.b - p.A @ p.lower]
        senses = list(p.senses)
        self.n_user_rows = p.nrow
        finite_ub = np.flatnonzero(np.isfinite(p.upper))
        for k in finite_ub:
            e = np.zeros(nvar)
            e[k] = 1.0
            rows.append(e[None, :])
            rhs.append(np.array([p.upper[k] - p.lower[k]]))
            senses.append(LE)
        A = np.vstack(rows) if rows else np.zeros((0, nvar))
        b = np.concatenate(rhs) if rhs else np.zeros(0)

        self.flip = np.ones(b.shape[0])
        neg = b < 0
        self.flip[neg] = -1.0
        A[neg] *= -1.0
        b[neg] *= -1.0
        swapped = {LE: GE, GE: LE, EQ: EQ}
        senses = [swapped[s] if neg[i] else s for i, s in enumerate(senses)]

        nrow = b.shape[0]
        n_slack = sum(1 for s in senses if s == LE)
        n_surp = sum(1 for s in senses if s == GE)
        n_art = sum(1 for s in senses if s in (GE, EQ))
        ncols = nvar + n_slack + n_surp + n_art
        M = np.zeros((nrow, ncols))
        M[:, :nvar] = A
        slack_at = nvar
        surp_at = nvar + n_slack
        art_at = nvar + n_slack + n_surp
        self.idcol = np.zeros(nrow, dtype=int)
        self.art_cols: list[int] = []
        basis: list[int] = []
        si = ti = ai = 0
        for i, s in enumerate(senses):
            if s == LE:
                M[i, slack_at + si] = 1.0
                self.idcol[i] = slack_at + si
                basis.append(slack_at + si)
                si += 1
            else:
                if s == GE:
                    M[i, surp_at + ti] = -1.0
                    ti += 1
                M[i, art_at + ai] = 1.0
                self.idcol[i] = art_at + ai
                self.art_cols.append(art_at + ai)
                basis.append(art_at + ai)
                ai += 1

        self.T = np.zeros((nrow + 1, ncols + 1))
        self.T[:nrow, :ncols] = M
        self.T[:nrow, -1] = b
        self.basis = basis
        self.nvar = nvar
        self.ncols = ncols
        self.senses = senses
        self.b_int = b
        self.row_ids = list(range(nrow))  # surviving tableau row -> internal row
        self.c_int = sign * p.c

    def enterable_mask(self) -> np.ndarray:
        mask = np.ones(self.ncols, dtype=bool)
        mask[self.art_cols] = False
        return mask

    def phase1(self) -> float:
        c1 = np.zeros(self.ncols)
        c1[self.art_cols] = -1.0
        _price_out(self.T, self.basis, c1)
        status = _run_simplex(self.T, self.basis, self.enterable_mask(),
                              enter_tol=TOL_LP * 2.0)
        if status == "unbounded":  # cannot happen: phase-1 objective <= 0
            raise NumericalBreakdown("phase-1 reported unbounded")
        self._c1 = c1
        return -self.T[-1, -1]

    def row_duals(self, c_ext: np.ndarray) -> np.ndarray:
        """Multiplier of every internal row from its identity column."""
        nrow_alive = self.T.shape[0] - 1
        y = np.zeros(self.b_int.shape[0])
        reduced = self.T[-1, :-1]
        for pos in range(nrow_alive):
            internal = self.row_ids[pos]
            col = self.idcol[internal]
            y[internal] = c_ext[col] - reduced[col]
        return y

    def drop_basic_artificials(self) -> None:
        """Pivot artificials out of the basis; delete redundant rows."""
        art = set(self.art_cols)
        mask = self.enterable_mask()
        pos = 0
        while pos < self.T.shape[0] - 1:
            if self.basis[pos] in art:
                row = self.T[pos, :self.ncols]
                cands = np.flatnonzero(mask & (np.abs(row) > 1e-9))
                if cands.size:
                    _pivot(self.T, pos, int(cands[0]))
                    self.basis[pos] = int(cands[0])
                    pos += 1
                else:
                    self.T = np.delete(self.T, pos, axis=0)
                    del self.basis[pos]
                    del self.row_ids[pos]
            else:
                pos += 1

    def user_duals(self, y_int: np.ndarray) -> np.ndarray:
        y = self.flip * y_int
        return self.obj_sign * y[:self.n_user_rows]

    def primal(self) -> np.ndarray:
        z = np.zeros(self.ncols)
        nrow_alive = self.T.shape[0] - 1
        z[self.basis] = self.T[:nrow_alive, -1]
        return z[:self.nvar] + self.p.lower


def _empty_variable_solution(p: LpProblem) -> LpSolution:
    x = np.zeros(0)
    resid_ok = True
    cert = np.zeros(p.nrow)
    for i, s in enumerate(p.senses):
        ok = (p.b[i] >= -TOL_LP if s == LE else
              p.b[i] <= TOL_LP if s == GE else abs(p.b[i]) <= TOL_LP)
        if not ok:
            resid_ok = False
            cert[i] = 1.0 if s == LE else -1.0
            if s == EQ:
                cert[i] = -float(np.sign(p.b[i]))
            break
    if resid_ok:
        return LpSolution(status="Optimal", x=x, dual=np.zeros(p.nrow),
                          objective=0.0, gap=0.0)
    return LpSolution(status="Infeasible", certificate=cert)


def solve_feasibility(p: LpProblem) -> LpSolution:
    """Phase 1 only: a feasible point, or Infeasible with a certificate."""
    if p.nvar == 0:
        return _empty_variable_solution(p)
    sf = _StandardForm(p)
    obj1 = sf.phase1()
    feas_tol = TOL_LP * (1.0 + float(np.abs(sf.b_int).max(initial=0.0)))
    if obj1 < -feas_tol:
        y1 = sf.row_duals(sf._c1)
        cert = sf.flip * y1
        return LpSolution(status="Infeasible", certificate=cert[:sf.n_user_rows])
    x = sf.primal()
    return LpSolution(status="Optimal", x=x, objective=float(p.c @ x))


def solve_lp(p: LpProblem) -> LpSolution:
    """Two-phase solve returning primal, per-row duals and objective."""
    if p.nvar == 0:
        return _empty_variable_solution(p)
    sf = _StandardForm(p)
    obj1 = sf.phase1()
    feas_tol = TOL_LP * (1.0 + float(np.abs(sf.b_int).max(initial=0.0)))
    if obj1 < -feas_tol:
        y1 = sf.row_duals(sf._c1)
        cert = sf.flip * y1
        return LpSolution(status="Infeasible", certificate=cert[:sf.n_user_rows])
    sf.drop_basic_artificials()

    c2 = np.zeros(sf.ncols)
    c2[:sf.nvar] = sf.c_int
    _price_out(sf.T, sf.basis, c2)
    enter_tol = TOL_LP * (1.0 + float(np.abs(sf.c_int).max(initial=0.0)))
    status = _run_simplex(sf.T, sf.basis, sf.enterable_mask(), enter_tol)
    if status == "unbounded":
        return LpSolution(status="Unbounded")

    x = sf.primal()
    objective = float(p.c @ x)
    y_int = sf.row_duals(c2)
    # internal certificate of optimality: max-form objective equals y . b
    obj_int = float(sf.c_int @ (x - p.lower))
    gap = abs(obj_int - float(y_int @ sf.b_int))
    return LpSolution(status="Optimal", x=x, dual=sf.user_duals(y_int),
                      objective=objective, gap=gap)


def farkas_gap(p: LpProblem, y: np.ndarray) -> float:
    """Certified infeasibility margin of row multipliers ``y``.

    Returns min over the variable box of (sum_i y_i A_i) . x minus y . b,
    provided y respects the sign conditions (y_i >= 0 on "<=" rows,
    y_i <= 0 on ">=" rows). A strictly positive return proves that no x in
    the box satisfies all rows; -inf marks an invalid certificate.
    """
    y = np.asarray(y, dtype=float)
    if y.shape != (p.nrow,):
        raise DimensionMismatch("certificate must have one entry per row")
    tol = 1e-12 * (1.0 + float(np.abs(y).max(initial=0.0)))
    for i, s in enumerate(p.senses):
        if s == LE and y[i] < -tol:
            return -np.inf
        if s == GE and y[i] > tol:
            return -np.inf
    t = y @ p.A
    lo = 0.0
    for k in range(p.nvar):
        if t[k] >= 0:
            lo += t[k] * p.lower[k]
        elif np.isfinite(p.upper[k]):
            lo += t[k] * p.upper[k]
        else:
            return -np.inf
    return lo - float(y @ p.b)
