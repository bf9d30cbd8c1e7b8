"""Offline market equilibrium via the extended Eisenberg-Gale dual.

Eliminating prices at their binding value p_j = max_i w_i v_{i,j} reduces
the dual to an n-dimensional box-constrained minimization of

    F(w) = sum_j max_i w_i v_{i,j} - sum_i lam_i log w_i
           + sum_i lam_i (log lam_i - 1)

over w in [w_lower, 1/tau], where w_lower_i = min(lam_i / (m v_bar),
1/tau_i) bounds the optimal multiplier from below. F is piecewise smooth
and sigma-strongly convex with sigma = min_i lam_i tau_i^2, so the optimum
is unique.

The solve runs in epochs: a projected-subgradient sweep with step
2 / (sigma (k+1)) and weighted iterate averaging provides the global
descent, and each epoch ends with a refinement pass (softmax-smoothed
quasi-Newton continuation followed by an exact winner-set stationarity
iteration) that pushes the iterate to machine accuracy. The primal
allocation, slacks and payments are then recovered from complementary
slackness, with tied items split by a feasibility LP.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from enum import Enum

import numpy as np
from scipy.optimize import minimize

from .errors import IndexOutOfRange, NoConvergence, TieResolutionInfeasible
from .instances import Allocation, MarketInstance
from .lp import GE, LE, EQ, LpProblem, solve_feasibility, solve_lp
from .tolerances import TIE_REL, TOL_FEAS, TOL_KKT, TOL_LP, TOL_SOLVER

_MU_LADDER = (1e-2, 1e-4, 1e-6, 1e-8, 1e-10, 1e-12)
_SUBGRAD_ITERS_PER_EPOCH = 50


def dual_box(inst: MarketInstance) -> tuple[np.ndarray, np.ndarray]:
    """Componentwise bounds [w_lower, 1/tau] containing the optimum."""
    hi = 1.0 / inst.tau
    lo = np.minimum(inst.lam / (inst.m * inst.v_bar), hi)
    return lo, hi


@dataclass(frozen=True)
class DualPoint:
    """Multiplier vector pinned to its feasible box."""

    w: np.ndarray
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        w = np.asarray(self.w, dtype=float)
        lo = np.asarray(self.lower, dtype=float)
        hi = np.asarray(self.upper, dtype=float)
        if (w < lo - 1e-12).any() or (w > hi + 1e-12).any():
            i = int(np.argmax(np.maximum(lo - w, w - hi)))
            raise IndexOutOfRange(
                f"w[{i}] = {w[i]} outside box [{lo[i]}, {hi[i]}]"
            )
        w = np.clip(w, lo, hi)
        for name, arr in (("w", w), ("lower", lo), ("upper", hi)):
            arr = np.array(arr, dtype=float)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)


def _wvec(w) -> np.ndarray:
    return w.w if isinstance(w, DualPoint) else np.asarray(w, dtype=float)


def dual_objective(inst: MarketInstance, w) -> float:
    """Reduced dual objective with prices eliminated at max_i w_i v_{i,j}."""
    w = _wvec(w)
    price_part = float((w[:, None] * inst.v).max(axis=0).sum())
    lam = inst.lam
    return price_part - float(lam @ np.log(w)) + float(lam @ (np.log(lam) - 1.0))


def subgradient(inst: MarketInstance, w) -> np.ndarray:
    """One subgradient of the reduced dual: won value minus lam/w.

    Component i sums v_{i,j} over items where i holds the highest bid
    (lowest index on exact ties) and subtracts lam_i / w_i.
    """
    w = _wvec(w)
    bids = w[:, None] * inst.v
    winners = bids.argmax(axis=0)
    won_value = np.bincount(winners, weights=inst.v[winners, np.arange(inst.m)],
                            minlength=inst.n)
    return won_value - inst.lam / w


def _smoothed_value_grad(inst: MarketInstance, w: np.ndarray, mu: float):
    """Softmax relaxation of F: exact away from mu-scale bid ties."""
    bids = w[:, None] * inst.v
    top = bids.max(axis=0)
    # exponents below -60 contribute < 1e-26 to the softmax; clipping them
    # keeps exp() off the subnormal slow path
    e = np.exp(np.maximum((bids - top[None, :]) / mu, -60.0))
    s = e.sum(axis=0)
    value = float((top + mu * np.log(s)).sum())
    share = e / s
    grad = (share * inst.v).sum(axis=1)
    lam = inst.lam
    value += -float(lam @ np.log(w)) + float(lam @ (np.log(lam) - 1.0))
    grad -= lam / w
    return value, grad


def _subgradient_epoch(inst, w, lo, hi, sigma, k0, iters):
    """Projected subgradient sweep with running (k+1)-weighted average."""
    w = w.copy()
    avg = w.copy()
    weight_sum = 0.0
    for t in range(iters):
        k = k0 + t
        g = subgradient(inst, w)
        w = np.clip(w - (2.0 / (sigma * (k + 1))) * g, lo, hi)
        wt = float(k + 1)
        weight_sum += wt
        avg += (wt / weight_sum) * (w - avg)
    return avg, k0 + iters


def _winner_set_refine(inst, w, lo, hi):
    """Exact stationarity pass: w_i <- clamp(lam_i / value won at w).

    When the optimal winner assignment is stable this map reaches its fixed
    point in a few steps and the fixed point is returned outright (the
    objective cannot resolve the final snap, which is below float
    resolution of F). On tie-carrying instances the assignment cycles and
    the best iterate by exact objective is kept instead.
    """
    cols = np.arange(inst.m)
    f_in = dual_objective(inst, w)
    accept_tol = 1e-12 * (1.0 + abs(f_in))
    best_w, best_f = w, f_in
    cur = w
    seen: set[bytes] = set()
    for _ in range(60):
        bids = cur[:, None] * inst.v
        winners = bids.argmax(axis=0)
        won_value = np.bincount(winners, weights=inst.v[winners, cols],
                                minlength=inst.n)
        with np.errstate(divide="ignore"):
            target = np.where(won_value > 0, inst.lam / won_value, np.inf)
        nxt = np.clip(target, lo, hi)
        f = dual_objective(inst, nxt)
        if f < best_f:
            best_w, best_f = nxt, f
        if np.array_equal(nxt, cur):
            return cur if f <= f_in + accept_tol else best_w
        key = winners.tobytes()
        if key in seen:
            break
        seen.add(key)
        cur = nxt
    return best_w


def _refine(inst, w, lo, hi):
    """Smoothing continuation + winner-set pass from a warm start."""
    w = np.clip(w, np.minimum(lo, hi), hi)
    bounds = list(zip(lo, hi))
    for mu_rel in _MU_LADDER:
        mu = mu_rel * inst.v_bar
        res = minimize(
            lambda x: _smoothed_value_grad(inst, x, mu),
            w, jac=True, method="L-BFGS-B", bounds=bounds,
            options={"maxiter": 500, "ftol": 1e-16, "gtol": 1e-12},
        )
        w = np.clip(res.x, lo, hi)
    cand = _winner_set_refine(inst, w, lo, hi)
    f_w = dual_objective(inst, w)
    if dual_objective(inst, cand) <= f_w + 1e-12 * (1.0 + abs(f_w)):
        w = cand
    return w


def solve_dual(inst: MarketInstance, tol: float = TOL_SOLVER,
               max_epochs: int = 40, init="upper") -> DualPoint:
    """Minimize the reduced dual over its box to the requested tolerance.

    init may be "upper", "lower", "center", or an explicit vector; runs
    from distinct initializations agree within sqrt(2 tol / sigma) in the
    2-norm because the objective is sigma-strongly convex.

    Raises NoConvergence (best iterate attached) if max_epochs is hit while
    the per-epoch relative improvement still exceeds 10 * tol.
    """
    lo, hi = dual_box(inst)
    if isinstance(init, str):
        if init == "upper":
            w = hi.copy()
        elif init == "lower":
            w = lo.copy()
        elif init == "center":
            w = 0.5 * (lo + hi)
        else:
            raise IndexOutOfRange(f"unknown init {init!r}")
    else:
        w = np.clip(np.asarray(init, dtype=float), lo, hi)
    sigma = float((inst.lam * inst.tau**2).min())
    best_f = np.inf
    best_w = w
    last_rel = np.inf
    k = 0
    for _ in range(max_epochs):
        avg, k = _subgradient_epoch(inst, best_w if np.isfinite(best_f) else w,
                                    lo, hi, sigma, k, _SUBGRAD_ITERS_PER_EPOCH)
        cand = _refine(inst, avg, lo, hi)
        f = dual_objective(inst, cand)
        improvement = best_f - f
        if f < best_f:
            best_f, best_w = f, cand
        last_rel = improvement / (1.0 + abs(f))
        if last_rel < tol:
            return DualPoint(w=best_w, lower=lo, upper=hi)
    if last_rel > 10.0 * tol:
        raise NoConvergence(
            f"epoch budget {max_epochs} exhausted with relative improvement "
            f"{last_rel:.3e} > {10.0 * tol:.3e}", best_w=best_w)
    return DualPoint(w=best_w, lower=lo, upper=hi)


def prices(inst: MarketInstance, w) -> np.ndarray:
    """Market-clearing prices p_j = max_i w_i v_{i,j}; strictly positive."""
    w = _wvec(w)
    return (w[:, None] * inst.v).max(axis=0)


def tie_sets(inst: MarketInstance, w, p) -> list[np.ndarray]:
    """Per item, the buyers whose bids sit within tie tolerance of p_j."""
    w = _wvec(w)
    tol_tie = TIE_REL * inst.v_bar
    bids = w[:, None] * inst.v
    mask = bids >= (np.asarray(p, dtype=float) - tol_tie)[None, :]
    return [np.flatnonzero(mask[:, j]) for j in range(inst.m)]


def recover_allocation(inst: MarketInstance, w, p):
    """Primal (x, d, payments) from near-optimal multipliers and prices.

    Items with a unique highest bidder go wholly to that bidder. Tied items
    are split by a feasibility LP that clears each tied item and forces
    total payment = lam_i for every budget-binding buyer involved in a tie
    (payment <= lam_i for the rest). Slacks follow the complementary
    construction: d_i = 0 when the budget binds, lam_i tau_i - value
    otherwise.

    Raises TieResolutionInfeasible (with the Farkas certificate) when the
    split system has no solution, which indicates w is outside tolerance
    of the dual optimum.
    """
    w = _wvec(w)
    p = np.asarray(p, dtype=float)
    n, m = inst.n, inst.m
    _, hi = dual_box(inst)
    sets = tie_sets(inst, w, p)
    bids = w[:, None] * inst.v

    x = np.zeros((n, m))
    tied_items = []
    for j in range(m):
        if sets[j].size <= 1:
            x[int(bids[:, j].argmax()), j] = 1.0
        else:
            tied_items.append(j)

    budget_binding = w < hi - TOL_KKT
    if tied_items:
        var_index: dict[tuple[int, int], int] = {}
        for j in tied_items:
            for i in sets[j]:
                var_index[(int(i), j)] = len(var_index)
        nv = len(var_index)
        fixed_pay = x @ p

        rows, rhs, senses = [], [], []
        for j in tied_items:
            row = np.zeros(nv)
            for i in sets[j]:
                row[var_index[(int(i), j)]] = 1.0
            rows.append(row)
            rhs.append(1.0)
            senses.append(EQ)
        involved = sorted({i for (i, _j) in var_index})
        for i in involved:
            row = np.zeros(nv)
            for (bi, j), k in var_index.items():
                if bi == i:
                    row[k] = p[j]
            rows.append(row)
            rhs.append(float(inst.lam[i] - fixed_pay[i]))
            senses.append(EQ if budget_binding[i] else LE)

        problem = LpProblem(c=np.zeros(nv), A=np.vstack(rows), b=np.array(rhs),
                            senses=tuple(senses))
        sol = solve_feasibility(problem)
        if sol.status != "Optimal":
            raise TieResolutionInfeasible(
                "tie-splitting system infeasible; multipliers are outside "
                "tolerance of the dual optimum", certificate=sol.certificate)
        for (i, j), k in var_index.items():
            x[i, j] = min(1.0, max(0.0, float(sol.x[k])))

    payments = x @ p
    value = (x * inst.v).sum(axis=1)
    d = np.where(budget_binding, 0.0,
                 np.maximum(0.0, inst.lam * inst.tau - value))
    return Allocation(x=x), d, payments


class BindingLabel(str, Enum):
    BUDGET = "BudgetBinding"
    ROS = "RoSBinding"
    BOTH = "Both"


def binding_labels(inst: MarketInstance, w, payments) -> tuple[BindingLabel, ...]:
    """BudgetBinding when w_i sits strictly inside the box, RoSBinding at the
    cap, upgraded to Both when the budget is also exhausted."""
    w = _wvec(w)
    _, hi = dual_box(inst)
    labels = []
    for i in range(inst.n):
        if w[i] < hi[i] - TOL_KKT:
            labels.append(BindingLabel.BUDGET)
        elif payments[i] >= inst.lam[i] - TOL_FEAS:
            labels.append(BindingLabel.BOTH)
        else:
            labels.append(BindingLabel.ROS)
    return tuple(labels)


@dataclass(frozen=True)
class EquilibriumSolution:
    """Dual multipliers with the recovered competitive-equilibrium outcome."""

    w: DualPoint
    p: np.ndarray
    x: Allocation
    d: np.ndarray
    payments: np.ndarray
    binding: tuple[BindingLabel, ...]
    dual_objective: float

    @property
    def revenue(self) -> float:
        return float(self.p.sum())

    def __post_init__(self):
        object.__setattr__(self, "p", np.asarray(self.p, dtype=float))
        object.__setattr__(self, "d", np.asarray(self.d, dtype=float))
        object.__setattr__(self, "payments", np.asarray(self.payments, dtype=float))


def buyer_values(inst: MarketInstance, sol: EquilibriumSolution) -> np.ndarray:
    return (sol.x.x * inst.v).sum(axis=1)


def solve_market(inst: MarketInstance, tol: float = TOL_SOLVER,
                 max_epochs: int = 40, init="upper") -> EquilibriumSolution:
    """Full pipeline: dual solve, price formation, primal recovery, labels."""
    w = solve_dual(inst, tol=tol, max_epochs=max_epochs, init=init)
    p = prices(inst, w)
    x, d, payments = recover_allocation(inst, w, p)
    return EquilibriumSolution(
        w=w, p=p, x=x, d=d, payments=payments,
        binding=binding_labels(inst, w, payments),
        dual_objective=dual_objective(inst, w),
    )


@dataclass(frozen=True)
class KktReport:
    """Max absolute residual of each optimality condition.

    utility_slack:       w_i (c_i - value_i - d_i), zero by construction
    clearance_comp:      p_j (sum_i x_{i,j} - 1)
    allocation_comp:     x_{i,j} (p_j - w_i v_{i,j})
    slack_comp:          d_i (w_i - 1/tau_i)
    stationarity:        w_i c_i - lam_i with c_i = value_i + d_i
    price_residual:      p_j - max_i w_i v_{i,j}
    clearance:           sum_i x_{i,j} - 1
    payment_identity:    payments_i - (lam_i - d_i / tau_i)
    """

    utility_slack: float
    clearance_comp: float
    allocation_comp: float
    slack_comp: float
    stationarity: float
    price_residual: float
    clearance: float
    payment_identity: float

    @property
    def max_residual(self) -> float:
        return max(self.utility_slack, self.clearance_comp, self.allocation_comp,
                   self.slack_comp, self.stationarity, self.price_residual,
                   self.clearance, self.payment_identity)


def kkt_verify(inst: MarketInstance, sol: EquilibriumSolution) -> KktReport:
    """Residuals of all complementary-slackness and stationarity conditions."""
    w = sol.w.w
    x = sol.x.x
    value = (x * inst.v).sum(axis=1)
    c = value + sol.d
    bids = w[:, None] * inst.v
    column_sum = x.sum(axis=0)
    return KktReport(
        utility_slack=float(np.abs(w * (c - value - sol.d)).max()),
        clearance_comp=float(np.abs(sol.p * (column_sum - 1.0)).max()),
        allocation_comp=float(np.abs(x * (sol.p[None, :] - bids)).max()),
        slack_comp=float(np.abs(sol.d * (w - 1.0 / inst.tau)).max()),
        stationarity=float(np.abs(w * c - inst.lam).max()),
        price_residual=float(np.abs(sol.p - bids.max(axis=0)).max()),
        clearance=float(np.abs(column_sum - 1.0).max()),
        payment_identity=float(
            np.abs(sol.payments - (inst.lam - sol.d / inst.tau)).max()),
    )


@dataclass(frozen=True)
class BuyerOptimalityReport:
    buyer: int
    lp_value: float
    realized_value: float
    gap: float
    passed: bool


def verify_buyer_optimality(inst: MarketInstance, sol: EquilibriumSolution,
                            i: int) -> BuyerOptimalityReport:
    """Check that buyer i's bundle solves their demand LP at prices p.

    The LP maximizes buyer value under the budget and RoS rows with
    per-item caps q_j: the seller-coordinated supply x_{i,j} on tied items
    buyer i participates in, and the full unit elsewhere.
    """
    if not 0 <= i < inst.n:
        raise IndexOutOfRange(f"buyer index {i} outside [0, {inst.n})")
    p = sol.p
    sets = tie_sets(inst, sol.w, p)
    caps = np.ones(inst.m)
    for j in range(inst.m):
        if sets[j].size > 1 and i in sets[j]:
            caps[j] = sol.x.x[i, j]
    vi = inst.v[i]
    A = np.vstack([p, inst.tau[i] * p - vi])
    b = np.array([inst.lam[i], 0.0])
    lp = LpProblem(c=vi, A=A, b=b, senses=(LE, LE), upper=caps, sense="max")
    res = solve_lp(lp)
    if res.status != "Optimal":
        raise TieResolutionInfeasible(
            f"buyer {i} demand LP unexpectedly {res.status}")
    realized = float(vi @ sol.x.x[i])
    gap = abs(res.objective - realized)
    return BuyerOptimalityReport(
        buyer=i, lp_value=float(res.objective), realized_value=realized,
        gap=gap, passed=gap <= TOL_LP * (1.0 + abs(realized)))


# ---------------------------------------------------------------------------
# solution file format
# ---------------------------------------------------------------------------

def solution_to_dict(sol: EquilibriumSolution, kkt: KktReport | None = None) -> dict:
    data = {
        "w": [float(v) for v in sol.w.w],
        "p": [float(v) for v in sol.p],
        "x": [[float(v) for v in row] for row in sol.x.clamped()],
        "d": [float(v) for v in sol.d],
        "payments": [float(v) for v in sol.payments],
        "binding": [label.value for label in sol.binding],
        "dual_objective": float(sol.dual_objective),
    }
    if kkt is not None:
        data["kkt_max_residual"] = float(kkt.max_residual)
    return data


def save_solution(sol: EquilibriumSolution, path, kkt: KktReport | None = None,
                  extra: dict | None = None) -> None:
    data = solution_to_dict(sol, kkt)
    if extra:
        data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh, allow_nan=False, indent=1)
        fh.write("\n")
