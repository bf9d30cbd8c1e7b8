"""First-best revenue benchmark and the mechanism's approximation ratio.

The first-best program maximizes total payments over all allocations that
respect every buyer's budget and RoS constraints, ignoring incentives. Its
LP dual prices items by beta-weighted bids and certifies optimality; the
market-clearing revenue is never below half of the first-best optimum.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .equilibrium import EquilibriumSolution, solve_market
from .errors import InvariantViolation
from .instances import Allocation, MarketInstance
from .lp import LE, LpProblem, solve_lp
from .tolerances import TOL_LP


@dataclass(frozen=True)
class FirstBestSolution:
    """Optimal feasible-revenue outcome with its dual certificate.

    alpha/beta are the budget-row and (tau-rescaled) RoS-row multipliers,
    p_fb the item-row multipliers; revenue equals the dual objective
    alpha . lam + sum(p_fb) within LP tolerance. beta entries at zero are
    degenerate (the buyer wins nothing at a slack budget row) and are
    reported as-is in ``degenerate_beta``.
    """

    x_fb: Allocation
    t_fb: np.ndarray
    alpha: np.ndarray
    beta: np.ndarray
    p_fb: np.ndarray
    revenue: float
    degenerate_beta: tuple[int, ...]


def _fb_problem(inst: MarketInstance) -> LpProblem:
    n, m = inst.n, inst.m
    nv = n + n * m  # t_i then x_{i,j} row-major
    c = np.zeros(nv)
    c[:n] = 1.0
    A = np.zeros((2 * n + m, nv))
    b = np.zeros(2 * n + m)
    for i in range(n):
        A[i, i] = 1.0                       # t_i <= lam_i
        b[i] = inst.lam[i]
        A[n + i, i] = 1.0                   # t_i <= value_i / tau_i
        A[n + i, n + i * m:n + (i + 1) * m] = -inst.v[i] / inst.tau[i]
    for j in range(m):
        A[2 * n + j, n + j::m] = 1.0        # sum_i x_{i,j} <= 1
        b[2 * n + j] = 1.0
    return LpProblem(c=c, A=A, b=b, senses=(LE,) * (2 * n + m), sense="max")


def solve_first_best(inst: MarketInstance) -> FirstBestSolution:
    """Solve the feasible-revenue LP and extract its dual certificate."""
    n, m = inst.n, inst.m
    res = solve_lp(_fb_problem(inst))
    if res.status != "Optimal":
        raise InvariantViolation(f"first-best LP is {res.status}; the program "
                                 "is bounded and feasible by construction")
    t = res.x[:n]
    x = res.x[n:].reshape(n, m)
    alpha = res.dual[:n]
    beta = res.dual[n:2 * n] / inst.tau
    p_fb = res.dual[2 * n:]
    over = np.flatnonzero(beta > 1.0 / inst.tau + TOL_LP * 10)
    if over.size:
        raise InvariantViolation(
            f"first-best dual beta[{over[0]}] = {beta[over[0]]} exceeds "
            f"1/tau = {1.0 / inst.tau[over[0]]}")
    degenerate = tuple(int(i) for i in np.flatnonzero(beta <= TOL_LP))
    return FirstBestSolution(
        x_fb=Allocation(x=np.clip(x, 0.0, 1.0)), t_fb=t, alpha=alpha, beta=beta,
        p_fb=p_fb, revenue=float(t.sum()), degenerate_beta=degenerate)


class RevenueRatio(NamedTuple):
    rev_star: float
    rev_fb: float
    ratio: float


def revenue_ratio(inst: MarketInstance,
                  sol: EquilibriumSolution | None = None,
                  fb: FirstBestSolution | None = None) -> RevenueRatio:
    """Market-clearing revenue against the first-best optimum.

    The ratio is guaranteed to be at least one half; falling below
    0.5 - 1e-6 indicates a solver defect and raises.
    """
    if sol is None:
        sol = solve_market(inst)
    if fb is None:
        fb = solve_first_best(inst)
    rev_star = sol.revenue
    ratio = rev_star / fb.revenue
    if ratio < 0.5 - 1e-6:
        raise InvariantViolation(
            f"revenue ratio {ratio} fell below the guaranteed one half")
    return RevenueRatio(rev_star=rev_star, rev_fb=fb.revenue, ratio=ratio)


def first_best_to_dict(fb: FirstBestSolution) -> dict:
    return {
        "x_fb": [[float(v) for v in row] for row in fb.x_fb.clamped()],
        "t_fb": [float(v) for v in fb.t_fb],
        "alpha": [float(v) for v in fb.alpha],
        "beta": [float(v) for v in fb.beta],
        "p_fb": [float(v) for v in fb.p_fb],
        "revenue": float(fb.revenue),
        "degenerate_beta": list(fb.degenerate_beta),
    }
