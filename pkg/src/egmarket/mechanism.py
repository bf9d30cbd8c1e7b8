"""Market-clearing mechanism and incentive-compatibility probes.

The mechanism solves the market on the *reported* constraint profile,
allocates the equilibrium demand, and charges the clearing price for the
allocated fraction of each item. Buyer utilities are always evaluated
against the true profile, so a report that drags the outcome outside a
buyer's real budget or RoS constraint yields the INFEASIBLE sentinel.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .equilibrium import EquilibriumSolution, solve_market
from .instances import (
    INFEASIBLE,
    Allocation,
    BuyerOutcome,
    MarketInstance,
    PaymentProfile,
    buyer_outcome,
    new_instance,
)
from .tolerances import TOL_KKT


@dataclass(frozen=True)
class Report:
    """Reported budgets and RoS targets, validated like true profiles."""

    lambda_hat: np.ndarray
    tau_hat: np.ndarray

    def __post_init__(self):
        lam = np.asarray(self.lambda_hat, dtype=float)
        tau = np.asarray(self.tau_hat, dtype=float)
        if (lam <= 0).any():
            raise ValueError("reported budgets must be positive")
        if (tau < 1).any():
            raise ValueError("reported RoS targets must be at least 1")
        object.__setattr__(self, "lambda_hat", lam)
        object.__setattr__(self, "tau_hat", tau)

    @classmethod
    def truthful(cls, inst: MarketInstance) -> "Report":
        return cls(lambda_hat=inst.lam.copy(), tau_hat=inst.tau.copy())


@dataclass(frozen=True)
class MechanismOutcome:
    alloc: Allocation
    pay: PaymentProfile
    outcomes: tuple[BuyerOutcome, ...]
    solution: EquilibriumSolution

    @property
    def revenue(self) -> float:
        return float(self.pay.t.sum())

    def utility(self, i: int):
        return self.outcomes[i].utility


def run_mechanism(inst: MarketInstance, rep: Report | None = None,
                  tol: float | None = None) -> MechanismOutcome:
    """Clear the market on the reported profile; score against true types."""
    if rep is None:
        rep = Report.truthful(inst)
    reported = new_instance(inst.v, rep.lambda_hat, rep.tau_hat, inst.v_bar)
    kwargs = {} if tol is None else {"tol": tol}
    sol = solve_market(reported, **kwargs)
    pay = PaymentProfile(t=sol.p[None, :] * sol.x.x)
    outcomes = tuple(buyer_outcome(inst, sol.x, pay, i) for i in range(inst.n))
    return MechanismOutcome(alloc=sol.x, pay=pay, outcomes=outcomes, solution=sol)


def ir_check(inst: MarketInstance, outcome: MechanismOutcome) -> bool:
    """Individual rationality: every buyer feasible with nonnegative value."""
    return all(o.feasible and o.utility >= 0.0 for o in outcome.outcomes)


@dataclass(frozen=True)
class IcProbeRow:
    buyer: int
    lambda_hat: float
    tau_hat: float
    under_report: bool       # lambda_hat <= lam and tau_hat >= tau
    allocation_changed: bool
    feasible: bool
    utility: object          # float or INFEASIBLE
    gain: object             # float or INFEASIBLE


@dataclass(frozen=True)
class IcReport:
    buyer: int
    truthful_utility: float
    rows: tuple[IcProbeRow, ...]

    @property
    def max_gain(self) -> float:
        gains = [r.gain for r in self.rows if r.feasible]
        return max(gains) if gains else 0.0

    def over_reports_clean(self, tol: float = 1e-6) -> bool:
        """Every allocation-changing over-report is infeasible or gainless."""
        for r in self.rows:
            if r.under_report or not r.allocation_changed:
                continue
            if r.feasible and r.gain > tol:
                return False
        return True


def default_misreport_grid(inst: MarketInstance, i: int, size: int = 5,
                           under_only: bool = True,
                           lambda_span: tuple[float, float] = (0.2, 1.0),
                           tau_span: tuple[float, float] = (1.0, 3.0)):
    """Grid of (lambda_hat, tau_hat) pairs around buyer i's true type.

    under_only keeps the grid in the weakly-under-reporting quadrant;
    otherwise the budget axis extends to 2x the true budget and the RoS
    axis dips below the true target (floored at 1).
    """
    lam, tau = float(inst.lam[i]), float(inst.tau[i])
    if under_only:
        lam_grid = np.linspace(lambda_span[0] * lam, lambda_span[1] * lam, size)
        tau_grid = np.linspace(tau_span[0] * tau, tau_span[1] * tau, size)
    else:
        lam_grid = np.linspace(lambda_span[0] * lam, 2.0 * lam, size)
        tau_grid = np.concatenate([
            np.maximum(1.0, np.linspace(0.5 * tau, tau, (size + 1) // 2,
                                        endpoint=True)),
            np.linspace(tau, tau_span[1] * tau, size - (size + 1) // 2 + 1)[1:],
        ])
    return [(float(lh), float(th)) for lh in lam_grid for th in tau_grid]


def ic_probe(inst: MarketInstance, i: int, grid) -> IcReport:
    """Re-solve the market for each misreport of buyer i, others truthful.

    The gain column compares buyer i's utility (scored on true types)
    against the truthful run; infeasible outcomes carry the sentinel and
    never contribute to max_gain.
    """
    truthful = run_mechanism(inst)
    u_truth = truthful.utility(i)
    assert u_truth is not INFEASIBLE, "truthful outcome must be feasible"
    x_truth = truthful.alloc.x
    rows = []
    for lam_hat, tau_hat in grid:
        lam_vec = inst.lam.copy()
        tau_vec = inst.tau.copy()
        lam_vec[i] = lam_hat
        tau_vec[i] = tau_hat
        out = run_mechanism(inst, Report(lambda_hat=lam_vec, tau_hat=tau_vec))
        u = out.utility(i)
        changed = bool(np.abs(out.alloc.x - x_truth).max() > TOL_KKT)
        feasible = u is not INFEASIBLE
        rows.append(IcProbeRow(
            buyer=i, lambda_hat=lam_hat, tau_hat=tau_hat,
            under_report=bool(lam_hat <= inst.lam[i] and tau_hat >= inst.tau[i]),
            allocation_changed=changed, feasible=feasible,
            utility=u if feasible else INFEASIBLE,
            gain=(u - u_truth) if feasible else INFEASIBLE))
    return IcReport(buyer=i, truthful_utility=float(u_truth), rows=tuple(rows))


def write_ic_csv(reports, path, header_note: str | None = None) -> None:
    """CSV export: (buyer, lambda_hat, tau_hat, feasible, utility, gain)."""
    with open(path, "w", newline="") as fh:
        if header_note:
            fh.write(f"# {header_note}\n")
        writer = csv.writer(fh)
        writer.writerow(["buyer", "lambda_hat", "tau_hat", "feasible",
                         "utility", "gain"])
        for rep in reports:
            for r in rep.rows:
                writer.writerow([
                    r.buyer, repr(r.lambda_hat), repr(r.tau_hat),
                    str(r.feasible).lower(),
                    repr(r.utility) if r.feasible else "INFEASIBLE",
                    repr(r.gain) if r.feasible else "INFEASIBLE",
                ])
