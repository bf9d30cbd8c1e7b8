"""Market equilibria for budget- and RoS-constrained auto-bidders.

Offline: unique pacing multipliers and market-clearing prices from the
extended Eisenberg-Gale dual, with full KKT verification, a first-best
revenue benchmark, and misreport probes of the induced mechanism.
Online: the decentralized dual-averaging auction loop with regret
instrumentation.
"""

from .errors import (
    BadFamilyParams,
    BadParams,
    DimensionMismatch,
    EmptyMarket,
    IndexOutOfRange,
    InvariantViolation,
    MarketError,
    NoConvergence,
    NumericalBreakdown,
    StreamMismatch,
    TieResolutionInfeasible,
)
from .instances import (
    INFEASIBLE,
    Allocation,
    BuyerOutcome,
    InstanceFamily,
    MarketInstance,
    PaymentProfile,
    buyer_outcome,
    check_competitive,
    example2_instance,
    load_instance,
    new_instance,
    sample_instance,
    save_instance,
)
from .lp import LpProblem, LpSolution, farkas_gap, solve_feasibility, solve_lp
from .equilibrium import (
    BindingLabel,
    DualPoint,
    EquilibriumSolution,
    KktReport,
    dual_box,
    dual_objective,
    kkt_verify,
    prices,
    recover_allocation,
    solve_dual,
    solve_market,
    subgradient,
    verify_buyer_optimality,
)
from .firstbest import FirstBestSolution, RevenueRatio, revenue_ratio, solve_first_best
from .mechanism import (
    IcReport,
    MechanismOutcome,
    Report,
    default_misreport_grid,
    ic_probe,
    ir_check,
    run_mechanism,
)
from .online import (
    AgentState,
    AuctionRecord,
    RegretReport,
    SimulationTrace,
    SweepResult,
    auxiliary_regret,
    closed_form_multiplier,
    init_agent,
    offline_w_star,
    regret_report,
    regret_sweep,
    simulate,
    step_auction,
    stream_instance,
    update_agent,
)

__all__ = [name for name in dir() if not name.startswith("_")]
