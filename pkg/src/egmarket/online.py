"""Decentralized online market clearing via regularized dual averaging.

Each agent starts at its RoS cap omega = 1/tau and, after every first-price
auction, updates a dual average of realized value

    g_bar^j = ((j-1) g_bar^{j-1} + v_j won_j) / j

and re-projects its multiplier omega = clamp(rho / g_bar) onto the feasible
interval [min(rho/v_bar, 1/tau), 1/tau]. The update is the closed-form
minimizer of the linearized loss s (omega - omega^1) - j rho log(omega),
so the whole procedure is parameter-free and uses only bandit feedback:
an agent sees its own value and a binary win flag, never other agents'
bids, budgets, or multipliers.

Regret metrics compare the online run against the offline-optimal uniform
multipliers on the same realized stream: the auxiliary objective series,
final strategy gaps, per-agent utility regret, the seller's revenue gap,
and measured budget overshoot (the update never hard-stops an agent).
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .equilibrium import DualPoint, solve_dual, _wvec
from .errors import BadParams, EmptyMarket, StreamMismatch
from .instances import MarketInstance, new_instance
from .tolerances import TOL_SOLVER


def _project_multiplier(rho: float, g_bar: float, w_lower: float,
                        w_upper: float) -> float:
    # rho / 0 is +inf by convention: an agent that never wins bids at its cap
    if g_bar <= 0.0:
        return w_upper
    return min(w_upper, max(w_lower, rho / g_bar))


def closed_form_multiplier(s: float, j: int, rho: float, tau: float,
                           w_lower: float) -> float:
    """argmin over [w_lower, 1/tau] of s (omega - 1/tau) - j rho log(omega)."""
    w_upper = 1.0 / tau
    if s <= 0.0:
        return w_upper
    return min(w_upper, max(w_lower, j * rho / s))


def linearized_loss(omega: float, s: float, j: int, rho: float, tau: float) -> float:
    """The per-agent dual-averaging objective the update minimizes."""
    return s * (omega - 1.0 / tau) - j * rho * math.log(omega)


@dataclass(frozen=True)
class AgentState:
    """One bidder's pacing state; immutable, updated functionally."""

    rho: float
    tau: float
    v_bar: float
    w_lower: float
    w_upper: float
    omega: float
    g_bar: float
    j: int
    value_won_total: float = 0.0


def init_agent(rho: float, tau: float, v_bar: float) -> AgentState:
    """Fresh agent at its RoS cap with an empty dual average."""
    if not (rho > 0 and tau >= 1 and v_bar > 0):
        raise BadParams(f"need rho > 0, tau >= 1, v_bar > 0; "
                        f"got ({rho}, {tau}, {v_bar})")
    w_upper = 1.0 / tau
    w_lower = min(rho / v_bar, w_upper)
    return AgentState(rho=rho, tau=tau, v_bar=v_bar, w_lower=w_lower,
                      w_upper=w_upper, omega=w_upper, g_bar=0.0, j=1)


def update_agent(a: AgentState, v: float, won: bool) -> AgentState:
    """Fold one auction's bandit feedback into the dual average.

    The average is maintained through the running won-value total, so
    g_bar^j equals (sum of won values) / j exactly, not just up to
    floating-point drift of the recursive form.
    """
    total = a.value_won_total + (v if won else 0.0)
    g_bar = total / a.j
    omega = _project_multiplier(a.rho, g_bar, a.w_lower, a.w_upper)
    return replace(a, g_bar=g_bar, omega=omega, j=a.j + 1,
                   value_won_total=total)


@dataclass(frozen=True)
class AuctionRecord:
    """One first-price auction: bids, winner (lowest index on ties), price."""

    j: int
    values: np.ndarray
    bids: np.ndarray
    winner: int
    price: float
    won: tuple[bool, ...]


def step_auction(agents: list[AgentState], values) -> AuctionRecord:
    """Run one first-price auction on the agents' current multipliers."""
    if not agents:
        raise EmptyMarket("no agents in the auction")
    values = np.asarray(values, dtype=float)
    if values.shape != (len(agents),):
        raise StreamMismatch(f"need one value per agent, got {values.shape}")
    if (values < 0).any() or any(values[i] > a.v_bar for i, a in enumerate(agents)):
        raise BadParams("auction values must lie in [0, v_bar]")
    bids = np.array([a.omega for a in agents]) * values
    winner = int(bids.argmax())
    return AuctionRecord(
        j=agents[0].j, values=values, bids=bids, winner=winner,
        price=float(bids[winner]),
        won=tuple(i == winner for i in range(len(agents))))


@dataclass(frozen=True)
class SimulationTrace:
    """Full-run record: per-auction outcomes plus multiplier paths.

    omega_path[k] is the multiplier vector used in auction k+1;
    omega_path[m] is the final post-run vector.
    """

    values: np.ndarray        # (n, m) realized stream
    v_bar: float
    rho: np.ndarray
    tau: np.ndarray
    winners: np.ndarray       # (m,)
    prices: np.ndarray        # (m,)
    omega_path: np.ndarray    # (m+1, n)

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def value_by_agent(self) -> np.ndarray:
        won = np.bincount(self.winners,
                          weights=self.values[self.winners, np.arange(self.m)],
                          minlength=self.n)
        return won

    @property
    def payment_by_agent(self) -> np.ndarray:
        return np.bincount(self.winners, weights=self.prices, minlength=self.n)

    @property
    def revenue(self) -> float:
        return float(self.prices.sum())

    def record(self, j: int) -> AuctionRecord:
        """Rebuild the j-th auction record (1-based, matching AgentState.j)."""
        if not 1 <= j <= self.m:
            raise StreamMismatch(f"auction index {j} outside [1, {self.m}]")
        vals = self.values[:, j - 1]
        bids = self.omega_path[j - 1] * vals
        winner = int(self.winners[j - 1])
        return AuctionRecord(j=j, values=vals, bids=bids, winner=winner,
                             price=float(self.prices[j - 1]),
                             won=tuple(i == winner for i in range(self.n)))

    @property
    def records(self):
        return [self.record(j) for j in range(1, self.m + 1)]


def simulate(inst: MarketInstance) -> SimulationTrace:
    """Run the full auction sequence on the instance's value columns.

    Budgets enter only through the per-auction rate rho_i = lam_i / m.
    The loop is the vectorized equivalent of step_auction/update_agent;
    replaying the trace through update_agent reproduces omega_path exactly.
    """
    n, m = inst.n, inst.m
    v = inst.v
    rho = inst.lam / m
    hi = 1.0 / inst.tau
    lo = np.minimum(rho / inst.v_bar, hi)

    omega = hi.copy()
    totals = np.zeros(n)
    winners = np.empty(m, dtype=np.int64)
    prices = np.empty(m)
    omega_path = np.empty((m + 1, n))
    omega_path[0] = omega
    for j in range(1, m + 1):
        col = v[:, j - 1]
        bids = omega * col
        winner = int(bids.argmax())
        winners[j - 1] = winner
        prices[j - 1] = bids[winner]
        totals[winner] += col[winner]
        g_bar = totals / j
        with np.errstate(divide="ignore"):
            raw = rho / g_bar
        omega = np.minimum(hi, np.maximum(lo, raw))
        omega_path[j] = omega
    return SimulationTrace(values=v, v_bar=inst.v_bar, rho=rho, tau=inst.tau,
                           winners=winners, prices=prices, omega_path=omega_path)


def stream_instance(values, rho, tau, v_bar: float) -> MarketInstance:
    """Wrap a realized stream as a market with budgets lam_i = m rho_i."""
    values = np.asarray(values, dtype=float)
    rho = np.asarray(rho, dtype=float)
    m = values.shape[1]
    return new_instance(values, m * rho, tau, v_bar)


def offline_w_star(inst: MarketInstance, tol: float = TOL_SOLVER) -> DualPoint:
    """Offline-optimal uniform multipliers on the realized stream."""
    return solve_dual(inst, tol=tol)


def _check_stream(trace: SimulationTrace, w: np.ndarray) -> None:
    if w.shape != (trace.n,):
        raise StreamMismatch(
            f"benchmark has {w.shape[0]} agents, trace has {trace.n}")


def auxiliary_regret(trace: SimulationTrace, w_star) -> np.ndarray:
    """Cumulative dual-objective gap series; entry j is the regret after
    auction j (entry 0 is zero).

    Each term compares price-plus-regularizer of the multipliers actually
    used against the fixed benchmark on the same value column.
    """
    w = _wvec(w_star)
    _check_stream(trace, w)
    log_online = np.log(trace.omega_path[:-1]) @ trace.rho
    base_prices = (w[:, None] * trace.values).max(axis=0)
    log_base = float(trace.rho @ np.log(w))
    per_round = (trace.prices - log_online) - (base_prices - log_base)
    out = np.empty(trace.m + 1)
    out[0] = 0.0
    np.cumsum(per_round, out=out[1:])
    return out


def replay_fixed(trace: SimulationTrace, w) -> tuple[np.ndarray, np.ndarray]:
    """Winners and prices of the same stream under fixed multipliers."""
    w = _wvec(w)
    _check_stream(trace, w)
    bids = w[:, None] * trace.values
    winners = bids.argmax(axis=0)
    return winners, bids.max(axis=0)


@dataclass(frozen=True)
class RegretReport:
    """Online-versus-benchmark gaps on one realized stream.

    revenue_gap may be negative: the online path can out-earn the fixed
    benchmark. budget_overshoot is measured, not enforced; the update rule
    has no hard stop.
    """

    w_star: np.ndarray
    r_obj: np.ndarray             # length m+1, r_obj[0] = 0
    strategy_gap: np.ndarray      # per agent, |omega^{m+1} - w*|
    utility_regret: np.ndarray    # per agent, u* - u_online
    revenue_gap: float            # sum p(w*) - online revenue
    budget_overshoot: np.ndarray  # per agent, max(0, spend - m rho)


def regret_report(trace: SimulationTrace, w_star) -> RegretReport:
    """All regret metrics against the fixed-w* replay of the same stream."""
    w = _wvec(w_star)
    _check_stream(trace, w)
    base_winners, base_prices = replay_fixed(trace, w)
    u_star = np.bincount(base_winners,
                         weights=trace.values[base_winners, np.arange(trace.m)],
                         minlength=trace.n)
    spend = trace.payment_by_agent
    budgets = trace.m * trace.rho
    return RegretReport(
        w_star=w,
        r_obj=auxiliary_regret(trace, w),
        strategy_gap=np.abs(trace.omega_path[-1] - w),
        utility_regret=u_star - trace.value_by_agent,
        revenue_gap=float(base_prices.sum() - trace.prices.sum()),
        budget_overshoot=np.maximum(0.0, spend - budgets),
    )


# ---------------------------------------------------------------------------
# exports
# ---------------------------------------------------------------------------

def trace_to_csv(trace: SimulationTrace, path, header_note: str | None = None) -> None:
    """Per-auction CSV: j, winner, price, and the multipliers used in j."""
    with open(path, "w", newline="") as fh:
        if header_note:
            fh.write(f"# {header_note}\n")
        writer = csv.writer(fh)
        writer.writerow(["j", "winner", "price"]
                        + [f"omega_{i + 1}" for i in range(trace.n)])
        for j in range(1, trace.m + 1):
            writer.writerow([j, int(trace.winners[j - 1]),
                             repr(float(trace.prices[j - 1]))]
                            + [repr(float(x)) for x in trace.omega_path[j - 1]])


def _pow2_indices(m: int) -> list[int]:
    idx = []
    k = 1
    while k <= m:
        idx.append(k)
        k *= 2
    if idx and idx[-1] != m:
        idx.append(m)
    return idx


def report_to_dict(report: RegretReport) -> dict:
    """JSON payload with the regret series downsampled at powers of two."""
    m = report.r_obj.shape[0] - 1
    idx = _pow2_indices(m)
    return {
        "w_star": [float(x) for x in report.w_star],
        "r_obj_j": idx,
        "r_obj": [float(report.r_obj[j]) for j in idx],
        "strategy_gap": [float(x) for x in report.strategy_gap],
        "utility_regret": [float(x) for x in report.utility_regret],
        "revenue_gap": float(report.revenue_gap),
        "budget_overshoot": [float(x) for x in report.budget_overshoot],
    }


def save_report(report: RegretReport, path, extra: dict | None = None) -> None:
    data = report_to_dict(report)
    if extra:
        data.update(extra)
    with open(path, "w") as fh:
        json.dump(data, fh, allow_nan=False, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# scaling sweep
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SweepRun:
    m: int
    seed: int
    r_obj_final: float
    strategy_gap: float     # max over agents
    utility_regret: float   # max over agents
    revenue_gap: float
    budget_overshoot: float


@dataclass(frozen=True)
class SweepResult:
    """Median regret statistics per horizon plus log-log scaling slopes.

    Slopes for utility regret and revenue gap floor the medians at 1 before
    taking logs, since both quantities can be small or negative.
    """

    m_values: tuple[int, ...]
    runs: tuple[SweepRun, ...]
    median_r_obj_over_log_m: tuple[float, ...]
    median_strategy_gap: tuple[float, ...]
    median_utility_regret: tuple[float, ...]
    median_revenue_gap: tuple[float, ...]
    strategy_gap_slope: float
    utility_regret_slope: float
    revenue_gap_slope: float


def sweep_stream(n: int, m: int, seed: int, rho_range: tuple[float, float],
                 tau: float, base_seed: int = 0) -> MarketInstance:
    """Deterministic uniform(0,1) stream with per-agent rates in rho_range."""
    rng = np.random.default_rng([base_seed, m, seed])
    rho = rng.uniform(rho_range[0], rho_range[1], size=n)
    values = rng.uniform(0.0, 1.0, size=(n, m))
    bad = (values <= 0.0) | (values >= 1.0)
    while bad.any():
        values[bad] = rng.uniform(0.0, 1.0, size=int(bad.sum()))
        bad = (values <= 0.0) | (values >= 1.0)
    return stream_instance(values, rho, np.full(n, float(tau)), v_bar=1.0)


def _loglog_slope(m_values, series) -> float:
    xs = np.log(np.asarray(m_values, dtype=float))
    ys = np.log(np.asarray(series, dtype=float))
    return float(np.polyfit(xs, ys, 1)[0])


def regret_sweep(m_values, n: int = 5, seeds: int = 20,
                 rho_range: tuple[float, float] = (0.05, 0.2),
                 tau: float = 1.0, base_seed: int = 0,
                 tol: float = TOL_SOLVER) -> SweepResult:
    """Median regret scaling across horizons; deterministic given base_seed."""
    m_values = tuple(int(m) for m in m_values)
    runs = []
    for m in m_values:
        for seed in range(seeds):
            inst = sweep_stream(n, m, seed, rho_range, tau, base_seed)
            trace = simulate(inst)
            w_star = offline_w_star(inst, tol=tol)
            rep = regret_report(trace, w_star)
            runs.append(SweepRun(
                m=m, seed=seed, r_obj_final=float(rep.r_obj[-1]),
                strategy_gap=float(rep.strategy_gap.max()),
                utility_regret=float(rep.utility_regret.max()),
                revenue_gap=float(rep.revenue_gap),
                budget_overshoot=float(rep.budget_overshoot.max())))

    def med(metric, m):
        vals = [getattr(r, metric) for r in runs if r.m == m]
        return float(np.median(vals))

    med_ratio = tuple(med("r_obj_final", m) / math.log(m) for m in m_values)
    med_gap = tuple(med("strategy_gap", m) for m in m_values)
    med_ureg = tuple(med("utility_regret", m) for m in m_values)
    med_rgap = tuple(med("revenue_gap", m) for m in m_values)
    floor = lambda xs: [max(x, 1.0) for x in xs]
    return SweepResult(
        m_values=m_values, runs=tuple(runs),
        median_r_obj_over_log_m=med_ratio,
        median_strategy_gap=med_gap,
        median_utility_regret=med_ureg,
        median_revenue_gap=med_rgap,
        strategy_gap_slope=_loglog_slope(m_values, med_gap),
        utility_regret_slope=_loglog_slope(m_values, floor(med_ureg)),
        revenue_gap_slope=_loglog_slope(m_values, floor(med_rgap)),
    )


def sweep_to_csv(result: SweepResult, path, header_note: str | None = None) -> None:
    with open(path, "w", newline="") as fh:
        if header_note:
            fh.write(f"# {header_note}\n")
        writer = csv.writer(fh)
        writer.writerow(["m", "seed", "r_obj_final", "strategy_gap",
                         "utility_regret", "revenue_gap", "budget_overshoot"])
        for r in result.runs:
            writer.writerow([r.m, r.seed, repr(r.r_obj_final),
                             repr(r.strategy_gap), repr(r.utility_regret),
                             repr(r.revenue_gap), repr(r.budget_overshoot)])


def sweep_summary_dict(result: SweepResult) -> dict:
    return {
        "m_values": list(result.m_values),
        "median_r_obj_over_log_m": list(result.median_r_obj_over_log_m),
        "median_strategy_gap": list(result.median_strategy_gap),
        "median_utility_regret": list(result.median_utility_regret),
        "median_revenue_gap": list(result.median_revenue_gap),
        "strategy_gap_slope": result.strategy_gap_slope,
        "utility_regret_slope": result.utility_regret_slope,
        "revenue_gap_slope": result.revenue_gap_slope,
    }
