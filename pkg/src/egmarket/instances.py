"""Market primitives: instances, allocations, payments, buyer outcomes.

A market has n value-maximizing buyers and m unit-supply items. Buyer i
carries a budget ``lam[i]`` and a return-on-spend target ``tau[i]``; the
valuation matrix ``v`` is public. Buyers are feasible when total payment
stays within budget and total value is at least tau times total payment;
utility is total value when feasible and the INFEASIBLE sentinel otherwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import (
    BadFamilyParams,
    DimensionMismatch,
    IndexOutOfRange,
    InvariantViolation,
)
from .tolerances import TOL_FEAS, TOL_KKT


class _InfeasibleType:
    """Singleton sentinel ordered strictly below every finite utility.

    Kept distinct from -inf so that infeasibility can never leak into
    float arithmetic (sums, regret series) unnoticed.
    """

    _instance = None

    def __new__(cls):
        if cls._instance is None:
            cls._instance = super().__new__(cls)
        return cls._instance

    def __repr__(self):
        return "INFEASIBLE"

    def __bool__(self):
        return False

    def __lt__(self, other):
        if other is self:
            return False
        if isinstance(other, (int, float)):
            return True
        return NotImplemented

    def __le__(self, other):
        if other is self:
            return True
        if isinstance(other, (int, float)):
            return True
        return NotImplemented

    def __gt__(self, other):
        if other is self or isinstance(other, (int, float)):
            return False
        return NotImplemented

    def __ge__(self, other):
        if other is self:
            return True
        if isinstance(other, (int, float)):
            return False
        return NotImplemented

    def __float__(self):
        raise TypeError("INFEASIBLE is not a number; check .feasible first")


INFEASIBLE = _InfeasibleType()


def _readonly(a: np.ndarray) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class MarketInstance:
    """Immutable public inputs of one market.

    v : (n, m) nonnegative valuations, bounded by v_bar
    lam : (n,) positive budgets
    tau : (n,) RoS targets, all >= 1
    v_bar : scalar valuation cap
    """

    v: np.ndarray
    lam: np.ndarray
    tau: np.ndarray
    v_bar: float

    def __post_init__(self):
        v = _readonly(self.v)
        lam = _readonly(self.lam)
        tau = _readonly(self.tau)
        if v.ndim != 2:
            raise DimensionMismatch(f"v must be 2-D, got shape {v.shape}")
        n, m = v.shape
        if n < 1 or m < 1:
            raise DimensionMismatch("need at least one buyer and one item")
        if lam.shape != (n,) or tau.shape != (n,):
            raise DimensionMismatch(
                f"lam/tau must have shape ({n},), got {lam.shape} and {tau.shape}"
            )
        if not (np.isfinite(v).all() and np.isfinite(lam).all() and np.isfinite(tau).all()):
            raise InvariantViolation("valuations, budgets and RoS targets must be finite")
        if not np.isfinite(self.v_bar) or self.v_bar <= 0:
            raise InvariantViolation(f"v_bar must be positive and finite, got {self.v_bar}")
        if (v < 0).any():
            i, j = np.argwhere(v < 0)[0]
            raise InvariantViolation(f"v[{i}][{j}] = {v[i, j]} violates v >= 0")
        if (v > self.v_bar).any():
            i, j = np.argwhere(v > self.v_bar)[0]
            raise InvariantViolation(f"v[{i}][{j}] = {v[i, j]} violates v <= v_bar = {self.v_bar}")
        dead = np.flatnonzero(v.max(axis=0) <= 0.0)
        if dead.size:
            raise InvariantViolation(
                f"item {dead[0]} has no buyer with strictly positive valuation"
            )
        if (lam <= 0).any():
            i = int(np.argwhere(lam <= 0)[0][0])
            raise InvariantViolation(f"lam[{i}] = {lam[i]} violates lam > 0")
        if (tau < 1).any():
            i = int(np.argwhere(tau < 1)[0][0])
            raise InvariantViolation(f"tau[{i}] = {tau[i]} violates tau >= 1")
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "lam", lam)
        object.__setattr__(self, "tau", tau)
        object.__setattr__(self, "v_bar", float(self.v_bar))

    @property
    def n(self) -> int:
        return self.v.shape[0]

    @property
    def m(self) -> int:
        return self.v.shape[1]


def new_instance(v, lam, tau, v_bar) -> MarketInstance:
    """Validate raw arrays and build a MarketInstance.

    Rejects dimension mismatches, out-of-range entries, and any item
    that no buyer values strictly positively.
    """
    return MarketInstance(v=np.asarray(v, dtype=float), lam=np.asarray(lam, dtype=float),
                          tau=np.asarray(tau, dtype=float), v_bar=float(v_bar))


def example2_instance(eps: float = 0.01) -> MarketInstance:
    """Canonical 2x2 instance whose revenue ratio tends to 1/2 as eps -> 0.

    Buyer 1 values the items (1, 1/eps); buyer 2 values them (0, 1-eps).
    Both carry unit budgets and RoS target 1.
    """
    if not 0 < eps < 1:
        raise BadFamilyParams(f"eps must lie in (0, 1), got {eps}")
    v = [[1.0, 1.0 / eps], [0.0, 1.0 - eps]]
    return new_instance(v, [1.0, 1.0], [1.0, 1.0], v_bar=1.0 / eps)


@dataclass(frozen=True)
class InstanceFamily:
    """Distribution spec for sample_instance.

    values is "uniform" (support (lo, hi)) or "lognormal" (exp(N(mu, sigma^2))
    resampled to stay below v_bar). Both families are continuous with bounded
    density, so sampled columns are tie-free almost surely. Budgets are drawn
    uniformly from budget_range and RoS targets from tau_range.
    """

    values: str = "uniform"
    lo: float = 0.0
    hi: float = 1.0
    mu: float = 0.0
    sigma: float = 1.0
    v_bar: float | None = None
    budget_range: tuple[float, float] = (0.5, 2.0)
    tau_range: tuple[float, float] = (1.0, 2.0)

    def validate(self) -> None:
        if self.values not in ("uniform", "lognormal"):
            raise BadFamilyParams(f"unknown value family {self.values!r}")
        if self.values == "uniform":
            if not (0.0 <= self.lo < self.hi) or not math.isfinite(self.hi):
                raise BadFamilyParams(f"uniform needs 0 <= lo < hi, got ({self.lo}, {self.hi})")
        else:
            if self.sigma <= 0 or not math.isfinite(self.sigma):
                raise BadFamilyParams(f"lognormal needs sigma > 0, got {self.sigma}")
            if self.v_bar is None or self.v_bar <= 0:
                raise BadFamilyParams("lognormal needs a positive v_bar cap")
        blo, bhi = self.budget_range
        if not (0 < blo <= bhi):
            raise BadFamilyParams(f"budget_range must satisfy 0 < lo <= hi, got {self.budget_range}")
        tlo, thi = self.tau_range
        if not (1.0 <= tlo <= thi):
            raise BadFamilyParams(f"tau_range must satisfy 1 <= lo <= hi, got {self.tau_range}")

    @property
    def value_cap(self) -> float:
        return float(self.hi if self.values == "uniform" else self.v_bar)


def sample_instance(n: int, m: int, family: InstanceFamily, seed: int) -> MarketInstance:
    """Draw a reproducible instance: pure function of (n, m, family, seed).

    Valuations land strictly inside (0, v_bar), so bid ties are
    probability-zero events.
    """
    family.validate()
    if n < 1 or m < 1:
        raise BadFamilyParams(f"need n >= 1 and m >= 1, got ({n}, {m})")
    rng = np.random.default_rng(seed)
    v_bar = family.value_cap
    if family.values == "uniform":
        v = rng.uniform(family.lo, family.hi, size=(n, m))
        bad = (v <= family.lo) | (v >= family.hi)  # open-interval guarantee
        while bad.any():
            v[bad] = rng.uniform(family.lo, family.hi, size=int(bad.sum()))
            bad = (v <= family.lo) | (v >= family.hi)
    else:
        v = rng.lognormal(family.mu, family.sigma, size=(n, m))
        bad = (v >= v_bar) | (v <= 0.0)
        while bad.any():
            v[bad] = rng.lognormal(family.mu, family.sigma, size=int(bad.sum()))
            bad = (v >= v_bar) | (v <= 0.0)
    lam = rng.uniform(*family.budget_range, size=n)
    tau = rng.uniform(*family.tau_range, size=n)
    return new_instance(v, lam, tau, v_bar)


@dataclass(frozen=True)
class Allocation:
    """Fractional allocation matrix x with per-item totals at most one."""

    x: np.ndarray
    tol: float = TOL_KKT

    def __post_init__(self):
        x = _readonly(self.x)
        if x.ndim != 2:
            raise DimensionMismatch(f"x must be 2-D, got shape {x.shape}")
        if ((x < -self.tol) | (x > 1.0 + self.tol)).any():
            raise InvariantViolation("allocation entries must lie in [0, 1] up to tolerance")
        if (x.sum(axis=0) > 1.0 + self.tol).any():
            j = int(np.argmax(x.sum(axis=0)))
            raise InvariantViolation(f"item {j} is over-allocated: sum = {x.sum(axis=0)[j]}")
        object.__setattr__(self, "x", x)

    def clamped(self) -> np.ndarray:
        """Entries clipped to [0, 1] for reporting."""
        return np.clip(self.x, 0.0, 1.0)


@dataclass(frozen=True)
class PaymentProfile:
    """Nonnegative per-(buyer, item) payments."""

    t: np.ndarray

    def __post_init__(self):
        t = _readonly(self.t)
        if t.ndim != 2:
            raise DimensionMismatch(f"t must be 2-D, got shape {t.shape}")
        if (t < 0).any():
            i, j = np.argwhere(t < 0)[0]
            raise InvariantViolation(f"t[{i}][{j}] = {t[i, j]} violates t >= 0")
        object.__setattr__(self, "t", t)

    @property
    def totals(self) -> np.ndarray:
        return self.t.sum(axis=1)


@dataclass(frozen=True)
class BuyerOutcome:
    """One buyer's realized value, payment, feasibility flag and utility."""

    value: float
    payment: float
    feasible: bool
    utility: float | _InfeasibleType

    def __post_init__(self):
        if self.feasible:
            if self.utility is INFEASIBLE or self.utility != self.value:
                raise InvariantViolation("feasible outcome must have utility == value")
        elif self.utility is not INFEASIBLE:
            raise InvariantViolation("infeasible outcome must carry the INFEASIBLE sentinel")


def buyer_outcome(inst: MarketInstance, alloc: Allocation, pay: PaymentProfile,
                  i: int, tol_feas: float = TOL_FEAS) -> BuyerOutcome:
    """Evaluate buyer i's outcome against their true budget and RoS target."""
    if not 0 <= i < inst.n:
        raise IndexOutOfRange(f"buyer index {i} outside [0, {inst.n})")
    if alloc.x.shape != inst.v.shape or pay.t.shape != inst.v.shape:
        raise DimensionMismatch("allocation/payment shape differs from instance")
    value = float(inst.v[i] @ alloc.x[i])
    payment = float(pay.t[i].sum())
    within_budget = payment <= inst.lam[i] + tol_feas
    within_ros = value >= inst.tau[i] * payment - tol_feas
    feasible = bool(within_budget and within_ros)
    return BuyerOutcome(value=value, payment=payment, feasible=feasible,
                        utility=value if feasible else INFEASIBLE)


@dataclass(frozen=True)
class CompetitivenessReport:
    """Post-hoc proxy for a thick market.

    A candidate equilibrium fails when some buyer has neither constraint
    binding; a buyer who wins every item outright is reported as a warning
    but does not fail the check on its own.
    """

    passed: bool
    monopolists: tuple[int, ...]
    unbound_buyers: tuple[int, ...]
    notes: tuple[str, ...] = ()


def check_competitive(inst: MarketInstance, sol, tol: float = TOL_KKT) -> CompetitivenessReport:
    """Flag monopolist winners and buyers with no binding constraint.

    sol is any object exposing .x (Allocation) and .payments; equilibrium
    solutions from the dual solver qualify.
    """
    x = sol.x.x if isinstance(sol.x, Allocation) else np.asarray(sol.x, dtype=float)
    payments = np.asarray(sol.payments, dtype=float)
    monopolists = []
    unbound = []
    notes = []
    for i in range(inst.n):
        if (x[i] >= 1.0 - tol).all():
            monopolists.append(i)
        value = float(inst.v[i] @ x[i])
        budget_binding = payments[i] >= inst.lam[i] - TOL_FEAS
        ros_binding = value <= inst.tau[i] * payments[i] + TOL_FEAS
        if not budget_binding and not ros_binding:
            unbound.append(i)
    for i in monopolists:
        notes.append(f"buyer {i} wins every item in full")
    for i in unbound:
        notes.append(f"buyer {i} has neither budget nor RoS binding")
    return CompetitivenessReport(passed=not unbound, monopolists=tuple(monopolists),
                                 unbound_buyers=tuple(unbound), notes=tuple(notes))


# ---------------------------------------------------------------------------
# instance file format: {n, m, v, lambda, tau, v_bar}, plain finite decimals
# ---------------------------------------------------------------------------

def instance_to_dict(inst: MarketInstance) -> dict:
    return {
        "n": inst.n,
        "m": inst.m,
        "v": [[float(x) for x in row] for row in inst.v],
        "lambda": [float(x) for x in inst.lam],
        "tau": [float(x) for x in inst.tau],
        "v_bar": float(inst.v_bar),
    }


def instance_from_dict(data: dict) -> MarketInstance:
    try:
        v = np.asarray(data["v"], dtype=float)
        lam = np.asarray(data["lambda"], dtype=float)
        tau = np.asarray(data["tau"], dtype=float)
        v_bar = float(data["v_bar"])
    except (KeyError, TypeError, ValueError) as exc:
        raise InvariantViolation(f"malformed instance payload: {exc}") from exc
    inst = new_instance(v, lam, tau, v_bar)
    if "n" in data and int(data["n"]) != inst.n:
        raise DimensionMismatch(f"declared n = {data['n']} but v has {inst.n} rows")
    if "m" in data and int(data["m"]) != inst.m:
        raise DimensionMismatch(f"declared m = {data['m']} but v has {inst.m} columns")
    return inst


def save_instance(inst: MarketInstance, path) -> None:
    with open(path, "w") as fh:
        json.dump(instance_to_dict(inst), fh, allow_nan=False, indent=1)
        fh.write("\n")


def load_instance(path) -> MarketInstance:
    with open(path) as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise InvariantViolation(f"instance file is not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise InvariantViolation("instance file must hold a JSON object")
    return instance_from_dict(data)
