"""Day-ahead storage scheduling against a time-of-use tariff.

The station's bill is sum over slots of (EV load + ESS power) * price * dt.
Scheduling the ESS is a linear program: one signed power variable per slot
(positive while charging), box power limits, the stored-energy recursion
keeping the ESS state of charge in [0, 1], an optional terminal condition
(end at least as full as it started) and an optional non-export constraint
(the station never feeds energy back to the grid, enabled by default).

``solve_schedule`` uses scipy's HiGHS backend; ``brute_force_schedule`` is
the independent enumeration oracle used to cross-check it on small
instances.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import linprog

from .errors import ConfigurationError, DataError, SolverError
from .forecast import LoadProfile

MINUTES_PER_DAY = 1440.0

#: Feasibility tolerance of the post-solve verification pass.
VERIFY_TOL = 1e-9


@dataclass(frozen=True)
class TariffSchedule:
    """Daily time-of-use price windows: (start_min, end_min, price_per_kwh).

    Windows must tile [0, 1440) exactly; the schedule repeats for multi-day
    horizons.
    """

    windows: tuple[tuple[float, float, float], ...]

    def __post_init__(self):
        if not self.windows:
            raise ConfigurationError("tariff needs at least one window")
        ordered = sorted(self.windows, key=lambda w: w[0])
        if ordered[0][0] != 0.0 or ordered[-1][1] != MINUTES_PER_DAY:
            raise ConfigurationError("tariff windows must cover [0, 1440) exactly")
        for (s0, e0, _), (s1, _, _) in zip(ordered, ordered[1:]):
            if e0 != s1:
                raise ConfigurationError(
                    f"tariff windows must tile without gaps/overlaps near minute {e0}"
                )
        if any(price <= 0 for _, _, price in ordered):
            raise ConfigurationError("tariff prices must be positive")
        object.__setattr__(self, "windows", tuple(ordered))

    def price_at(self, minute_of_day: float) -> float:
        m = minute_of_day % MINUTES_PER_DAY
        for start, end, price in self.windows:
            if start <= m < end:
                return price
        raise DataError(f"minute {minute_of_day} not covered by tariff")  # unreachable

    def slot_prices(self, slot_minutes: float, n_slots: int) -> np.ndarray:
        """Per-slot prices for a horizon of ``n_slots`` starting at minute 0.

        Each slot must lie inside a single window (grid mismatch otherwise).
        """
        prices = np.empty(n_slots)
        for i in range(n_slots):
            t0 = (i * slot_minutes) % MINUTES_PER_DAY
            t1 = t0 + slot_minutes
            for start, end, price in self.windows:
                if start <= t0 and t1 <= end:
                    prices[i] = price
                    break
            else:
                raise DataError(
                    f"slot starting at minute {i * slot_minutes} straddles a tariff boundary"
                )
        return prices

    def to_list(self) -> list[list[float]]:
        return [[s, e, p] for s, e, p in self.windows]

    @classmethod
    def from_list(cls, rows) -> "TariffSchedule":
        return cls(tuple((float(s), float(e), float(p)) for s, e, p in rows))


#: Peak-valley tariff used by the bundled case-study configuration (per kWh).
DEFAULT_TARIFF = TariffSchedule((
    (0.0, 480.0, 0.3338),      # 00:00-08:00 valley
    (480.0, 840.0, 0.6380),    # 08:00-14:00 shoulder
    (840.0, 1020.0, 1.0282),   # 14:00-17:00 peak
    (1020.0, 1140.0, 0.6380),  # 17:00-19:00 shoulder
    (1140.0, 1320.0, 1.0282),  # 19:00-22:00 peak
    (1320.0, 1440.0, 0.6380),  # 22:00-24:00 shoulder
))


@dataclass
class EssParams:
    """Station storage parameters."""

    c_ess_kwh: float = 5445.0
    p_charge_max_kw: float = 545.0
    p_discharge_max_kw: float = 545.0
    soc_init: float = 0.5
    require_terminal_soc: bool = True
    allow_export: bool = False

    def validate(self) -> None:
        if self.c_ess_kwh < 0:
            raise ConfigurationError("c_ess_kwh must be >= 0")
        if self.p_charge_max_kw < 0 or self.p_discharge_max_kw < 0:
            raise ConfigurationError("ESS power limits must be >= 0")
        if not 0.0 <= self.soc_init <= 1.0:
            raise ConfigurationError("soc_init must be in [0, 1]")


@dataclass
class SchedulePlan:
    """A solved (or candidate) ESS schedule with its cost accounting.

    ``p_ess_kw`` is signed: positive charging, negative discharging.
    ``soc_ess[i]`` is the state of charge after slot i's ESS power has been
    applied. Per-day figures are filled when the horizon is a whole number
    of days.
    """

    slot_start_min: np.ndarray
    price: np.ndarray
    p_ev_kw: np.ndarray
    p_ess_kw: np.ndarray
    p_ch_kw: np.ndarray
    soc_ess: np.ndarray
    dt_hours: float
    cost_with_ess: float
    cost_baseline: float
    saving_fraction: float
    day_costs_with_ess: list[float] = field(default_factory=list)
    day_costs_baseline: list[float] = field(default_factory=list)

    @property
    def n_slots(self) -> int:
        return len(self.p_ess_kw)

    def ess_energy_by_price(self) -> dict[float, float]:
        """Net ESS energy (kWh, signed) bought per distinct price level."""
        out: dict[float, float] = {}
        for price, p in zip(self.price, self.p_ess_kw):
            out[float(price)] = out.get(float(price), 0.0) + float(p) * self.dt_hours
        return out


def _make_plan(
    p_ev: np.ndarray,
    prices: np.ndarray,
    p_ess: np.ndarray,
    dt_hours: float,
    ess: EssParams,
    slot_start_min: np.ndarray | None = None,
) -> SchedulePlan:
    if ess.c_ess_kwh > 0:
        soc = ess.soc_init + dt_hours * np.cumsum(p_ess) / ess.c_ess_kwh
    else:
        soc = np.full(len(p_ess), ess.soc_init)
    p_ch = p_ev + p_ess
    cost = float(np.sum(p_ch * prices) * dt_hours)
    baseline = float(np.sum(p_ev * prices) * dt_hours)
    saving = (baseline - cost) / baseline if baseline > 0 else 0.0
    if slot_start_min is None:
        slot_start_min = np.arange(len(p_ess)) * dt_hours * 60.0

    plan = SchedulePlan(
        slot_start_min=np.asarray(slot_start_min),
        price=prices,
        p_ev_kw=p_ev,
        p_ess_kw=p_ess,
        p_ch_kw=p_ch,
        soc_ess=soc,
        dt_hours=dt_hours,
        cost_with_ess=cost,
        cost_baseline=baseline,
        saving_fraction=saving,
    )
    slots_per_day = 24.0 / dt_hours
    if slots_per_day == int(slots_per_day) and plan.n_slots % int(slots_per_day) == 0:
        spd = int(slots_per_day)
        for d in range(plan.n_slots // spd):
            sl = slice(d * spd, (d + 1) * spd)
            plan.day_costs_with_ess.append(float(np.sum(p_ch[sl] * prices[sl]) * dt_hours))
            plan.day_costs_baseline.append(float(np.sum(p_ev[sl] * prices[sl]) * dt_hours))
    return plan


def verify_plan(plan: SchedulePlan, ess: EssParams, tol: float = VERIFY_TOL) -> None:
    """Check every feasibility condition of a plan; SolverError on failure.

    Power and SOC bounds are checked to ``tol`` (scaled by the power limits
    for the power checks); the stored-energy recursion is re-derived from
    the ESS powers and compared slot by slot.
    """
    power_scale = max(1.0, ess.p_charge_max_kw, ess.p_discharge_max_kw)
    p_tol = tol * power_scale

    if np.any(plan.p_ess_kw > ess.p_charge_max_kw + p_tol):
        raise SolverError("ESS charging power exceeds its limit")
    if np.any(plan.p_ess_kw < -ess.p_discharge_max_kw - p_tol):
        raise SolverError("ESS discharging power exceeds its limit")
    if not ess.allow_export and np.any(plan.p_ch_kw < -max(p_tol, tol * np.max(np.abs(plan.p_ev_kw), initial=1.0))):
        raise SolverError("station draw is negative while export is disabled")
    if np.max(np.abs(plan.p_ch_kw - (plan.p_ev_kw + plan.p_ess_kw))) > p_tol:
        raise SolverError("station draw does not equal EV load plus ESS power")

    if ess.c_ess_kwh > 0:
        soc_expected = ess.soc_init + plan.dt_hours * np.cumsum(plan.p_ess_kw) / ess.c_ess_kwh
        if np.max(np.abs(plan.soc_ess - soc_expected)) > tol:
            raise SolverError("SOC recursion mismatch")
        if np.any(plan.soc_ess < -tol) or np.any(plan.soc_ess > 1.0 + tol):
            raise SolverError("ESS state of charge out of [0, 1]")
        if ess.require_terminal_soc and plan.soc_ess[-1] < ess.soc_init - tol:
            raise SolverError("terminal state of charge below its floor")
    else:
        if np.any(np.abs(plan.p_ess_kw) > p_tol):
            raise SolverError("zero-capacity ESS must stay idle")


# ---------------------------------------------------------------------------
# Costs and solvers
# ---------------------------------------------------------------------------

def baseline_cost(p_ev: LoadProfile, tariff: TariffSchedule) -> float:
    """Electricity bill with the ESS idle."""
    prices = tariff.slot_prices(p_ev.slot_minutes, len(p_ev.power_kw))
    return float(np.sum(p_ev.power_kw * prices) * p_ev.slot_minutes / 60.0)


def solve_schedule_slots(
    p_ev_kw: np.ndarray,
    prices: np.ndarray,
    dt_hours: float,
    ess: EssParams,
    slot_start_min: np.ndarray | None = None,
) -> SchedulePlan:
    """Solve the scheduling LP on an explicit slot grid."""
    ess.validate()
    p_ev = np.asarray(p_ev_kw, dtype=float)
    prices = np.asarray(prices, dtype=float)
    n = len(p_ev)
    if len(prices) != n:
        raise DataError("price vector and load profile lengths differ")
    if np.any(p_ev < 0):
        raise DataError("EV load must be nonnegative")

    if ess.c_ess_kwh == 0 or (ess.p_charge_max_kw == 0 and ess.p_discharge_max_kw == 0):
        plan = _make_plan(p_ev, prices, np.zeros(n), dt_hours, ess, slot_start_min)
        verify_plan(plan, ess)
        return plan

    lb = np.full(n, -ess.p_discharge_max_kw)
    if not ess.allow_export:
        lb = np.maximum(lb, -p_ev)
    ub = np.full(n, ess.p_charge_max_kw)

    # Stored energy after slot i: c*soc_init + dt * cumsum(p_ess)[i] in [0, c].
    lower_tri = np.tril(np.ones((n, n)))
    a_rows = [dt_hours * lower_tri, -dt_hours * lower_tri]
    b_rows = [
        np.full(n, (1.0 - ess.soc_init) * ess.c_ess_kwh),
        np.full(n, ess.soc_init * ess.c_ess_kwh),
    ]
    if ess.require_terminal_soc:
        a_rows.append(-dt_hours * np.ones((1, n)))
        b_rows.append(np.zeros(1))

    res = linprog(
        c=prices * dt_hours,
        A_ub=np.vstack(a_rows),
        b_ub=np.concatenate(b_rows),
        bounds=list(zip(lb, ub)),
        method="highs",
    )
    if res.status != 0:
        raise SolverError(f"LP solve failed with status {res.status}: {res.message}")

    p_ess = np.clip(res.x, lb, ub)
    plan = _make_plan(p_ev, prices, p_ess, dt_hours, ess, slot_start_min)
    verify_plan(plan, ess)
    return plan


def solve_schedule(p_ev: LoadProfile, tariff: TariffSchedule, ess: EssParams) -> SchedulePlan:
    """Minimize the station's bill for one load profile under a tariff."""
    prices = tariff.slot_prices(p_ev.slot_minutes, len(p_ev.power_kw))
    return solve_schedule_slots(
        p_ev.power_kw,
        prices,
        p_ev.slot_minutes / 60.0,
        ess,
        slot_start_min=np.asarray(p_ev.slot_start_min),
    )


def multi_day_schedule(
    day_profiles: list[LoadProfile], tariff: TariffSchedule, ess: EssParams
) -> SchedulePlan:
    """One LP across consecutive days with SOC carried over the boundaries."""
    if not day_profiles:
        raise DataError("need at least one day of load")
    slot = day_profiles[0].slot_minutes
    for profile in day_profiles:
        if profile.slot_minutes != slot:
            raise DataError("all days must share one slot grid")
        if profile.horizon_minutes != MINUTES_PER_DAY:
            raise DataError("each profile must cover exactly one day")

    p_ev = np.concatenate([p.power_kw for p in day_profiles])
    day_prices = tariff.slot_prices(slot, int(MINUTES_PER_DAY / slot))
    prices = np.tile(day_prices, len(day_profiles))
    starts = np.arange(len(p_ev)) * slot
    return solve_schedule_slots(p_ev, prices, slot / 60.0, ess, slot_start_min=starts)


def brute_force_schedule(
    p_ev: LoadProfile,
    tariff: TariffSchedule,
    ess: EssParams,
    power_levels,
    max_slots: int = 8,
) -> SchedulePlan:
    """Exhaustive oracle over a discrete ESS power grid (small instances only)."""
    ess.validate()
    n = len(p_ev.power_kw)
    if n > max_slots:
        raise ConfigurationError(f"brute force limited to {max_slots} slots, got {n}")
    levels = sorted({float(v) for v in power_levels})
    if 0.0 not in levels:
        raise ConfigurationError("power_levels must include 0")

    prices = tariff.slot_prices(p_ev.slot_minutes, n)
    dt = p_ev.slot_minutes / 60.0
    load = np.asarray(p_ev.power_kw, dtype=float)

    grid = np.array(list(itertools.product(levels, repeat=n)))  # (L^n, n)

    lb = np.full(n, -ess.p_discharge_max_kw)
    if not ess.allow_export:
        lb = np.maximum(lb, -load)
    ub = np.full(n, ess.p_charge_max_kw)
    eps = VERIFY_TOL * max(1.0, ess.c_ess_kwh)

    feasible = np.all((grid >= lb - eps) & (grid <= ub + eps), axis=1)
    energy = ess.soc_init * ess.c_ess_kwh + dt * np.cumsum(grid, axis=1)
    feasible &= np.all((energy >= -eps) & (energy <= ess.c_ess_kwh + eps), axis=1)
    if ess.require_terminal_soc:
        feasible &= energy[:, -1] >= ess.soc_init * ess.c_ess_kwh - eps
    if not np.any(feasible):
        raise SolverError("no feasible assignment on the discrete grid")

    costs = (grid + load) @ (prices * dt)
    costs[~feasible] = np.inf
    best = grid[int(np.argmin(costs))]
    return _make_plan(load, prices, best, dt, ess, np.asarray(p_ev.slot_start_min))
