"""Monte-Carlo forecast of quick-charge station load from trip-chain models.

Each vehicle simulates two chained days on a 48 h axis (the first day is
warm-up; only the final 24 h are reported). Per day it draws a chain type,
trip-1 ending time, per-trip lengths and average velocities, and midway
dwell durations from the fitted densities, then propagates battery state
along the chain. Whenever the state of charge would drop below the reserve
after the next trip, the vehicle quick-charges at the current site:
duration is capped by the stay and by the time to reach full charge.

Reproducibility contract: vehicle ``i`` always consumes the RNG substream
derived from (master seed, i), and partial results are reduced in a fixed
block order, so results are bit-identical for any worker count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import NamedTuple, Sequence

import numpy as np

from .errors import ConfigurationError
from .kde import KdeModel, fit_kde
from .survey import (
    CHAIN_TYPES,
    FEATURE_DWELL,
    FEATURE_END_TIME,
    FEATURE_LENGTH,
    FEATURE_VELOCITY,
    SITE_CLASSES,
    ChainFeatureDataset,
    ChainType,
    SiteClass,
    chain_type_from_label,
    chain_type_proportions,
)

DAY_MINUTES = 1440.0
HORIZON_MINUTES = 2880.0  # two simulated days
_VEHICLE_BLOCK = 256      # fixed reduction granularity, independent of workers
_MIN_VELOCITY_KMH = 1.0
_VELOCITY_REDRAW_CAP = 100


@dataclass
class FleetConfig:
    """Inputs of the fleet simulation.

    ``q_pro`` weights the five site-class load curves into the station
    composite (share of each site function in the station's service area).
    """

    p_own: float = 0.5
    n_ev: int = 10000
    p_charging_kw: float = 60.0
    c_ev_kwh: float = 40.0
    u_kwh_per_km: float = 0.2
    q_pro: tuple[float, ...] = (0.04, 0.1, 0.2, 0.1, 0.1)
    soc_reserve: float = 0.3
    slot_minutes: int = 15
    seed: int = 20170

    def validate(self) -> None:
        if self.n_ev < 0:
            raise ConfigurationError("n_ev must be >= 0")
        if self.p_charging_kw <= 0:
            raise ConfigurationError("p_charging_kw must be > 0")
        if self.c_ev_kwh <= 0:
            raise ConfigurationError("c_ev_kwh must be > 0")
        if self.u_kwh_per_km <= 0:
            raise ConfigurationError("u_kwh_per_km must be > 0")
        if not 0.0 <= self.p_own <= 1.0:
            raise ConfigurationError("p_own must be in [0, 1]")
        if len(self.q_pro) != len(SITE_CLASSES):
            raise ConfigurationError("q_pro must have one weight per site class")
        if any(not 0.0 <= q <= 1.0 for q in self.q_pro):
            raise ConfigurationError("q_pro entries must be in [0, 1]")
        if not 0.0 <= self.soc_reserve < 1.0:
            raise ConfigurationError("soc_reserve must be in [0, 1)")
        if self.slot_minutes <= 0 or 1440 % self.slot_minutes != 0:
            raise ConfigurationError("slot_minutes must divide 1440")

    @property
    def dt_hours(self) -> float:
        return self.slot_minutes / 60.0


class ChargeEvent(NamedTuple):
    site_index: int     # index into SITE_CLASSES
    start_min: float    # absolute minute on the simulation axis
    duration_min: float


@dataclass
class LoadProfile:
    """Average power per uniform slot, in kW."""

    slot_start_min: np.ndarray
    power_kw: np.ndarray
    slot_minutes: int

    @property
    def horizon_minutes(self) -> float:
        return float(len(self.power_kw) * self.slot_minutes)

    def energy_kwh(self) -> float:
        return float(self.power_kw.sum() * self.slot_minutes / 60.0)


@dataclass
class SiteLoadBundle:
    """One load curve per site class plus the station composite."""

    site_profiles: tuple[LoadProfile, ...]
    station: LoadProfile
    q_pro: tuple[float, ...]

    def profile(self, site: SiteClass) -> LoadProfile:
        return self.site_profiles[site.index]


def station_composite(q_pro: Sequence[float], site_power: np.ndarray) -> np.ndarray:
    """Weighted sum of the five site curves, evaluated slot-wise.

    Fixed expression (no BLAS dispatch) so the CSV round-trip of station =
    sum(q_i * site_i) is reproducible bit-for-bit.
    """
    out = q_pro[0] * site_power[0]
    for i in range(1, len(q_pro)):
        out = out + q_pro[i] * site_power[i]
    return out


# ---------------------------------------------------------------------------
# Battery-state primitives
# ---------------------------------------------------------------------------

def soc_after_trip(
    soc: float, length_km: float, u_kwh_per_km: float, c_ev_kwh: float
) -> tuple[float, bool]:
    """State of charge after driving ``length_km``; clamps at 0.

    Returns (new_soc, infeasible) where infeasible flags a trip whose
    energy need exceeded the remaining charge.
    """
    new_soc = soc - u_kwh_per_km * length_km / c_ev_kwh
    if new_soc < 0.0:
        return 0.0, True
    return new_soc, False


def needs_charge(
    soc: float,
    next_length_km: float,
    u_kwh_per_km: float,
    c_ev_kwh: float,
    reserve: float,
) -> bool:
    """True when the next trip would leave less than the reserve fraction."""
    return soc - u_kwh_per_km * next_length_km / c_ev_kwh <= reserve


def charge_duration_hours(
    soc: float, t_stay_hours: float, c_ev_kwh: float, p_charging_kw: float
) -> float:
    """Charging time: the stay, capped by the time to reach full charge."""
    return min(t_stay_hours, (1.0 - soc) * c_ev_kwh / p_charging_kw)


# ---------------------------------------------------------------------------
# Fitted model bundle
# ---------------------------------------------------------------------------

def _feature_support(feature: str, index: int, max_value: float) -> tuple[float, float]:
    if feature == FEATURE_END_TIME and index == 1:
        # Trip 1 ends within its day; widen in whole days only if the data
        # itself ran past midnight.
        hi = DAY_MINUTES * math.ceil(max(max_value, 1.0) / DAY_MINUTES)
        return (0.0, hi)
    return (0.0, math.inf)


class ModelSet:
    """Fitted densities for every (chain type, feature, index) in use."""

    def __init__(self, proportions: np.ndarray, models: dict[tuple[ChainType, str, int], KdeModel]):
        self.proportions = np.asarray(proportions, dtype=float)
        self.models = models
        if self.proportions.shape != (len(CHAIN_TYPES),):
            raise ConfigurationError("proportions must cover the full chain-type enumeration")

    @classmethod
    def from_dataset(cls, dataset: ChainFeatureDataset) -> "ModelSet":
        proportions = chain_type_proportions(dataset)
        models: dict[tuple[ChainType, str, int], KdeModel] = {}
        for ctype, count in dataset.counts.items():
            if count <= 0:
                continue
            for feature, index in _required_keys(ctype):
                samples = dataset.get(ctype, feature, index)
                if samples is None or len(samples) == 0:
                    raise ConfigurationError(
                        f"dataset lacks samples for {ctype.label} {feature} #{index}"
                    )
                support = _feature_support(feature, index, float(np.max(samples)))
                models[(ctype, feature, index)] = fit_kde(samples, support)
        return cls(proportions, models)

    def validate(self) -> None:
        """Every chain type with positive probability must be fully modelled."""
        for i, p in enumerate(self.proportions):
            if p <= 0:
                continue
            ctype = CHAIN_TYPES[i]
            for key in _required_keys(ctype):
                if (ctype, *key) not in self.models:
                    raise ConfigurationError(
                        f"missing fitted model for {ctype.label} {key[0]} #{key[1]}"
                    )

    def get(self, ctype: ChainType, feature: str, index: int) -> KdeModel:
        try:
            return self.models[(ctype, feature, index)]
        except KeyError:
            raise ConfigurationError(
                f"missing fitted model for {ctype.label} {feature} #{index}"
            ) from None

    def save(self, path: str | Path) -> None:
        doc = {
            "schema": "fitted-models/v1",
            "proportions": [float(p) for p in self.proportions],
            "models": {
                f"{ctype.label}__{feature}__{index}": model.to_dict()
                for (ctype, feature, index), model in self.models.items()
            },
        }
        with open(path, "w") as fh:
            json.dump(doc, fh)

    @classmethod
    def load(cls, path: str | Path) -> "ModelSet":
        with open(path) as fh:
            doc = json.load(fh)
        models = {}
        for key, data in doc["models"].items():
            label, feature, index = key.split("__")
            models[(chain_type_from_label(label), feature, int(index))] = KdeModel.from_dict(data)
        return cls(np.asarray(doc["proportions"], dtype=float), models)


def _required_keys(ctype: ChainType) -> list[tuple[str, int]]:
    keys: list[tuple[str, int]] = [(FEATURE_END_TIME, 1)]
    for t in range(1, ctype.n_trips + 1):
        keys.append((FEATURE_LENGTH, t))
        keys.append((FEATURE_VELOCITY, t))
    for m in range(1, ctype.n_trips):
        keys.append((FEATURE_DWELL, m))
    return keys


# ---------------------------------------------------------------------------
# Per-vehicle simulation
# ---------------------------------------------------------------------------

def vehicle_rng(seed: int, vehicle_index: int) -> np.random.Generator:
    """Independent, reproducible substream for one vehicle."""
    return np.random.default_rng(
        np.random.SeedSequence(entropy=seed, spawn_key=(vehicle_index,))
    )


class _SimChain(NamedTuple):
    chain_type: ChainType
    end1_min: float
    lengths_km: tuple[float, ...]
    durations_min: tuple[float, ...]
    dwells_min: tuple[float, ...]


def _draw_chain(
    rng: np.random.Generator,
    cum_proportions: np.ndarray,
    last_positive: int,
    models: ModelSet,
) -> _SimChain:
    """Sample one day's chain: type, trip-1 end, lengths/velocities, dwells."""
    idx = int(np.searchsorted(cum_proportions, rng.random(), side="right"))
    # Cumulative rounding can leave the total a hair under 1; a tail draw
    # must still land on a type that actually has models.
    ctype = CHAIN_TYPES[min(idx, last_positive)]

    end1 = models.get(ctype, FEATURE_END_TIME, 1).sample(rng)
    lengths = []
    durations = []
    for t in range(1, ctype.n_trips + 1):
        length = models.get(ctype, FEATURE_LENGTH, t).sample(rng)
        velocity_model = models.get(ctype, FEATURE_VELOCITY, t)
        velocity = velocity_model.sample(rng)
        redraws = 0
        while velocity <= _MIN_VELOCITY_KMH and redraws < _VELOCITY_REDRAW_CAP:
            velocity = velocity_model.sample(rng)
            redraws += 1
        if velocity <= _MIN_VELOCITY_KMH:
            velocity = _MIN_VELOCITY_KMH
        lengths.append(length)
        durations.append(60.0 * length / velocity)
    dwells = tuple(
        models.get(ctype, FEATURE_DWELL, m).sample(rng) for m in range(1, ctype.n_trips)
    )
    return _SimChain(ctype, end1, tuple(lengths), tuple(durations), dwells)


class VehicleSim(NamedTuple):
    events: list[ChargeEvent]
    soc_min: float
    soc_max: float
    infeasible_trips: int


def simulate_vehicle(
    config: FleetConfig,
    proportions: np.ndarray,
    models: ModelSet,
    rng: np.random.Generator,
) -> VehicleSim:
    """Simulate one vehicle's two days and return its station charge events.

    Draw order (fixed for reproducibility): post ownership, initial SOC
    (consumed even for post owners so that changing ``p_own`` does not shift
    later draws), then one chain per day plus a lookahead chain whose first
    trip settles the last evening's home-charging decision.
    """
    u = config.u_kwh_per_km
    c_ev = config.c_ev_kwh
    p_chg = config.p_charging_kw
    reserve = config.soc_reserve

    owner = rng.random() < config.p_own
    soc_draw = rng.random()
    soc = 1.0 if owner else 0.5 + 0.5 * soc_draw

    positive = np.flatnonzero(np.asarray(proportions) > 0)
    if positive.size == 0:
        raise ConfigurationError("chain-type proportions have no positive mass")
    cum = np.cumsum(proportions)
    chains = [_draw_chain(rng, cum, int(positive[-1]), models) for _ in range(3)]

    events: list[ChargeEvent] = []
    soc_min = soc
    soc_max = soc
    infeasible = 0

    for day in (0, 1):
        chain = chains[day]
        n = chain.chain_type.n_trips
        midway = chain.chain_type.midway
        end_t = DAY_MINUTES * day + chain.end1_min
        for t in range(n):
            if t > 0:
                end_t = end_t + chain.dwells_min[t - 1] + chain.durations_min[t]
            soc, flag = soc_after_trip(soc, chain.lengths_km[t], u, c_ev)
            infeasible += flag
            soc_min = min(soc_min, soc)
            if t < n - 1:
                # Midway site: arrival at end_t, stay dwells_min[t].
                if needs_charge(soc, chain.lengths_km[t + 1], u, c_ev, reserve):
                    dur_h = charge_duration_hours(soc, chain.dwells_min[t] / 60.0, c_ev, p_chg)
                    if dur_h > 0:
                        events.append(ChargeEvent(midway[t].index, end_t, dur_h * 60.0))
                        soc = min(1.0, soc + dur_h * p_chg / c_ev)
                        soc_max = max(soc_max, soc)

        # Home arrival.
        if owner:
            soc = 1.0  # private post, recharged overnight off-station
            soc_max = 1.0
        else:
            nxt = chains[day + 1]
            next_start = DAY_MINUTES * (day + 1) + nxt.end1_min - nxt.durations_min[0]
            stay_min = max(0.0, next_start - end_t)
            if needs_charge(soc, nxt.lengths_km[0], u, c_ev, reserve):
                dur_h = charge_duration_hours(soc, stay_min / 60.0, c_ev, p_chg)
                if dur_h > 0:
                    events.append(ChargeEvent(SiteClass.H.index, end_t, dur_h * 60.0))
                    soc = min(1.0, soc + dur_h * p_chg / c_ev)
                    soc_max = max(soc_max, soc)

    return VehicleSim(events, soc_min, soc_max, infeasible)


# ---------------------------------------------------------------------------
# Load accumulation
# ---------------------------------------------------------------------------

def accumulate_loads(
    events: Sequence[ChargeEvent],
    config: FleetConfig,
    horizon_minutes: float = HORIZON_MINUTES,
    report_last_minutes: float | None = None,
) -> SiteLoadBundle:
    """Turn charge events into per-site and composite load curves.

    Events are truncated at the horizon and prorated within partially
    covered slots. When ``report_last_minutes`` is set, only the trailing
    window is returned, with slot labels counted from the window start.
    """
    site_power = _accumulate_site_power(events, config, horizon_minutes)
    return _bundle_from_site_power(site_power, config, horizon_minutes, report_last_minutes)


def _accumulate_site_power(
    events: Sequence[ChargeEvent], config: FleetConfig, horizon_minutes: float
) -> np.ndarray:
    slot = float(config.slot_minutes)
    n_slots = int(round(horizon_minutes / slot))
    if abs(n_slots * slot - horizon_minutes) > 1e-9:
        raise ConfigurationError("horizon must be a whole number of slots")
    power = np.zeros((len(SITE_CLASSES), n_slots))
    p_chg = config.p_charging_kw

    for site_index, start, duration in events:
        a = max(0.0, start)
        b = min(start + duration, horizon_minutes)
        if b <= a:
            continue
        i0 = int(a // slot)
        i1 = min(int(math.ceil(b / slot)), n_slots)
        for i in range(i0, i1):
            overlap = min(b, (i + 1) * slot) - max(a, i * slot)
            if overlap > 0:
                power[site_index, i] += p_chg * (overlap / slot)
    return power


def _bundle_from_site_power(
    site_power: np.ndarray,
    config: FleetConfig,
    horizon_minutes: float,
    report_last_minutes: float | None,
) -> SiteLoadBundle:
    slot = config.slot_minutes
    if report_last_minutes is not None:
        n_report = int(round(report_last_minutes / slot))
        site_power = site_power[:, site_power.shape[1] - n_report:]
    starts = np.arange(site_power.shape[1], dtype=int) * slot
    station_power = station_composite(config.q_pro, site_power)
    profiles = tuple(
        LoadProfile(starts.copy(), site_power[i].copy(), slot)
        for i in range(len(SITE_CLASSES))
    )
    station = LoadProfile(starts.copy(), station_power, slot)
    return SiteLoadBundle(profiles, station, tuple(config.q_pro))


# ---------------------------------------------------------------------------
# Fleet run
# ---------------------------------------------------------------------------

@dataclass
class ForecastResult:
    bundle: SiteLoadBundle
    n_vehicles: int
    n_events: int
    infeasible_trips: int
    soc_min: float | None
    soc_max: float | None
    event_energy_kwh: float
    site_energy_full_kwh: tuple[float, ...]
    seed: int

    def summary(self) -> dict:
        reported = {
            f"site_energy_{site.value}_kwh": self.bundle.site_profiles[i].energy_kwh()
            for i, site in enumerate(SITE_CLASSES)
        }
        return {
            "n_vehicles": self.n_vehicles,
            "n_events": self.n_events,
            "infeasible_trips": self.infeasible_trips,
            "soc_min": self.soc_min,
            "soc_max": self.soc_max,
            "event_energy_kwh": self.event_energy_kwh,
            "site_energy_full_horizon_kwh": {
                site.value: e for site, e in zip(SITE_CLASSES, self.site_energy_full_kwh)
            },
            "reported_window": reported,
            "station_energy_kwh": self.bundle.station.energy_kwh(),
            "seed": self.seed,
        }


class _BlockResult(NamedTuple):
    site_power: np.ndarray
    n_events: int
    infeasible: int
    soc_min: float
    soc_max: float
    event_energy_kwh: float


def _simulate_block(
    config: FleetConfig,
    models: ModelSet,
    first_vehicle: int,
    last_vehicle: int,
) -> _BlockResult:
    proportions = models.proportions
    events: list[ChargeEvent] = []
    infeasible = 0
    soc_min = math.inf
    soc_max = -math.inf
    for v in range(first_vehicle, last_vehicle):
        sim = simulate_vehicle(config, proportions, models, vehicle_rng(config.seed, v))
        events.extend(sim.events)
        infeasible += sim.infeasible_trips
        soc_min = min(soc_min, sim.soc_min)
        soc_max = max(soc_max, sim.soc_max)

    site_power = _accumulate_site_power(events, config, HORIZON_MINUTES)
    energy = sum(
        config.p_charging_kw
        * (min(e.start_min + e.duration_min, HORIZON_MINUTES) - max(0.0, e.start_min))
        / 60.0
        for e in events
        if e.start_min < HORIZON_MINUTES and e.start_min + e.duration_min > 0
    )
    return _BlockResult(site_power, len(events), infeasible, soc_min, soc_max, energy)


def run_forecast(
    config: FleetConfig,
    models: ModelSet | ChainFeatureDataset,
    threads: int = 1,
) -> ForecastResult:
    """Simulate the fleet over 48 h and report the final 24 h load bundle.

    ``models`` may be a fitted :class:`ModelSet` or a raw feature dataset
    (fitted on the fly). The result is independent of ``threads``.
    """
    config.validate()
    if isinstance(models, ChainFeatureDataset):
        models = ModelSet.from_dataset(models)
    models.validate()

    n_blocks = (config.n_ev + _VEHICLE_BLOCK - 1) // _VEHICLE_BLOCK
    blocks = [
        (i * _VEHICLE_BLOCK, min((i + 1) * _VEHICLE_BLOCK, config.n_ev))
        for i in range(n_blocks)
    ]

    if threads > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(
                pool.map(lambda b: _simulate_block(config, models, b[0], b[1]), blocks)
            )
    else:
        results = [_simulate_block(config, models, lo, hi) for lo, hi in blocks]

    n_slots = int(round(HORIZON_MINUTES / config.slot_minutes))
    total_power = np.zeros((len(SITE_CLASSES), n_slots))
    n_events = 0
    infeasible = 0
    soc_min = math.inf
    soc_max = -math.inf
    event_energy = 0.0
    for block in results:  # fixed block order: reduction is worker-independent
        total_power += block.site_power
        n_events += block.n_events
        infeasible += block.infeasible
        soc_min = min(soc_min, block.soc_min)
        soc_max = max(soc_max, block.soc_max)
        event_energy += block.event_energy_kwh

    dt_h = config.slot_minutes / 60.0
    site_energy_full = tuple(float(total_power[i].sum() * dt_h) for i in range(len(SITE_CLASSES)))
    bundle = _bundle_from_site_power(
        total_power, config, HORIZON_MINUTES, report_last_minutes=DAY_MINUTES
    )
    return ForecastResult(
        bundle=bundle,
        n_vehicles=config.n_ev,
        n_events=n_events,
        infeasible_trips=infeasible,
        soc_min=None if math.isinf(soc_min) else soc_min,
        soc_max=None if math.isinf(soc_max) else soc_max,
        event_energy_kwh=float(event_energy),
        site_energy_full_kwh=site_energy_full,
        seed=config.seed,
    )
