"""Quick-charge station load forecasting and storage scheduling toolkit."""

from .errors import ChargecastError, ConfigurationError, DataError, SolverError
from .forecast import (
    ChargeEvent,
    FleetConfig,
    ForecastResult,
    LoadProfile,
    ModelSet,
    SiteLoadBundle,
    accumulate_loads,
    charge_duration_hours,
    needs_charge,
    run_forecast,
    simulate_vehicle,
    soc_after_trip,
    station_composite,
    vehicle_rng,
)
from .kde import KdeModel, fit_kde, silverman_bandwidth
from .scheduler import (
    DEFAULT_TARIFF,
    EssParams,
    SchedulePlan,
    TariffSchedule,
    baseline_cost,
    brute_force_schedule,
    multi_day_schedule,
    solve_schedule,
    solve_schedule_slots,
    verify_plan,
)
from .survey import (
    CHAIN_TYPES,
    ChainFeatureDataset,
    ChainType,
    IngestDiagnostics,
    SiteClass,
    TripChain,
    TripRecord,
    build_chains,
    chain_type_proportions,
    extract_features,
    parse_records,
)

__version__ = "0.1.0"
