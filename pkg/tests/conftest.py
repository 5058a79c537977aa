"""Shared fixtures: the bundled survey fixture and models fitted from it."""

import math
from importlib import resources
from pathlib import Path

import numpy as np
import pytest

from chargecast.forecast import ModelSet
from chargecast.kde import KdeModel
from chargecast.survey import (
    CHAIN_TYPE_INDEX,
    IngestDiagnostics,
    build_chains,
    extract_features,
    parse_records,
)

# Chain counts baked into the bundled fixture (see scripts/make_fixture.py).
FIXTURE_CHAIN_COUNTS = {
    "H-W-H": 44,
    "H-SE-H": 20,
    "H-SR-H": 8,
    "H-O-H": 11,
    "H-W-SE-H": 6,
    "H-SE-SR-H": 2,
}
FIXTURE_TOTAL_CHAINS = sum(FIXTURE_CHAIN_COUNTS.values())
FIXTURE_ROWS = 200


@pytest.fixture(scope="session")
def fixture_csv_path() -> Path:
    with resources.as_file(
        resources.files("chargecast").joinpath("data/survey_fixture.csv")
    ) as path:
        return Path(path)


@pytest.fixture(scope="session")
def fixture_ingest(fixture_csv_path):
    """(records, chains, dataset, diagnostics) parsed from the bundled CSV."""
    diag = IngestDiagnostics()
    with open(fixture_csv_path, newline="") as fh:
        records = parse_records(fh, diagnostics=diag)
    chains = build_chains(records, diag)
    dataset = extract_features(chains)
    return records, chains, dataset, diag


@pytest.fixture(scope="session")
def fixture_models(fixture_ingest) -> ModelSet:
    _, _, dataset, _ = fixture_ingest
    return ModelSet.from_dataset(dataset)


def point_model(value: float, support=(0.0, math.inf)) -> KdeModel:
    """Near-degenerate density: every draw lands within ~1e-9 of ``value``."""
    return KdeModel(samples=np.array([value]), bandwidth=1e-9, support=support)


def point_model_set(chain_type, end1, lengths, velocities, dwells) -> ModelSet:
    """ModelSet whose every draw reproduces one fixed chain realization."""
    from chargecast.survey import (
        CHAIN_TYPES,
        FEATURE_DWELL,
        FEATURE_END_TIME,
        FEATURE_LENGTH,
        FEATURE_VELOCITY,
    )

    proportions = np.zeros(len(CHAIN_TYPES))
    proportions[CHAIN_TYPE_INDEX[chain_type]] = 1.0
    models = {(chain_type, FEATURE_END_TIME, 1): point_model(end1, (0.0, 1440.0))}
    for t, (length, velocity) in enumerate(zip(lengths, velocities), start=1):
        models[(chain_type, FEATURE_LENGTH, t)] = point_model(length)
        models[(chain_type, FEATURE_VELOCITY, t)] = point_model(velocity)
    for m, dwell in enumerate(dwells, start=1):
        models[(chain_type, FEATURE_DWELL, m)] = point_model(dwell)
    return ModelSet(proportions, models)
