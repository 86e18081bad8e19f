import os
from pathlib import Path

import numpy as np
import pytest

from bernmix.dataset import CohortDataset, read_csv

COHORT_ENV = "BERNMIX_COHORT_CSV"

# sporadic, early, late, persistent wheezing over six age checkpoints
WHEEZE_PROFILES = np.array([
    [0.10, 0.08, 0.08, 0.06, 0.06, 0.05],
    [0.90, 0.85, 0.50, 0.15, 0.08, 0.05],
    [0.08, 0.10, 0.20, 0.70, 0.85, 0.90],
    [0.92, 0.92, 0.90, 0.92, 0.90, 0.90],
])
WHEEZE_WEIGHTS = np.array([0.40, 0.20, 0.20, 0.20])
AGE_LABELS = ("Age 1", "Age 3", "Age 5", "Age 8", "Age 11", "Age 16")


def random_dataset(rng, n, m, missing=0.0):
    x = (rng.random((n, m)) < rng.uniform(0.1, 0.9, size=m)).astype(float)
    x[rng.random((n, m)) < missing] = np.nan
    return CohortDataset.from_rows(x.tolist())


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture(scope="session")
def cohort():
    path = os.environ.get(COHORT_ENV)
    if not path or not Path(path).exists():
        pytest.skip(f"set {COHORT_ENV} to the cohort CSV to run the cohort checks")
    return read_csv(path)


# one verdict line per acceptance criterion, filled in by test_acceptance.py
ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(ACCEPTANCE_RESULTS[key])
