import numpy as np
import pytest

from tinyodl.dataset import fixture_path, load_har, make_drift_splits, make_synthetic_har


@pytest.fixture(scope="session")
def fixture_data():
    return load_har(fixture_path(), expected_counts=None)


@pytest.fixture(scope="session")
def small_splits():
    # big enough for N=32 models with the 288-sample warmup floor
    return make_drift_splits(make_synthetic_har(2000, seed=0))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for number in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[number])
