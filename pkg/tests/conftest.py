import numpy as np
import pytest

from bulkalloc.channel_sim import SimConfig, derive_stream, generate_realizations

ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_sim():
    """Short sequences so that training-path tests stay fast."""
    return SimConfig(k=12, l=4, master_seed=99)


@pytest.fixture(scope="session")
def test_set():
    cfg = SimConfig(master_seed=5)
    return generate_realizations(cfg, derive_stream(5, "fixture-test"), 2000)
