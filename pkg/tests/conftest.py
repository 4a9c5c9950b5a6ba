import os

import pytest
from hypothesis import HealthCheck, settings

from illiqnet.config import PipelineConfig
from illiqnet.pipeline import run_market
from illiqnet.synthetic import SynthConfig, SyntheticMarket

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))


@pytest.fixture(scope="session")
def small_market():
    """20 stocks over 12 days with one three-day crash run."""
    cfg = SynthConfig(n_stocks=20, n_days=12, crash_days={8, 9, 10}, seed=3,
                      sectors={"Financial": 0.2, "Manufacturing": 0.4, "Information technology": 0.4})
    return SyntheticMarket(cfg)


@pytest.fixture(scope="session")
def default_market():
    return SyntheticMarket(SynthConfig(seed=0))


@pytest.fixture(scope="session")
def default_config(default_market):
    return PipelineConfig(crash_threshold=default_market.suggested_crash_threshold(), peak_min_height=3)


@pytest.fixture(scope="session")
def default_run(default_market, default_config):
    """The whole in-memory pipeline over the 50 x 60 seed-0 market."""
    return run_market(default_market, default_config)


def pytest_terminal_summary(terminalreporter):
    from criteria import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in sorted(RESULTS):
            terminalreporter.write_line(line)
