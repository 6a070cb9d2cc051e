import pytest
from hypothesis import settings

from acfgtrust.acfg import NormStats, build_acfg
from acfgtrust.embed import init_params
from acfgtrust.telemetry import TrustedProfile, simulate_trusted_slot

settings.register_profile("default", deadline=None, max_examples=100)
settings.load_profile("default")

# lines recorded by test_acceptance, echoed in the terminal summary
ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def stats():
    return NormStats((10.0, 6.0, 0.1, 20.0), (40.0, 18.0, 0.6, 70.0))


@pytest.fixture
def small_model(stats):
    return init_params(p=8, L=2, H=2, seed=3).with_norm_stats(stats)


@pytest.fixture
def trusted_graphs(stats):
    prof = TrustedProfile(seed=11)
    return [build_acfg(simulate_trusted_slot(prof, i), stats) for i in range(20)]

