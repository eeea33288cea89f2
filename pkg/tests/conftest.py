import numpy as np
import pytest

from jointcor.sim import NOISE_FREE, NoiseSpec, PendulumConfig, StaConfig, generate

# filled by test_acceptance, printed once at the end of the session
ACCEPTANCE_LINES: list[str] = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def clean_constant():
    return generate(PendulumConfig(), StaConfig(), NOISE_FREE)


@pytest.fixture(scope="session")
def noisy_constant():
    return generate(PendulumConfig(), StaConfig(), NoiseSpec(seed=11))


@pytest.fixture(scope="session")
def noisy_sta():
    return generate(PendulumConfig(), StaConfig(enabled=True), NoiseSpec(seed=12))


@pytest.fixture
def rng():
    return np.random.default_rng(1234)
