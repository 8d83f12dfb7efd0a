import numpy as np
import pytest
from hypothesis import settings

from mallowmatch.market import MarketConfig, MarketInstance, generate

# first calls pay numba compilation
settings.register_profile("default", deadline=None)
settings.load_profile("default")

_ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def acceptance_log():
    """Collects one summary line per acceptance criterion."""
    return _ACCEPTANCE_LINES


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


@pytest.fixture
def latin3() -> MarketInstance:
    """3x3 market with three stable matchings (cyclic preferences)."""
    men = [[0, 1, 2], [1, 2, 0], [2, 0, 1]]
    women = [[1, 2, 0], [2, 0, 1], [0, 1, 2]]
    return MarketInstance.from_orders(men, women)


def random_small_instance(seed: int, max_n: int = 8, max_k: int = 2,
                          phis=(0.0, 0.5, 0.9, 1.0)) -> MarketInstance:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, max_n + 1))
    k = int(rng.integers(0, max_k + 1))
    return generate(MarketConfig(n=n, k=k, phi_m=float(rng.choice(phis)),
                                 phi_w=float(rng.choice(phis)), seed=seed))
