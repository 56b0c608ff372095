import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from infoproj.harness.synth import random_density, rng_stream

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def density_from_seed(seed, d, ridge=0.1):
    return random_density(rng_stream(seed, d), d, ridge=ridge)


def random_subset(rng, d, size=None):
    size = rng.integers(0, d + 1) if size is None else size
    return np.sort(rng.choice(d, size=size, replace=False))


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


ACCEPTANCE_LINES = []


@pytest.fixture
def acceptance():
    """Record one PASS/FAIL line per acceptance criterion."""
    def record(number, ok, detail):
        line = f"{'PASS' if ok else 'FAIL'} criterion {number}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        return ok
    return record


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[2].rstrip(":"))):
            terminalreporter.write_line(line)
