import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from blockcomp.config import SystemConfig
from blockcomp.reliability import draw_drop

settings.register_profile(
    "repo", deadline=None, derandomize=True, max_examples=60,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("repo")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def small_cfg():
    """8 antennas instead of 16 keeps dense oracles cheap."""
    return SystemConfig(antennas_per_rru=8)


@pytest.fixture(scope="session")
def small_drop(small_cfg):
    return draw_drop(small_cfg, 0, 0)


def random_complex(rng, *shape):
    return (rng.standard_normal(shape) + 1j * rng.standard_normal(shape)) / np.sqrt(2.0)


CRITERIA: list[str] = []


@pytest.fixture
def criterion(request):
    """Records one PASS/FAIL line per acceptance criterion, then asserts."""

    def record(number: int, ok: bool, detail: str) -> None:
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {detail}"
        CRITERIA.append(line)
        print(line)
        assert ok, line

    return record


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in sorted(CRITERIA, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)
