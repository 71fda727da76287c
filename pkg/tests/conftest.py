import math

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from enfloc.gridsim import SimConfig, simulate_enf_grid
from enfloc.presets import five_city_sites

settings.register_profile(
    "enfloc", max_examples=60, deadline=None, suppress_health_check=[HealthCheck.too_slow]
)
settings.load_profile("enfloc")


@pytest.fixture(scope="session")
def five_city_config():
    return SimConfig(sites=five_city_sites(), duration=3600.0, seed=0)


@pytest.fixture(scope="session")
def five_city_series(five_city_config):
    return simulate_enf_grid(five_city_config)


@pytest.fixture(scope="session")
def five_city_positions(five_city_config):
    return {n: (x, y) for n, x, y in five_city_config.sites}


def tone(hz, seconds, rate, snr_db=math.inf, seed=0, amplitude=1.0):
    n = int(round(seconds * rate))
    t = np.arange(n) / rate
    x = amplitude * np.sin(2 * np.pi * hz * t + 0.3)
    if math.isfinite(snr_db):
        rng = np.random.default_rng(seed)
        x = x + rng.standard_normal(n) * math.sqrt(amplitude**2 / 2 / 10 ** (snr_db / 10))
    return x


_VERDICTS: list[str] = []


@pytest.fixture
def verdict(request):
    """Record one acceptance line; returns ``ok`` so tests can ``assert verdict(...)``."""
    capman = request.config.pluginmanager.getplugin("capturemanager")

    def record(label, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] {label}: {detail}"
        _VERDICTS.append(line)
        with capman.global_and_fixture_disabled():
            print("\n" + line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _VERDICTS:
        terminalreporter.section("acceptance criteria")
        for line in _VERDICTS:
            terminalreporter.write_line(line)
