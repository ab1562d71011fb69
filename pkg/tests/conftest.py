from __future__ import annotations

import numpy as np
import pytest

from oscselect import signals, twin
from oscselect.oscillators import OneMassParams

_ACCEPTANCE: list[tuple[str, bool, str]] = []


@pytest.fixture(scope="session")
def acceptance_log():
    """Collects one (criterion, passed, detail) line per acceptance check."""
    return _ACCEPTANCE


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for name, ok, detail in _ACCEPTANCE:
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}: {detail}")


@pytest.fixture(scope="session")
def twin_cfg():
    return twin.TwinConfig(seed=0)


@pytest.fixture(scope="session")
def twin_channels(twin_cfg):
    return twin.simulate_experiment(twin_cfg)


@pytest.fixture(scope="session")
def twin_spectra(twin_channels):
    return {name: signals.fft_magnitude(ts, 100.0) for name, ts in twin_channels.items()}


@pytest.fixture(scope="session")
def true_two(twin_cfg):
    return twin_cfg.true_params


@pytest.fixture(scope="session")
def true_one(true_two):
    return OneMassParams(true_two.m, true_two.b, true_two.k)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
