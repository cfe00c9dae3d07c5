import pytest

from seqoff import fastdp
from seqoff.channel import Exponential
from seqoff.config import load_config
from seqoff.core import SystemParams, TaskProfile

CYCLES_M = [7, 30, 25, 16, 32, 15, 37, 44, 24, 40]
DATA_KB = [36, 22, 30, 6, 47, 30, 5, 47, 14, 49]


@pytest.fixture(scope="session")
def profile():
    return TaskProfile.from_units(CYCLES_M, DATA_KB)


@pytest.fixture(scope="session")
def params():
    return SystemParams(
        bandwidth_hz=1e6, k0=1e-28, f_max=5e8, f_l=5e8, f_e=3e9, deadline_s=0.35, coherence_s=0.02
    )


@pytest.fixture(scope="session")
def rayleigh():
    return Exponential(50.0)


@pytest.fixture(scope="session")
def tables(profile, params, rayleigh):
    return fastdp.build_tables(profile, params, rayleigh)


@pytest.fixture(scope="session")
def default_config():
    return load_config()


def pytest_configure(config):
    config._acceptance_lines = {}


def pytest_terminal_summary(terminalreporter, config):
    lines = config._acceptance_lines
    if not lines:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(lines):
        terminalreporter.write_line(lines[key])
