import numpy as np
import pytest

from cellfree_gbd.harness import DESK_RADIO
from cellfree_gbd.scenario import generate_scenario, sample_qos

# desk-scale setting used by the trend checks
DESK_M, DESK_N, DESK_G = 24, 20, 4
RATE_LO, RATE_HI = 1e5, 1.5e6

_acceptance_lines = {}


def record_acceptance(number: int, passed: bool, detail: str) -> str:
    line = f"ACCEPTANCE {number:>2}: {'PASS' if passed else 'FAIL'}  {detail}"
    _acceptance_lines[number] = line
    print(line)
    return line


def pytest_terminal_summary(terminalreporter):
    if not _acceptance_lines:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(_acceptance_lines):
        terminalreporter.write_line(_acceptance_lines[k])


def desk_instance(seed, m=DESK_M, n=DESK_N, lo=RATE_LO, hi=RATE_HI, radio=DESK_RADIO):
    return generate_scenario(radio, m, n, seed), sample_qos(n, lo, hi, seed)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


@pytest.fixture
def small():
    """Six APs and six users in a desk-scale square."""
    return desk_instance(3, m=6, n=6)
