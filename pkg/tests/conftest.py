import warnings
from pathlib import Path

import pytest

from talbotlau.scenario import load_scenario

ROOT = Path(__file__).resolve().parents[1]
SCENARIOS = ROOT / "scenarios"


@pytest.fixture(scope="session")
def argon():
    return load_scenario(SCENARIOS / "gramicidin_argon_n1.yaml")


@pytest.fixture(scope="session")
def helium():
    return load_scenario(SCENARIOS / "gramicidin_helium_n05.yaml")


@pytest.fixture(autouse=True)
def _quiet_tau_warning():
    # scans beyond T_T/100 are intentional in several tests
    with warnings.catch_warnings():
        warnings.filterwarnings("ignore", message=".*exceeds T_T/100.*")
        yield


# one line per acceptance criterion, printed after the run
_ACCEPTANCE: dict[int, str] = {}


@pytest.fixture(scope="session")
def acceptance():
    def record(number: int, title: str, passed: bool, detail: str) -> bool:
        line = f"criterion {number} {'PASS' if passed else 'FAIL'}: {title} ({detail})"
        _ACCEPTANCE[number] = line
        print(line)
        return passed
    return record


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for k in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[k])
