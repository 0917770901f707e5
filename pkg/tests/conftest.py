import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from tvpolicy.panel import PanelDataset, TreatmentSchedule
from tvpolicy.standin import make_standin_panel

settings.register_profile("default", deadline=None, suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def random_panel(rng, n_states, n_years, adoption, first_year=2000, trend=True, noise=1.0):
    """Panel with unit/year effects plus noise; ``adoption`` maps row index to adoption year."""
    years = tuple(range(first_year, first_year + n_years))
    alpha = rng.normal(10, 2, size=(n_states, 1))
    delta = np.cumsum(rng.normal(0.3 if trend else 0.0, 0.5, size=(1, n_years)), axis=1)
    y = alpha + delta + rng.normal(0, noise, size=(n_states, n_years))
    x = rng.uniform(3, 8, size=(n_states, n_years))
    states = tuple(f"S{i:02d}" for i in range(n_states))
    data = PanelDataset(states, years, y, x)
    sched = TreatmentSchedule({s: adoption.get(i) for i, s in enumerate(states)})
    return data, sched


def canonical_2x2():
    """Two states, two years: control moves 10 -> 12, treated 10 -> 9, so DID = -3."""
    data = PanelDataset(("C", "T"), (2000, 2001), [[10.0, 12.0], [10.0, 9.0]], [[1.0, 1.0], [1.0, 1.0]])
    return data, TreatmentSchedule({"C": None, "T": 2001})


@pytest.fixture(scope="session")
def standin():
    return make_standin_panel()


ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def verdict():
    """Record one PASS/FAIL line for the terminal summary and assert on it."""

    def _verdict(name: str, ok: bool, detail: str) -> None:
        line = f"{'PASS' if ok else 'FAIL'} {name}: {detail}"
        ACCEPTANCE_LINES.append(line)
        print(line)
        assert ok, line

    return _verdict


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
