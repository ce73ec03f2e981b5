import numpy as np
import pytest

from thermopinn.scenario import synthesize_profiles
from thermopinn.thermal import OperatingProfiles, ThermalConfig


@pytest.fixture(scope="session")
def desk_profiles():
    return synthesize_profiles(24, 300)


@pytest.fixture(scope="session")
def desk_cfg():
    # effective conductivity of the well-mixed desk scenario
    return ThermalConfig(k=40.0)


@pytest.fixture
def flat_profiles():
    t = np.array([0.0, 86400.0])
    return OperatingProfiles(t, [0.0, 0.0], [300.0, 300.0], [320.0, 320.0])


@pytest.fixture
def no_source_cfg():
    return ThermalConfig(k=40.0, P0=0.0, mu_rated=0.0, h_eff=0.0)


# acceptance report ---------------------------------------------------------------

_CRITERIA = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.failed or report.skipped:
        number, title = crit
        detail = dict(report.user_properties).get("detail", "") if report.when == "call" else f"{report.when} failed"
        _, ok, details = _CRITERIA.get(number, (title, True, []))
        _CRITERIA[number] = (title, ok and report.passed, details + ([detail] if detail else []))


@pytest.fixture(autouse=True)
def _criterion_tag(request, record_property):
    mark = request.node.get_closest_marker("criterion")
    if mark is not None:
        record_property("criterion", tuple(mark.args))


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, details = _CRITERIA[number]
        line = f"criterion {number} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(f"{line}: {'; '.join(details)}" if details else line)
