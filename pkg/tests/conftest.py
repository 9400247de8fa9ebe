import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from radonrisk.core import load_mortality_table
from radonrisk.exposure import occupational_scenario
from radonrisk.models import bundled_model

settings.register_profile("default", max_examples=60, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


@pytest.fixture(scope="session")
def icrp():
    return load_mortality_table()


@pytest.fixture(scope="session")
def scenario():
    return occupational_scenario(2.0, 18, 64)


@pytest.fixture(scope="session")
def linear():
    return bundled_model("simple_linear_sub")


@pytest.fixture(scope="session")
def parametric():
    return bundled_model("parametric_sub")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# --- acceptance criteria report ----------------------------------------------

_CRITERIA = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or report.when != "call":
        return
    number, title = mark.args
    detail = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
    _CRITERIA[number] = (title, report.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[number]
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  ({detail})" if detail else ""))
