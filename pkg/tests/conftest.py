import numpy as np
import pytest

from matchctl.ballbeam import BallBeamModel, closed_loop_family, linearize_control, open_loop_system

_CRITERIA = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call" and not (rep.when == "setup" and rep.failed):
        return
    n, title = mark.args
    detail = getattr(item, "criterion_detail", "")
    _CRITERIA[n] = (title, rep.passed, detail)


def pytest_terminal_summary(terminalreporter):
    if not _CRITERIA:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_CRITERIA):
        title, ok, detail = _CRITERIA[n]
        line = f"criterion {n:2d} {'PASS' if ok else 'FAIL'}  {title}"
        terminalreporter.write_line(line + (f"  [{detail}]" if detail else ""))


@pytest.fixture(scope="session")
def model():
    return BallBeamModel()


@pytest.fixture(scope="session")
def plant(model):
    return open_loop_system(model)


@pytest.fixture(scope="session")
def family(model):
    return closed_loop_family(model)


@pytest.fixture(scope="session")
def linear_gains(model, family):
    return linearize_control(model, family)


@pytest.fixture
def rng():
    return np.random.default_rng(20240601)
