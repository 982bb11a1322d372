
import numpy as np
import pytest


_criteria = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): exit criterion this test belongs to")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    name = getattr(report, "criterion", None)
    if name is None:
        return
    ok = report.outcome == "passed"
    prev = _criteria.get(name, True)
    _criteria[name] = prev and ok


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is not None:
        rep.criterion = mark.args[0]


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("exit criteria")
    for name, ok in _criteria.items():
        terminalreporter.write_line(f"{'PASS' if ok else 'FAIL'}  {name}")


@pytest.fixture(scope="session", autouse=True)
def warm_kernels():
    """Compile the numba kernels once so timed checks measure steady state."""
    from ergolab import _kernels

    _kernels.orbits_1d(0, 0.5, np.array([0.1]), 2, 1)
    _kernels.orbits_1d(1, 2.0, np.array([0.1]), 2, 1)
    _kernels.orbits_2d(2, 1.4, 0.3, np.zeros((1, 2)), 2, 1, 2.0)
    _kernels.cat_orbits(np.array([1], dtype=np.int64), np.array([2], dtype=np.int64), 2, 1)
    _kernels.window_max(np.ones(4), 2)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)
