import numpy as np
import pytest

from seco import ring

_CRITERIA: list[str] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion reported in the summary")
    config.addinivalue_line("markers", "slow: long-running test")


def pytest_runtest_logreport(report):
    if report.when != "call" and not (report.when == "setup" and report.outcome != "passed"):
        return
    names = [v for k, v in report.user_properties if k == "criterion"]
    if not names:
        return
    details = "; ".join(str(v) for k, v in report.user_properties if k == "detail")
    status = "PASS" if report.passed else "FAIL"
    _CRITERIA.append(f"[{status}] {names[0]}" + (f" -- {details}" if details else ""))


def pytest_terminal_summary(terminalreporter):
    if _CRITERIA:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERIA:
            terminalreporter.write_line(line)


@pytest.fixture
def criterion(request, record_property):
    """Register the running test as an acceptance criterion; returns a detail recorder."""
    marker = request.node.get_closest_marker("criterion")
    record_property("criterion", marker.args[0] if marker else request.node.name)
    return lambda text: record_property("detail", text)


@pytest.fixture(scope="session")
def desk():
    return ring.profile("desk")


@pytest.fixture(scope="session")
def tiny():
    return ring.profile("tiny")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
