import numpy as np
import pytest

from gridplan.ingest import fixture_ercot7, synthesize_profiles


@pytest.fixture(scope="session")
def fixture_net():
    return fixture_ercot7()


@pytest.fixture(scope="session")
def fixture_profiles(fixture_net):
    return synthesize_profiles(fixture_net, seed=0)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_ACCEPTANCE = {}


@pytest.fixture
def criterion(request):
    """Record one acceptance line: ``criterion(ok, detail)`` then assert ``ok``."""
    number = request.node.get_closest_marker("criterion").args[0]

    def record(ok, detail):
        line = f"criterion {number:>2}: {'PASS' if ok else 'FAIL'}  {request.node.name}  {detail}"
        _ACCEPTANCE[number] = line
        print(line)
        assert ok, detail

    return record


def pytest_runtest_makereport(item, call):
    # a criterion that errors before recording still gets a FAIL line
    marker = item.get_closest_marker("criterion")
    if marker and call.when == "call" and call.excinfo is not None and marker.args[0] not in _ACCEPTANCE:
        _ACCEPTANCE[marker.args[0]] = f"criterion {marker.args[0]:>2}: FAIL  {item.name}  {call.excinfo.exconly()[:200]}"


def pytest_terminal_summary(terminalreporter):
    if _ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(_ACCEPTANCE):
            terminalreporter.write_line(_ACCEPTANCE[n])
