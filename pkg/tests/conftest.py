import pytest

from rankdea.dea import CrossSection


@pytest.fixture
def two_dmu():
    # A: one input unit, two output units; B: one input unit, one output unit
    return CrossSection([[1.0], [1.0]], [[2.0], [1.0]], ["A", "B"])


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(mod.RESULTS):
        terminalreporter.write_line(mod.RESULTS[key])
