import pytest

from waterbench import neural

_criteria: dict[int, tuple[str, str, float]] = {}


@pytest.fixture(autouse=True)
def _gate_checks(monkeypatch):
    monkeypatch.setattr(neural, "CHECK_GATES", True)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, text): acceptance criterion number and label")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or rep.when != "call":
        return
    n, text = marker.args
    _criteria[n] = ("PASS" if rep.passed else "FAIL", text, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_criteria):
        status, text, duration = _criteria[n]
        terminalreporter.write_line(f"AC-{n:02d} {status}  {text}  ({duration:.1f}s)")
