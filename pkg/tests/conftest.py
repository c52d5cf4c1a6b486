import pytest

_OUTCOMES: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(name): acceptance criterion checked by this test")


def pytest_runtest_logreport(report):
    name = report.user_properties and dict(report.user_properties).get("criterion")
    if not name:
        return
    if report.when == "call" or report.failed:
        detail = ""
        if report.failed and report.longrepr is not None:
            crash = getattr(report.longrepr, "reprcrash", None)
            detail = crash.message.splitlines()[0] if crash is not None else str(report.longrepr).splitlines()[-1]
        _OUTCOMES[name] = ("PASS" if report.passed else "FAIL", detail)


@pytest.fixture(autouse=True)
def _tag_criterion(request, record_property):
    marker = request.node.get_closest_marker("criterion")
    if marker is not None:
        record_property("criterion", marker.args[0])


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for name, (status, detail) in _OUTCOMES.items():
        line = f"{status}  {name}"
        if detail:
            line += f"  ({detail})"
        terminalreporter.write_line(line)
