"""Collects acceptance-criterion outcomes and prints one PASS/FAIL line per criterion."""

import pytest

_OUTCOMES = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(number, title): acceptance criterion check")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when == "teardown":
        return
    if report.when == "setup" and report.passed:
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    _OUTCOMES[number] = (title, report.passed, detail, report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        title, passed, detail, seconds = _OUTCOMES[number]
        line = f"[{'PASS' if passed else 'FAIL'}] {number}. {title} ({seconds:.1f}s)"
        if detail:
            line += f": {detail}"
        terminalreporter.write_line(line)
