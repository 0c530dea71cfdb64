"""Collects acceptance criterion outcomes and prints one line per criterion."""

import pytest

_results = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    if report.when == "call" or (report.when == "setup" and not report.passed):
        status = "SKIP" if report.skipped else ("PASS" if report.passed else "FAIL")
        note = report.capstdout.strip().replace("\n", "; ")
        _results.setdefault((n, title), []).append((item.name, status, note))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for (n, title), runs in sorted(_results.items()):
        statuses = {s for _, s, _ in runs}
        overall = "FAIL" if "FAIL" in statuses else ("PASS" if "PASS" in statuses else "SKIP")
        terminalreporter.write_line(f"criterion {n} {overall}: {title}")
        for name, status, note in runs:
            terminalreporter.write_line(f"    {status} {name}" + (f" ({note})" if note else ""))
