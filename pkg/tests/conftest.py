"""Acceptance bookkeeping: one pass/fail line per criterion and runtime bounds."""

import pytest

_RESULTS = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance(ident, title, bound): acceptance criterion with a wall-clock bound in seconds"
    )


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("acceptance")
    if mark is None or rep.when != "call":
        return
    ident, title, bound = mark.args
    if rep.passed and rep.duration > bound:
        rep.outcome = "failed"
        rep.longrepr = f"{ident} exceeded its runtime bound: {rep.duration:.2f}s > {bound}s"
    _RESULTS[ident] = (title, "PASS" if rep.passed else "FAIL", rep.duration, bound)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for ident in sorted(_RESULTS, key=lambda s: int(s[2:])):
        title, verdict, secs, bound = _RESULTS[ident]
        tr.write_line(f"{ident:<5} {verdict}  {secs:7.2f}s (bound {bound}s)  {title}")
