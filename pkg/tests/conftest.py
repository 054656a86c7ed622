from __future__ import annotations

from collections import defaultdict

import pytest

# criterion number -> title, per-test outcomes, measured values
TITLES: dict[int, str] = {}
OUTCOMES: dict[int, list[bool]] = defaultdict(list)
VALUES: dict[int, list[str]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion n")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    n, title = mark.args
    TITLES[n] = title
    if rep.when == "call" or rep.failed:
        OUTCOMES[n].append(rep.passed)


@pytest.fixture
def check(request):
    """Record a measured value against its tolerance; returns whether it passed."""
    n = request.node.get_closest_marker("criterion").args[0]

    def _check(name: str, value, tolerance: str, ok: bool) -> bool:
        shown = f"{value:.6g}" if isinstance(value, float) else str(value)
        VALUES[n].append(f"{name} = {shown} (tolerance {tolerance}) {'ok' if ok else 'FAIL'}")
        return bool(ok)

    return _check


def pytest_terminal_summary(terminalreporter):
    if not OUTCOMES:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(OUTCOMES):
        verdict = "PASS" if all(OUTCOMES[n]) else "FAIL"
        tr.write_line(f"criterion {n}: {verdict}  {TITLES[n]}")
        for line in VALUES[n]:
            tr.write_line(f"    {line}")
