from __future__ import annotations

import pytest

_RESULTS: list[tuple[int, str, bool, str]] = []


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n, title): acceptance criterion number and title")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None or rep.when != "call":
        return
    n, title = mark.args
    detail = "; ".join(v for k, v in item.user_properties if k == "detail")
    _RESULTS.append((n, title, rep.passed, detail))
    # also visible with -s / -v while the suite runs
    print(f"\nCRITERION {n:>2} {'PASS' if rep.passed else 'FAIL'}: {title} ({detail})")


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for n, title, ok, detail in sorted(_RESULTS):
        terminalreporter.write_line(f"CRITERION {n:>2} {'PASS' if ok else 'FAIL'}: {title} ({detail})")
