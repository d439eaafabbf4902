"""Collects the acceptance criteria outcomes and prints one line per criterion."""

from __future__ import annotations

import pytest

_OUTCOMES: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


def pytest_runtest_makereport(item, call):
    marker = item.get_closest_marker("acceptance")
    if marker is None or call.when != "call":
        return
    number, title = marker.args
    detail = dict(item.user_properties).get("detail", "")
    _OUTCOMES[number] = {
        "title": title,
        "passed": call.excinfo is None,
        "detail": detail,
    }


def pytest_terminal_summary(terminalreporter):
    if not _OUTCOMES:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_OUTCOMES):
        o = _OUTCOMES[number]
        status = "PASS" if o["passed"] else "FAIL"
        line = f"[{status}] criterion {number}: {o['title']}"
        if o["detail"]:
            line += f" -- {o['detail']}"
        terminalreporter.write_line(line)


@pytest.fixture
def detail(record_property):
    """Attach a one-line measurement summary to the acceptance line."""

    def _set(text: str) -> None:
        record_property("detail", text)

    return _set
