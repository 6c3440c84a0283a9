"""Shared fixtures and the one-line-per-criterion acceptance report."""

from __future__ import annotations

import pytest

_RESULTS: dict[str, tuple[str, str]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(label): acceptance criterion reported in the summary")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None or report.when not in ("setup", "call"):
        return
    label = marker.args[0]
    detail = getattr(item, "criterion_detail", "")
    if report.failed:
        _RESULTS[label] = ("FAIL", detail or str(report.longrepr).splitlines()[-1][:120])
    elif report.when == "call" and report.passed:
        _RESULTS[label] = ("PASS", detail)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for label in sorted(_RESULTS):
        status, detail = _RESULTS[label]
        terminalreporter.write_line(f"{status}  {label}" + (f"  [{detail}]" if detail else ""))


@pytest.fixture
def record(request):
    """Attach a short measured-value summary to the criterion line."""

    def _record(text: str) -> None:
        request.node.criterion_detail = text

    return _record
