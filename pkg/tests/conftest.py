import pytest

_results = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    report = outcome.get_result()
    marker = item.get_closest_marker("criterion")
    if marker is None:
        return
    number, title = marker.args
    # a failure in any phase fails the criterion; otherwise keep the call-phase timing
    if report.failed or report.when == "call":
        prev = _results.get(number)
        if prev is None or prev[1] != "FAIL":
            _results[number] = (title, "FAIL" if report.failed else "PASS", report.duration)


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for number in sorted(_results):
        title, status, seconds = _results[number]
        terminalreporter.write_line(f"[{status}] criterion {number:2d}: {title} ({seconds:.2f}s)")
