import pytest

_RESULTS = {}
_DETAILS = {}


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    mark = item.get_closest_marker("criterion")
    if mark is None:
        return
    number, title = mark.args
    for key, value in rep.user_properties:
        if key == "detail" and rep.when == "call":
            _DETAILS.setdefault(number, []).append(str(value))
    prev = _RESULTS.get(number, (title, "PASS"))[1]
    if rep.failed:
        _RESULTS[number] = (title, "FAIL")
    elif rep.skipped and prev != "FAIL":
        _RESULTS[number] = (title, "SKIP")
    elif rep.when == "call":
        _RESULTS[number] = (title, prev)


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for number in sorted(_RESULTS):
        title, status = _RESULTS[number]
        tr.write_line(f"criterion {number}: {status}  {title}")
        for line in _DETAILS.get(number, []):
            tr.write_line(f"    {line}")
