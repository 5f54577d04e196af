from collections import OrderedDict

import pytest

_criteria: "OrderedDict[int, dict]" = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(number, title): acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        mark = item.get_closest_marker("acceptance")
        if mark is not None:
            number, title = mark.args
            _criteria.setdefault(number, {"title": title, "outcomes": []})
            item.user_properties.append(("acceptance", number))
    for number in sorted(_criteria):
        _criteria.move_to_end(number)


@pytest.hookimpl(tryfirst=True)
def pytest_runtest_logreport(report):
    number = dict(report.user_properties).get("acceptance")
    if number is None:
        return
    if report.when == "call" or (report.when == "setup" and not report.passed):
        _criteria[number]["outcomes"].append(report.passed)


def pytest_terminal_summary(terminalreporter):
    if not _criteria:
        return
    terminalreporter.section("acceptance criteria")
    for number, entry in _criteria.items():
        outcomes = entry["outcomes"]
        if not outcomes:
            status = "SKIP"
        else:
            status = "PASS" if all(outcomes) else "FAIL"
        terminalreporter.write_line(f"[{status}] criterion {number}: {entry['title']}")
