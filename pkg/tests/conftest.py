"""Acceptance-criterion registry.

Tests marked ``@pytest.mark.acceptance(n, "title")`` are collected into a
table printed at the end of the run, one PASS/FAIL line per criterion.
Tests may attach measured values with ``record_property("detail", ...)``.
"""

import pytest

_results: dict[int, dict] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): numbered acceptance criterion")


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            item.user_properties.append(("acceptance", (m.args[0], m.args[1])))


def pytest_runtest_logreport(report):
    props = dict(report.user_properties)
    if "acceptance" not in props:
        return
    n, title = props["acceptance"]
    entry = _results.setdefault(n, {"title": title, "ok": True, "ran": False, "detail": ""})
    if report.when == "call":
        entry["ran"] = True
        entry["detail"] = props.get("detail", entry["detail"])
    if report.failed:
        entry["ok"] = False


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for n in sorted(_results):
        e = _results[n]
        status = "PASS" if e["ok"] and e["ran"] else "FAIL"
        line = f"criterion {n:>2}: {status}  {e['title']}"
        if e["detail"]:
            line += f"  [{e['detail']}]"
        tr.write_line(line)
