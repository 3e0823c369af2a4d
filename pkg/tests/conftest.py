"""Collects acceptance outcomes and prints one line per criterion at the end."""
from __future__ import annotations

_results: dict[str, tuple[str, str]] = {}


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    cid, title = crit
    if report.when == "call" or (report.when == "setup" and report.outcome != "passed"):
        if hasattr(report, "wasxfail"):
            status = "FAIL (known, see README)"
        else:
            status = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[report.outcome]
        _results[cid] = (status, title)


def pytest_collection_modifyitems(items):
    for item in items:
        m = item.get_closest_marker("acceptance")
        if m is not None:
            item.user_properties.append(("criterion", (m.args[0], m.args[1])))


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    key = lambda c: (int("".join(ch for ch in c if ch.isdigit())), c)  # noqa: E731
    for cid in sorted(_results, key=key):
        status, title = _results[cid]
        terminalreporter.write_line(f"criterion {cid:<3} {status:<25} {title}")
