"""Shared test configuration.

Tests marked ``@pytest.mark.criterion("5a", "description")`` are collected
into a one-line-per-criterion acceptance summary printed at the end of the
run.
"""

import os
import sys
from collections import OrderedDict

import pytest

sys.path.insert(0, os.path.dirname(__file__))

_RESULTS = OrderedDict()


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(id, title): acceptance criterion covered by the test")


def _criterion(item):
    m = item.get_closest_marker("criterion")
    if m is None:
        return None
    return m.args[0], (m.args[1] if len(m.args) > 1 else "")


def pytest_collection_modifyitems(items):
    for item in items:
        c = _criterion(item)
        if c is not None:
            entry = _RESULTS.setdefault(c[0], {"title": c[1], "outcomes": [], "notes": []})
            entry["title"] = entry["title"] or c[1]


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    c = _criterion(item)
    if c is None:
        return
    entry = _RESULTS[c[0]]
    if rep.when == "call" or (rep.when == "setup" and not rep.passed):
        if rep.skipped:
            reason = rep.longrepr[2] if isinstance(rep.longrepr, tuple) else str(rep.longrepr)
            entry["outcomes"].append("SKIP")
            entry["notes"].append(reason.replace("Skipped: ", ""))
        elif rep.failed:
            entry["outcomes"].append("FAIL")
            msg = str(rep.longrepr.reprcrash.message) if hasattr(rep.longrepr, "reprcrash") else ""
            entry["notes"].append(msg.splitlines()[0] if msg else item.name)
        else:
            entry["outcomes"].append("PASS")


def _order(key):
    head = "".join(ch for ch in key if ch.isdigit())
    return int(head or 0), key


def pytest_terminal_summary(terminalreporter):
    ran = {k: v for k, v in _RESULTS.items() if v["outcomes"]}
    if not ran:
        return
    terminalreporter.section("acceptance criteria")
    for key in sorted(ran, key=_order):
        v = ran[key]
        outs = v["outcomes"]
        if "FAIL" in outs:
            status = "FAIL"
        elif all(o == "SKIP" for o in outs):
            status = "SKIP"
        else:
            status = "PASS"
        line = f"criterion {key:<3} {status:<4}  {v['title']}"
        notes = [n for n in v["notes"] if n]
        if notes and status != "PASS":
            line += f"  [{notes[0]}]"
        terminalreporter.write_line(line)
