"""Shared pytest wiring.

The release-gate tests in test_acceptance.py are named ``test_a<N>_*``
(or ``test_s<N>_*`` for the model-dependent checks); this hook collects
their outcomes and prints one line per criterion after the run so a gate
failure is visible without scrolling through the full log.
"""

import re

_CRITERION = re.compile(r"test_([as]\d+)_")

_RANK = {"PASS": 0, "SKIP": 1, "FAIL": 2}

_results = {}


def pytest_configure(config):
    config.addinivalue_line(
        "markers", "acceptance: release gate check, reported in the terminal summary"
    )


def pytest_runtest_logreport(report):
    if "test_acceptance" not in report.nodeid:
        return
    match = _CRITERION.search(report.nodeid.rsplit("::", 1)[-1].lower())
    if match is None:
        return
    if report.when == "call":
        outcome = "PASS" if report.passed else ("SKIP" if report.skipped else "FAIL")
    elif report.when == "setup" and (report.skipped or report.failed):
        outcome = "SKIP" if report.skipped else "FAIL"
    else:
        return
    crit = match.group(1).upper()
    # several tests can back one criterion; the worst outcome wins
    prior = _results.get(crit)
    if prior is None or _RANK[outcome] > _RANK[prior]:
        _results[crit] = outcome


def pytest_terminal_summary(terminalreporter):
    if not _results:
        return
    terminalreporter.section("acceptance criteria")
    for crit in sorted(_results, key=lambda c: (c[0], int(c[1:]))):
        terminalreporter.write_line(f"{crit}: {_results[crit]}")
