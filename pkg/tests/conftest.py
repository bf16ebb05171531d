"""Shared fixtures and the acceptance-summary reporter.

The terminal summary prints one line per acceptance criterion (tests named
``test_criterion*``) with outcome and runtime.
"""

import pytest

from gaugeflow.config import ExperimentConfig

_criterion_reports = []


def pytest_runtest_logreport(report):
    if report.when != "call":
        return
    name = report.nodeid.rsplit("::", 1)[-1]
    if name.startswith("test_criterion"):
        _criterion_reports.append(
            (name, report.outcome, getattr(report, "duration", 0.0)))


def pytest_terminal_summary(terminalreporter):
    if not _criterion_reports:
        return
    tr = terminalreporter
    tr.write_sep("=", "acceptance criteria")
    for name, outcome, duration in _criterion_reports:
        status = "PASS" if outcome == "passed" else outcome.upper()
        tr.write_line(f"{status:<7} {name:<55} {duration:7.1f}s")


@pytest.fixture(scope="session")
def default_cfg():
    return ExperimentConfig.defaults()
