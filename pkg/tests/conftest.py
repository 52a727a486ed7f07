"""Shared fixtures and the acceptance-report terminal section."""

import numpy as np
import pytest

from stratalg import MeasureSpace

ACCEPTANCE_RESULTS: list[tuple[int, str, str]] = []


def record_acceptance(number: int, label: str, passed: bool, detail: str = ""):
    status = "PASS" if passed else "FAIL"
    line = f"[criterion {number:2d}] {status}  {label}"
    if detail:
        line += f"  ({detail})"
    ACCEPTANCE_RESULTS.append((number, label, line))
    assert passed, line


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE_RESULTS:
        return
    terminalreporter.section("acceptance criteria")
    for _, _, line in sorted(ACCEPTANCE_RESULTS):
        terminalreporter.write_line(line)


@pytest.fixture
def space2():
    return MeasureSpace(np.array([1.0, 2.0]))


@pytest.fixture
def space3():
    return MeasureSpace(np.array([0.5, 1.0, 1.5]))


@pytest.fixture
def rng():
    return np.random.default_rng(20260815)
