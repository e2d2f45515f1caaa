"""Shared fixtures; collects acceptance-check outcomes for the terminal summary."""

from dataclasses import dataclass, field
from typing import List

import pytest

CRITERIA = {
    "1": "deterministic target: theory vs simulation",
    "2": "fluctuating target: theory vs simulation where P_D > 0.4",
    "3": "comparator ordering with simulated thresholds",
    "4": "CFAR measurement table",
    "5": "closed forms vs independent oracles",
    "6": "invariant suite",
}


@dataclass
class Check:
    criterion: str
    name: str
    ok: bool = False
    detail: str = ""
    lines: List[str] = field(default_factory=list)


_RESULTS: List[Check] = []


class _Recorder:
    """``with acceptance("1", "name") as chk:`` -- set ``chk.ok`` / ``chk.detail`` inside.

    An exception inside the block is recorded as a failure and re-raised.
    """

    def __init__(self, criterion: str, name: str):
        self.check = Check(criterion, name)

    def __enter__(self) -> Check:
        return self.check

    def __exit__(self, exc_type, exc, tb):
        if exc_type is not None and not issubclass(exc_type, AssertionError):
            self.check.ok = False
            self.check.detail = f"raised {exc_type.__name__}: {exc}"
        _RESULTS.append(self.check)
        return False


@pytest.fixture
def acceptance():
    return _Recorder


def pytest_terminal_summary(terminalreporter):
    if not _RESULTS:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    by_criterion = {}
    for c in _RESULTS:
        by_criterion.setdefault(c.criterion, []).append(c)
    for key in sorted(by_criterion):
        checks = by_criterion[key]
        verdict = "PASS" if all(c.ok for c in checks) else "FAIL"
        passed = sum(c.ok for c in checks)
        tr.write_line(f"criterion {key} {verdict}: {CRITERIA.get(key, '')} ({passed}/{len(checks)} checks)")
        for c in checks:
            tr.write_line(f"    [{'ok' if c.ok else 'FAIL'}] {c.name}: {c.detail}")
            for line in c.lines:
                tr.write_line(f"        {line}")
