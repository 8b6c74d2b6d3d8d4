"""Shared fixtures; collects acceptance results and prints a PASS/FAIL summary."""
from collections import OrderedDict

import pytest

_ACCEPTANCE = OrderedDict()


@pytest.fixture
def record():
    """``record(criterion, ok, detail)``: register one check of an acceptance criterion.

    A criterion passes when every check registered under it passes.  Each
    check is printed immediately and summarised at the end of the session.
    """

    def _record(criterion, ok, detail):
        _ACCEPTANCE.setdefault(int(criterion), []).append((bool(ok), str(detail)))
        print(f"ACCEPTANCE {criterion}: {'PASS' if ok else 'FAIL'} - {detail}")
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("ACCEPTANCE SUMMARY")
    for crit in sorted(_ACCEPTANCE):
        checks = _ACCEPTANCE[crit]
        ok = all(c for c, _ in checks)
        tr.write_line(f"CRITERION {crit:2d}: {'PASS' if ok else 'FAIL'}")
        for c, detail in checks:
            tr.write_line(f"    [{'ok' if c else 'FAIL'}] {detail}")
