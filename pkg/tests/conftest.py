import time

import pytest

from guardstrength import corpus

ACCEPTANCE = []  # (criterion, passed, detail), filled by test_acceptance
SUITE_LIMIT_S = 300
_start = time.perf_counter()


@pytest.fixture(scope="session")
def corpus_entries():
    return {name: corpus.load(name) for name in corpus.names()}


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    tr = terminalreporter
    tr.section("acceptance criteria")
    for crit, ok, detail in sorted(ACCEPTANCE, key=lambda r: r[0]):
        tr.line(f"{'PASS' if ok else 'FAIL'} criterion {crit}: {detail}")
    elapsed = time.perf_counter() - _start
    ok = elapsed < SUITE_LIMIT_S
    tr.line(f"{'PASS' if ok else 'FAIL'} criterion 8 (suite runtime): {elapsed:.0f} s, limit {SUITE_LIMIT_S} s")
