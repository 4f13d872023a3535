import os

import pytest
from hypothesis import HealthCheck, settings
from hypothesis import strategies as st

from diskmine.txdb import BINARY, TEXT, DbLocator, write_db

settings.register_profile("default", deadline=None, max_examples=60,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.register_profile("ci", deadline=None, max_examples=25,
                          suppress_health_check=[HealthCheck.function_scoped_fixture])
settings.load_profile(os.environ.get("HYPOTHESIS_PROFILE", "default"))

A, B, C, D = 0, 1, 2, 3
LETTERS = "abcdefghijklmnopqrstuvwxyz"

# the four-transaction running example
D1 = [(A, B, D), (B, C, D), (A, C), (A, B)]


def letters(items):
    return "".join(LETTERS[i] for i in items)


def ids(word):
    return tuple(sorted(LETTERS.index(ch) for ch in word))


def budget_for_nodes(nodes: int) -> int:
    """Smallest byte budget whose tree share holds ``nodes`` nodes."""
    return -(-nodes * 40 * 10 // 9)


@pytest.fixture
def d1_path(tmp_path):
    return write_db(DbLocator(tmp_path / "d1.txt", TEXT), D1)


@pytest.fixture
def make_db(tmp_path):
    counter = [0]

    def make(transactions, fmt=BINARY):
        counter[0] += 1
        suffix = ".db" if fmt == BINARY else ".txt"
        return write_db(DbLocator(tmp_path / f"db{counter[0]}{suffix}", fmt), transactions)

    return make


def transactions_strategy(max_items=15, max_tx=200, min_tx=0):
    return st.integers(1, max_items).flatmap(
        lambda m: st.lists(st.frozensets(st.integers(0, m - 1)).map(lambda s: tuple(sorted(s))),
                           min_size=min_tx, max_size=max_tx))


# one line per acceptance criterion, printed after the run
CRITERIA = {}


def record_criterion(number: int, ok: bool, text: str):
    CRITERIA[number] = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {text}"
    print(CRITERIA[number])


def pytest_terminal_summary(terminalreporter):
    if CRITERIA:
        terminalreporter.section("acceptance criteria")
        for number in sorted(CRITERIA):
            terminalreporter.write_line(CRITERIA[number])
