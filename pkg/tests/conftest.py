import functools

import pytest

from pbnmt.fixture import make_fixture


@functools.lru_cache(maxsize=None)
def fixture_for(seed: int, **sizes):
    return make_fixture(seed, **sizes)


@pytest.fixture(scope="session")
def small_fixture():
    return fixture_for(1, n_test=12, min_len=3, max_len=6)


ACCEPTANCE_LINES: list[str] = []


def record_criterion(name: str, ok: bool, detail: str) -> None:
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
