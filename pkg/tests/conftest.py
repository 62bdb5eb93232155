import numpy as np
import pytest

from abcnet.graph import from_edges


@pytest.fixture
def path5():
    return from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4)])


@pytest.fixture
def cycle4():
    return from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)])


@pytest.fixture
def star10():
    # center 0, leaves 1..10
    return from_edges(11, [(0, i) for i in range(1, 11)])


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


_GATES: dict[int, str] = {}


@pytest.fixture
def gate():
    """Record one PASS/FAIL line for an acceptance criterion."""

    def record(number: int, name: str, ok: bool, detail: str) -> bool:
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number} {name}: {detail}"
        _GATES[number] = line
        print(line)
        return ok

    return record


def pytest_terminal_summary(terminalreporter):
    if _GATES:
        terminalreporter.section("acceptance")
        for n in sorted(_GATES):
            terminalreporter.write_line(_GATES[n])
