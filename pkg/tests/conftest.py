import numpy as np
import pytest

from dynbandit.lti_env import load_fixture


@pytest.fixture
def synthetic():
    return load_fixture("synthetic")


@pytest.fixture
def advertising():
    return load_fixture("advertising")


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def partial_sum_h(system, count=400):
    """Independent oracle: brute-force sum of impulse responses."""
    total = system.theta.copy()
    P = np.eye(system.n)
    for _ in range(count):
        total = total + system.B.T @ P.T @ system.omega
        P = P @ system.A
    return total


ACCEPTANCE_LINES: dict[int, str] = {}


def record_criterion(number: int, name: str, passed: bool, detail: str) -> None:
    line = f"CRITERION {number:2d} [{'PASS' if passed else 'FAIL'}] {name}: {detail}"
    ACCEPTANCE_LINES[number] = line
    print(line)


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_LINES):
            terminalreporter.write_line(ACCEPTANCE_LINES[k])
