"""Shared fixtures and the acceptance-criterion reporting hook."""

import pytest

from rwre_lab import env

_CRITERION_LINES = []


def pytest_terminal_summary(terminalreporter):
    if _CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in _CRITERION_LINES:
            terminalreporter.write_line(line)


@pytest.fixture(scope="session")
def criterion_report():
    """Record one pass/fail line per acceptance criterion; always printed."""

    def record(number, ok, detail):
        line = f"[{'PASS' if ok else 'FAIL'}] criterion {number}: {detail}"
        print(line, flush=True)
        _CRITERION_LINES.append(line)
        return ok

    return record


@pytest.fixture(scope="session")
def two_point_model():
    """IID two-point environment with rho in {2, 1/2}, P(rho=2) = 0.4."""
    return env.make_iid_two_point(omega_hi=2 / 3, omega_lo=1 / 3, q=0.4, master_seed=42)


@pytest.fixture(scope="session")
def markov_model():
    """Admissible two-state Markov environment (transient, zero-speed)."""
    return env.make_markov_finite(
        omega_states=[1 / 3, 2 / 3],
        transition=[[0.4, 0.6], [0.3, 0.7]],
        master_seed=43,
    )


@pytest.fixture(scope="session")
def ballistic_model():
    """Constant omega = 2/3: transient with positive speed 1/3."""
    return env.make_constant(omega=2 / 3, master_seed=44)
