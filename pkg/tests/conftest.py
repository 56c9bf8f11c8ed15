"""Shared fixtures: the bundled New England case, loaded once per session."""

from __future__ import annotations

from importlib.resources import files

import pytest

from peermarket import (
    CONSUMER,
    PRODUCER,
    SolverConfig,
    build_community,
    clear_market,
    load_agents,
    load_network,
)

DATA_DIR = files("peermarket") / "data"
NETWORK_FILE = str(DATA_DIR / "new_england.net")
AGENTS_FILE = str(DATA_DIR / "new_england_agents.csv")

# Tighter than the solver defaults so the clearing price is resolved well
# below the oracle-comparison tolerances; converges in about 13k iterations.
REFERENCE_CONFIG = SolverConfig(eps_primal=1e-3, max_iterations=60000)


@pytest.fixture(scope="session")
def network():
    return load_network(NETWORK_FILE)


@pytest.fixture(scope="session")
def community(network):
    return load_agents(AGENTS_FILE, network=network)


@pytest.fixture(scope="session")
def free_result(community):
    result = clear_market(community, config=REFERENCE_CONFIG)
    assert result.converged
    return result


def make_pair_community():
    """Producer (a=0.1, b=20) facing one consumer (a=0.1, b=80).

    Marginal cost 20 + 0.1 P meets marginal utility 80 - 0.1 |P| at
    P = 300 MW, price 50; with a 10 unit fee split across the pair the
    crossing moves to 250 MW at the same price.
    """
    return build_community([
        (1, 1, PRODUCER, 0.1, 20.0, 0.0, 0.0, 500.0),
        (2, 2, CONSUMER, 0.1, 80.0, 0.0, -500.0, 0.0),
    ])


@pytest.fixture
def pair_community():
    return make_pair_community()


# Acceptance results are echoed in one block at the end of the run so the
# pass/fail line for every criterion is visible even under output capture.

_ACCEPTANCE_LINES = []


def record_acceptance(number, passed, detail):
    line = f"ACCEPTANCE {number}: {'PASS' if passed else 'FAIL'} ({detail})"
    _ACCEPTANCE_LINES.append((number, line))
    return passed, line


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE_LINES:
        return
    terminalreporter.section("acceptance criteria")
    for _, line in sorted(_ACCEPTANCE_LINES):
        terminalreporter.write_line(line)
