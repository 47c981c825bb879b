import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from seqpolicy.core import dataset_from_arrays
from seqpolicy.numerics import RngStream

settings.register_profile("default", max_examples=50, deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")

ACCEPTANCE_LINES: list[str] = []


@pytest.fixture
def rng():
    return RngStream(12345)


@pytest.fixture
def acceptance_report():
    """Collects one pass/fail line per acceptance criterion."""
    return ACCEPTANCE_LINES.append


def single_stage(actions, rewards, probs=0.5, states=None, n_arms=2):
    actions = np.asarray(actions)
    n = actions.shape[0]
    states = np.zeros((n, 1)) if states is None else np.asarray(states, dtype=float).reshape(n, -1)
    probs = np.broadcast_to(np.asarray(probs, dtype=float), (n,))
    return dataset_from_arrays([states], actions, np.asarray(rewards, dtype=float), probs, [n_arms])


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
