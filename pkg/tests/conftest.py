import numpy as np
import pytest
from hypothesis import settings

from groupoidlab import gallery

settings.register_profile("default", max_examples=25, deadline=None)
settings.load_profile("default")

GRAPH_M1 = [0.0, 0.1, 0.0, 0.05]                      # W = 0.1 q^3, V = 0.05 p^3
GRAPH_M2 = [0.05, 0.1, -0.05, 0.05, 0.03, 0.02]
MIXED_M1 = [0.0, 0.1]                                  # W = 0.1 q^3, V = 0


@pytest.fixture(scope="session")
def standard():
    return gallery("standard", [], 1, box_radius=2.0)


@pytest.fixture(scope="session")
def graph1():
    return gallery("graph", GRAPH_M1, 1)


@pytest.fixture(scope="session")
def graph2():
    return gallery("graph", GRAPH_M2, 2)


@pytest.fixture(scope="session")
def mixed():
    return gallery("mixed", MIXED_M1, 1, box_radius=6.0)


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


def pytest_terminal_summary(terminalreporter):
    import sys
    mod = sys.modules.get("test_acceptance")
    lines = getattr(mod, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
