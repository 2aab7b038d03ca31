import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from marlot.config import ArenaConfig, Config, MaddpgConfig
from marlot.maddpg import Checkpoint, build_learners
from marlot.road import build_scenario


@pytest.fixture(scope="session")
def straight():
    return build_scenario("Straight", 2)


@pytest.fixture(scope="session")
def straight3():
    return build_scenario("Straight", 3)


@pytest.fixture(scope="session")
def merge():
    return build_scenario("Merge", 2)


@pytest.fixture(scope="session")
def circular():
    return build_scenario("Circular", 2)


@pytest.fixture
def cfg():
    return Config()


def random_checkpoint(n=3, seed=0, hidden=16):
    """Untrained actors: enough to exercise every code path that needs a checkpoint."""
    learners, _, _ = build_learners(n, ArenaConfig(n_agents=n), MaddpgConfig(hidden=hidden),
                                    np.random.default_rng(seed))
    return Checkpoint([ln.actor for ln in learners], {"n_agents": n})


@pytest.fixture(scope="session")
def tiny_checkpoint():
    return random_checkpoint()


# acceptance verdict lines, printed again in the terminal summary
ACCEPTANCE: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.section("acceptance criteria")
        for n in sorted(ACCEPTANCE):
            terminalreporter.write_line(ACCEPTANCE[n])
