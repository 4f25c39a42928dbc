import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))


@pytest.fixture
def rng():
    return np.random.default_rng(20240611)


@pytest.fixture
def path3():
    from spatial_ordinal.geometry import SpatialGraph

    return SpatialGraph.from_edges(3, [(0, 1), (1, 2)])


def pytest_configure(config):
    import acceptance_log

    acceptance_log.REPORTER = config.pluginmanager.get_plugin("terminalreporter")


def pytest_terminal_summary(terminalreporter):
    from acceptance_log import LINES

    if LINES:
        terminalreporter.section("acceptance criteria")
        for line in LINES:
            terminalreporter.write_line(line)
