import os
import sys

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from pasmooth.surface import ModelParams  # noqa: E402


@pytest.fixture(scope="session")
def params():
    return ModelParams()


@pytest.fixture(scope="session")
def linear_params():
    return ModelParams(slowdown=False)


@pytest.fixture(scope="session")
def rect(params):
    from pasmooth.tower import choose_rectangle
    return choose_rectangle(params)


@pytest.fixture(scope="session")
def branches(params, rect):
    from pasmooth.tower import enumerate_branches
    return enumerate_branches(params, rect, 4000, 5000, seed=0, n_random=4000)


def pytest_terminal_summary(terminalreporter):
    try:
        from test_acceptance import RESULTS
    except ImportError:
        return
    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
