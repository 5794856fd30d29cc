import pytest

from cmctori import Params, build_closed_profile, find_branches

FIG_PARAMS = Params(2, -0.2)


@pytest.fixture(scope="session")
def fig_params():
    return FIG_PARAMS


@pytest.fixture(scope="session")
def fig_branches():
    return find_branches(FIG_PARAMS)


@pytest.fixture(scope="session")
def fig_curves(fig_branches):
    return [build_closed_profile(b) for b in fig_branches]
