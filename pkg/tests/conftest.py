import numpy as np
import pytest

from ymflow.grid import build_grid
from ymflow.ground_state import solve_ground_state
from ymflow.model import derive_params

# standard tier: shared across the suite
D_STD = 11
N_STD = 2001
YMIN_STD = 1e-4
YMAX_STD = 1e3


@pytest.fixture(scope="session")
def params11():
    return derive_params(11, 1, 4, eta=0.01, M=20.0)


@pytest.fixture(scope="session")
def grid_std():
    return build_grid(YMIN_STD, YMAX_STD, N_STD, d=D_STD)


@pytest.fixture(scope="session")
def gs11(params11, grid_std):
    return solve_ground_state(params11, grid_std)


@pytest.fixture(scope="session")
def ctx11(params11, gs11):
    from ymflow.linops import OperatorContext
    return OperatorContext(params11, gs11)


@pytest.fixture(scope="session")
def ladder11(ctx11):
    from ymflow.linops import build_profile_ladder
    return build_profile_ladder(ctx11, ctx11.params.L)


@pytest.fixture(scope="session")
def phi11(ctx11, ladder11):
    from ymflow.spectral import build_phi_m
    return build_phi_m(ctx11, ladder11, ctx11.params.L, ctx11.params.M)


@pytest.fixture(scope="session")
def profile11(ctx11, ladder11):
    from ymflow.profiles import build_sk
    return build_sk(ctx11, ladder11, ctx11.params.L)


def rng(seed=0):
    return np.random.default_rng(seed)
