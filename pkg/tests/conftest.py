import numpy as np
import pytest

from absalloc.model import Assignment, Scenario


def make_scenario(I=5, J=1, M=1, L=None, seed=0, tau=500e3, **kw):
    rng = np.random.default_rng(seed)
    users = 1 + rng.uniform(0, 1000, (I, 2))
    return Scenario(users=users, J=J, M=M, L=I if L is None else L, tau=tau,
                    area=(1, 1001, 1, 1001), **kw)


def one_per_user(I, j=0):
    """Every user on ABS j, QPSK, its own subcarrier."""
    return Assignment({(i, 1, j, i) for i in range(I)})


def nearest_assignment(scenario, centers):
    ab = np.argmin(((scenario.users[:, None, :] - np.asarray(centers)[None]) ** 2).sum(-1), axis=1)
    return Assignment({(i, 1, int(ab[i]), i) for i in range(scenario.I)})


@pytest.fixture
def urban():
    from absalloc.model import ChannelParams
    return ChannelParams.urban()
