import numpy as np
import pytest

from mhd_inhibit import PhysicalParams, SlabDomain, make_uniform_grid


@pytest.fixture
def unit_params():
    return PhysicalParams(g=1.0, lam=1.0, mu=0.0, M_bar=(0.0, 0.0, 1.0))


@pytest.fixture
def slab_pi():
    return SlabDomain(a=0.0, b=np.pi, L1=1.0, L2=1.0)


@pytest.fixture
def grid_small(slab_pi):
    return make_uniform_grid(slab_pi, 8, 8, 33)
