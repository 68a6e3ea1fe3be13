import numpy as np
import pytest

from kno import spectral as sp
from kno.numerics import make_grid

PAPER_HALF_WIDTH = 4.8437


@pytest.fixture(scope="session")
def grid1d():
    return make_grid(1, 3.0, 64, "trapezoid")


@pytest.fixture(scope="session")
def grid2d():
    return make_grid(2, PAPER_HALF_WIDTH, 16, "periodic")


@pytest.fixture(scope="session")
def domain():
    return sp.DomainParams.from_half_width(PAPER_HALF_WIDTH)


@pytest.fixture(scope="session")
def kernel16(domain):
    return sp.precompute_kernel(16, domain, 16, 16)


@pytest.fixture(scope="session")
def kernel8(domain):
    return sp.precompute_kernel(8, domain, 8, 8)


@pytest.fixture(scope="session")
def direct8(domain):
    return sp.assemble_direct_weights(8, domain, 8, 8)
