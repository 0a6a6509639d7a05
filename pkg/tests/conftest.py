from fractions import Fraction

import pytest

from bnflab.scalars import Backend
from bnflab.frequencies import FrequencyVector


@pytest.fixture(scope="session")
def exact():
    return Backend("exact")


@pytest.fixture(scope="session")
def flt():
    return Backend("float", 256)


@pytest.fixture(scope="session")
def omega_21(exact):
    """Exact-rational (1, -21/10): divisor of the (2,1) saddle is -1/10."""
    return FrequencyVector((Fraction(1), Fraction(-21, 10)), exact)


@pytest.fixture(scope="session")
def omega_res(exact):
    """Resonant (2, -1) with the declared relation (1, 2)."""
    return FrequencyVector((Fraction(2), Fraction(-1)), exact, lattice=((1, 2),))
