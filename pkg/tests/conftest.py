import numpy as np
import pytest

from nlifem.geometry import build_dof_map, build_mesh
from nlifem.operators import get_example


@pytest.fixture
def ex1_regions():
    return get_example("ex1").regions((0.25, 0.5))


@pytest.fixture
def ex1_dofmap(ex1_regions):
    return build_dof_map(build_mesh(ex1_regions, 0.125), 2)


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def gauss_composite(f, cuts, n=12):
    """Independent composite Gauss-Legendre oracle on sorted cut points."""
    x, w = np.polynomial.legendre.leggauss(n)
    total = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        if b > a:
            xm = 0.5 * (a + b) + 0.5 * (b - a) * x
            total += 0.5 * (b - a) * np.sum(w * f(xm))
    return total
