import numpy as np
import pytest

from ipdeswitch.measure import FiniteLevyMeasure
from ipdeswitch.problem import SwitchingProblem

HUGE = 1e6


def make_problem(m=2, k=1, d=None, l=None, T=1.0, costs=None, g=HUGE, terminal="0", atoms=(), **kw):
    """Small problem builder with zero dynamics and prohibitive switching unless told otherwise."""
    d = k if d is None else d
    l = k if l is None else l
    levy = FiniteLevyMeasure.from_atoms(atoms, l) if atoms else FiniteLevyMeasure.empty(l)
    return SwitchingProblem.build(m=m, k=k, d=d, l=l, T=T, costs=costs or {}, g_default=g,
                                  terminal=terminal, levy=levy, **kw)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
