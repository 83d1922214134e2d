import numpy as np
import pytest

from holorealize.jets import DiffeoJet, Jet, basis


def random_jet(rng, nvars, order, scale=1.0, low=0):
    b = basis(nvars, order)
    c = scale * (rng.standard_normal(b.dim) + 1j * rng.standard_normal(b.dim))
    c[: b.offsets[low]] = 0
    return Jet(nvars, order, c)


def random_diffeo(rng, n, order, scale=0.3, linear=None):
    comps = [random_jet(rng, n, order, scale, low=2) for _ in range(n)]
    if linear is None:
        linear = np.eye(n) + 0.3 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    return DiffeoJet.linear(linear, order) + DiffeoJet(comps)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
