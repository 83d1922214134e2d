import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from holorealize.errors import NonNilpotent, NonUnipotent, NotNormalized, XNotFixed
from holorealize.formalcalc import diagonal_lie_action, exp_vf, log_diffeo, restrict_x, suspend_jordan_chevalley
from holorealize.jets import DiffeoJet, Jet, VFieldJet

from conftest import random_diffeo, random_jet

TOL = 1e-9


def unipotent_linear(rng, n):
    # nilpotent parts of the size the pipeline produces (about 2 pi eps)
    U = np.triu(0.1 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))), 1)
    return np.eye(n) + U


def nilpotent_field(rng, n, order, scale=0.3):
    N = np.triu(0.1 * rng.standard_normal((n, n)), 1)
    comps = [random_jet(rng, n, order, scale, low=2) for _ in range(n)]
    return VFieldJet.linear(N, order) + VFieldJet(comps)


def test_exp_of_linear_nilpotent_field():
    X = VFieldJet([Jet.zero(2, 3), Jet.variable(2, 3, 0)])
    f = exp_vf(X)
    assert f.allclose(DiffeoJet([Jet.variable(2, 3, 0), Jet.variable(2, 3, 1) + Jet.variable(2, 3, 0)]))


def test_exp_of_y_squared():
    f = exp_vf(VFieldJet([Jet.monomial(1, 4, (2,))]))
    expected = Jet.from_terms(1, 4, {(1,): 1, (2,): 1, (3,): 1, (4,): 1})
    assert f[0].allclose(expected)


def test_exp_of_zero_is_identity():
    assert exp_vf(VFieldJet.zero(3, 4)).allclose(DiffeoJet.identity(3, 4))


def test_log_examples():
    shear = DiffeoJet([Jet.variable(2, 3, 0), Jet.variable(2, 3, 1) + Jet.variable(2, 3, 0)])
    assert log_diffeo(shear).allclose(VFieldJet([Jet.zero(2, 3), Jet.variable(2, 3, 0)]))
    f = DiffeoJet([Jet.from_terms(1, 3, {(1,): 1, (2,): 1})])
    assert log_diffeo(f)[0].allclose(Jet.from_terms(1, 3, {(2,): 1, (3,): -1}))
    assert log_diffeo(DiffeoJet.identity(2, 5)).max_abs() == 0


def test_non_nilpotent_and_non_unipotent_rejected():
    with pytest.raises(NonNilpotent):
        exp_vf(VFieldJet.linear(np.diag([1.0, 0.0]), 3))
    with pytest.raises(NonUnipotent):
        log_diffeo(DiffeoJet.linear(np.diag([1.0, -1.0]), 3))


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 3), st.integers(1, 5), st.integers(0, 2**32 - 1))
def test_exp_log_bijection(n, order, seed):
    rng = np.random.default_rng(seed)
    f = random_diffeo(rng, n, order, linear=unipotent_linear(rng, n))
    assert exp_vf(log_diffeo(f)).allclose(f, TOL)
    X = nilpotent_field(rng, n, order)
    assert log_diffeo(exp_vf(X)).allclose(X, TOL)


def test_flow_property(rng):
    X = nilpotent_field(rng, 3, 5)
    assert exp_vf(X).compose(exp_vf(X * -1)).allclose(DiffeoJet.identity(3, 5), TOL)


def test_exp_minus_identity_starts_at_x(rng):
    # with X of lowest order 3, exp(X) - id - X starts in degree 2*3 - 1 = 5
    X = VFieldJet([random_jet(rng, 2, 6, low=3) for _ in range(2)])
    rest = exp_vf(X) - DiffeoJet.identity(2, 6) - X
    for d in range(5):
        assert rest.homogeneous(d).max_abs() == 0
    assert rest.homogeneous(5).max_abs() > 0


def suspended(n, order, lam, terms):
    comps = [Jet.variable(n + 1, order, 0)]
    for k in range(n):
        comps.append(lam[k] * Jet.variable(n + 1, order, k + 1))
    for k, exp, c in terms:
        comps[k + 1] = comps[k + 1] + Jet.monomial(n + 1, order, exp, c)
    return DiffeoJet(comps)


def test_split_of_linear_suspension_is_trivial():
    F = suspended(2, 4, [-1, -1j], [])
    F_s, F_u = suspend_jordan_chevalley(F)
    assert F_s.allclose(F)
    assert F_u.allclose(DiffeoJet.identity(3, 4))


def test_split_with_unit_eigenvalue():
    F = suspended(1, 4, [1], [(0, (1, 2), 1.0)])
    F_s, F_u = suspend_jordan_chevalley(F)
    assert F_s.allclose(DiffeoJet.identity(2, 4))
    assert F_u.allclose(F)


def test_split_of_resonant_monomial():
    lam1 = np.exp(2j * np.pi * -0.25)
    lam2 = lam1**2  # lam1^2 * lam2^0 = lam2: y1^2 e_2 is resonant
    F = suspended(2, 4, [lam1, lam2], [(1, (3, 2, 0), 0.7)])
    F_s, F_u = suspend_jordan_chevalley(F)
    expected = suspended(2, 4, [1, 1], [(1, (3, 2, 0), 0.7 / lam2)])
    assert F_u.allclose(expected)
    assert F_s.compose(F_u).allclose(F)
    assert np.allclose(F_u[0].coeffs, Jet.variable(3, 4, 0).coeffs)


def test_split_errors():
    F = suspended(1, 3, [-1], [])
    bad = DiffeoJet([F[0] + Jet.monomial(2, 3, (0, 2)), F[1]])
    with pytest.raises(XNotFixed):
        suspend_jordan_chevalley(bad)
    twisted = DiffeoJet.linear(np.array([[1, 0, 0], [0, -1, 1], [0, 0, 1j]]), 3)
    with pytest.raises(NotNormalized):
        suspend_jordan_chevalley(twisted)


def test_log_of_resonant_suspension_commutes_with_semisimple_part():
    # mu = -1/4, -1/2: y1^2 e_2 has R = 0 and y1 y2^2 e_1 has R = 1
    mu = np.array([-0.25, -0.5])
    lam = np.exp(2j * np.pi * mu)
    F = suspended(2, 5, lam, [(1, (0, 2, 0), 0.4), (0, (1, 1, 2), 0.1)])
    weights = np.r_[1.0, mu]
    assert diagonal_lie_action(F, weights).max_abs() < TOL
    _, F_u = suspend_jordan_chevalley(F)
    assert diagonal_lie_action(log_diffeo(F_u), weights).max_abs() < TOL


def test_restrict_x_sums_x_powers():
    F = suspended(1, 5, [1], [(0, (1, 2), 2.0), (0, (3, 2), 5.0)])
    arr = restrict_x(F, 2)
    assert np.allclose(arr[0], [0, 1, 7])
