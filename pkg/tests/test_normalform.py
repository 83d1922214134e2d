import warnings

import numpy as np
import pytest

from holorealize.errors import LinearPartMismatch, PreconditionError, SmallDivisor, ZeroDivisor
from holorealize.jets import DiffeoJet, Jet, basis, conjugate
from holorealize.normalform import (
    check_negative_resonances,
    diffeo_normal_form,
    gauge_divisors,
    gauge_linearize_system,
)
from holorealize.saddle import GradedField, SaddleSystem
from holorealize.spectral import ResonanceClass, analyze_matrix, enumerate_resonances, exp_2pii

TOL = 1e-9
A4 = np.diag([-1.5, -0.25])


def example_h(order=4):
    return DiffeoJet(
        [
            Jet.from_terms(2, order, {(1, 0): -1, (0, 2): 1}),
            Jet.from_terms(2, order, {(0, 1): -1j}),
        ]
    )


def test_example_is_already_normal():
    sd = analyze_matrix(A4)
    nf = diffeo_normal_form(example_h(), sd)
    assert nf.removed == []
    assert [(r.j, r.k) for r in nf.kept] == [((0, 2), 0)]
    assert nf.normal.allclose(example_h())
    assert nf.conjugator.allclose(DiffeoJet.identity(2, 4))


def test_example_is_obstructed():
    sd = analyze_matrix(A4)
    verdict = check_negative_resonances(diffeo_normal_form(example_h(), sd), sd)
    assert verdict.name == "Obstructed"
    (obs,) = verdict.obstructions
    assert (obs.j, obs.k) == ((0, 2), 0)
    assert obs.value == pytest.approx(-1)
    assert obs.coeff == pytest.approx(1)


def test_linear_map_is_normal_and_realizable():
    A = np.array([[-1.0, 1.0], [0.0, -0.5]])
    sd = analyze_matrix(A)
    f = DiffeoJet.linear(exp_2pii(sd), 4)
    nf = diffeo_normal_form(f, sd)
    assert nf.tangent.allclose(DiffeoJet.identity(2, 4))
    assert nf.normal.allclose(conjugate(f, DiffeoJet.linear(sd.P_inv, 4)))
    assert check_negative_resonances(nf, sd).realizable


def test_all_resonant_one_dimensional_map():
    sd = analyze_matrix([[-1.0]])
    f = DiffeoJet([Jet.from_terms(1, 5, {(1,): 1, (2,): 1})])
    nf = diffeo_normal_form(f, sd)
    assert nf.normal.allclose(f)
    assert nf.conjugator.allclose(DiffeoJet.identity(1, 5))
    assert check_negative_resonances(nf, sd).realizable


def test_linear_part_mismatch():
    sd = analyze_matrix(A4)
    with pytest.raises(LinearPartMismatch):
        diffeo_normal_form(DiffeoJet.linear(np.diag([1.0, 1.0]), 3), sd)
    with pytest.raises(PreconditionError):
        diffeo_normal_form(example_h(), sd, order=1)


def random_case(rng, n, order, jordan):
    """Random negative spectrum with all divisors |lambda^j - lambda_k| >= 0.2 where nonzero."""
    while True:
        mu = -rng.uniform(0.1, 2, size=n)
        if jordan:
            mu[1] = mu[0]
        vals = [abs(np.exp(2j * np.pi * r.value) - 1) for r in enumerate_resonances(mu, order) if not r.cls.is_integer]
        if not vals or min(vals) > 0.2:
            break
    J = np.diag(mu).astype(complex)
    if jordan:
        J[0, 1] = 1
    Q = np.eye(n) + 0.3 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    sd = analyze_matrix(Q @ J @ np.linalg.inv(Q), eps_request=0.5)
    dim = basis(n, order).dim
    arr = np.zeros((n, dim), dtype=complex)
    arr[:, 1 : 1 + n] = exp_2pii(sd)
    scale = 0.01 if jordan else 0.2
    arr[:, 1 + n :] = scale * (rng.standard_normal((n, dim - 1 - n)) + 1j * rng.standard_normal((n, dim - 1 - n)))
    return sd, DiffeoJet.from_array(n, order, arr)


def nonresonant_residue(nf, sd):
    return max(
        (abs(nf.normal[r.k][r.j]) for r in enumerate_resonances(sd, nf.normal.order) if r.cls is ResonanceClass.NON_INTEGER),
        default=0.0,
    )


@pytest.mark.parametrize("seed", range(30))
def test_postcondition_and_conjugacy_audit(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4))
    order = int(rng.integers(2, 6))
    jordan = n >= 2 and seed % 2 == 1
    sd, f = random_case(rng, n, order, jordan)
    nf = diffeo_normal_form(f, sd)
    assert nonresonant_residue(nf, sd) <= TOL
    g = conjugate(f, DiffeoJet.linear(sd.P_inv, order))
    assert conjugate(g, nf.tangent).allclose(nf.normal, TOL)
    scale = max(1.0, nf.conjugator.max_abs())
    assert conjugate(f, nf.conjugator).distance(nf.normal) <= TOL * scale
    # resonant coefficients never move beyond forced updates: the tangent part
    # has no component along resonant directions
    for r in enumerate_resonances(sd, order):
        if r.cls.is_integer:
            assert nf.tangent[r.k][r.j] == 0


@pytest.mark.parametrize("seed", range(10))
def test_idempotence(seed):
    rng = np.random.default_rng(100 + seed)
    sd, f = random_case(rng, int(rng.integers(1, 4)), 4, False)
    nf = diffeo_normal_form(f, sd)
    sd_normal = analyze_matrix(sd.jordan)
    again = diffeo_normal_form(nf.normal, sd_normal)
    assert again.normal.allclose(nf.normal, TOL)
    assert again.tangent.allclose(DiffeoJet.identity(sd.n, 4), TOL)


def test_small_divisor_warning():
    # R_{2;1} = -mu = 1 - 1.3e-6 is not an integer at tau_int = 1e-6, but the
    # divisor |lambda^2 - lambda| ~ 2 pi 1.3e-6 is below 10 tau_int
    sd = analyze_matrix([[-1.0 + 1.3e-6]])
    f = DiffeoJet([Jet.from_terms(1, 2, {(1,): sd.lam[0], (2,): 1e-3})])
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        nf = diffeo_normal_form(f, sd)
    assert any(issubclass(w.category, SmallDivisor) for w in caught)
    assert nf.removed == [((2,), 0)]
    assert abs(nf.normal[0][(2,)]) <= TOL


def example_system(rng, kmax=6, order=3):
    terms = [
        (m, exp, k, 0.3 * complex(*rng.standard_normal(2)))
        for m in range(4)
        for exp in [(2, 0), (1, 1), (0, 2), (3, 0), (1, 2)]
        for k in range(2)
    ]
    return SaddleSystem(A4, GradedField.from_terms(2, order, kmax, terms))


def test_gauge_divisor_table():
    table = gauge_divisors([-1.5, -0.25], {2}, 20)
    first = {R for (m, j), k, R in table if k == 0 and m == 0}
    second = {R for (m, j), k, R in table if k == 1 and m == 0}
    assert first == {1.5, 0.25, -1.0}
    assert second == {2.75, 1.5, 0.25}
    assert min(abs(R) for _, _, R in table) == pytest.approx(0.25)
    # R_{k,i,j;target} = R_{(i,j)} - k
    for (m, j), k, R in table:
        base = [(mm, jj, kk, RR) for (mm, jj), kk, RR in table if mm == 0 and jj == j and kk == k][0][3]
        assert R == pytest.approx(base - m)


def test_gauge_removes_degree_two():
    rng = np.random.default_rng(3)
    Z = example_system(rng)
    sd = analyze_matrix(A4)
    res = gauge_linearize_system(Z, sd, degrees={2})
    T = res.transformed
    assert np.allclose(T.A, A4)
    assert len(res.generators) == 1
    K = T.kmax
    assert K >= 6
    for m in range(K + 1):
        for exp in [(2, 0), (1, 1), (0, 2)]:
            for k in range(2):
                assert abs(T.G.coeff(m, exp, k)) <= TOL
    # the generator solves a + alpha R = 0 coefficientwise
    W = res.generator
    for (m, j), k, R in res.solved:
        assert W.coeff(m, j, k) * R == pytest.approx(-Z.G.coeff(m, j, k), abs=1e-12)


def test_gauge_on_linear_system():
    Z = SaddleSystem.linear(A4, 3, 4)
    res = gauge_linearize_system(Z, analyze_matrix(A4), degrees={2}, kmax=4)
    assert res.generator.max_abs() == 0
    assert res.transformed.G.max_abs() == 0


def test_gauge_zero_divisor():
    Z = SaddleSystem.linear([[-1.0]], 3, 3)
    with pytest.raises(ZeroDivisor) as err:
        gauge_linearize_system(Z, [-1.0], targets=[(1, (2,), 0)])
    assert err.value.monomials == [(1, (2,), 0)]
    with pytest.raises(ZeroDivisor):
        gauge_linearize_system(Z, [-1.0], degrees={2}, kmax=3)


def test_gauge_with_triangular_linear_part():
    rng = np.random.default_rng(4)
    G = example_system(rng).G
    A = np.array([[-1.5, 0.3], [0.0, -1.5]])
    res = gauge_linearize_system(SaddleSystem(A, G), [-1.5, -1.5], degrees={2})
    for (m, j), k, R in res.solved:
        assert abs(res.transformed.G.coeff(m, j, k)) <= TOL
