import warnings
from fractions import Fraction
from math import comb

import numpy as np
import pytest
import scipy.linalg
from hypothesis import given, settings, strategies as st

from holorealize.errors import BorderlineInteger, IllConditioned, NonNegativeSpectrum
from holorealize.spectral import (
    Resonance,
    ResonanceClass,
    aberth_roots,
    analyze_matrix,
    charpoly,
    classify,
    degree_bound,
    enumerate_resonances,
    exp_2pii,
    matrix_from_json,
    matrix_to_json,
    negative_resonance_degree_bound,
    resonance_value,
)

NI, NEG, ZERO, POS = (
    ResonanceClass.NON_INTEGER,
    ResonanceClass.NEGATIVE_INTEGER,
    ResonanceClass.ZERO,
    ResonanceClass.POSITIVE_INTEGER,
)


def random_negative_matrix(rng, n):
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    shift = np.max(np.linalg.eigvals(A).real) + 0.3 + rng.random()
    return A - shift * np.eye(n)


def test_aberth_matches_numpy_roots(rng):
    for deg in range(1, 9):
        c = rng.standard_normal(deg + 1) + 1j * rng.standard_normal(deg + 1)
        ours = np.sort_complex(aberth_roots(c))
        ref = np.sort_complex(np.roots(c))
        assert np.allclose(ours, ref, atol=1e-8)


def test_charpoly_matches_numpy(rng):
    A = rng.standard_normal((4, 4))
    assert np.allclose(charpoly(A), np.poly(A))


def test_analyze_diagonal_example():
    sd = analyze_matrix(np.diag([-1.5, -0.25]))
    assert np.allclose(sd.mu, [-1.5, -0.25])
    assert np.allclose(sd.A_s, sd.A) and np.allclose(sd.A_N, 0)
    assert sd.delta0 == pytest.approx(0.2375) and sd.delta1 == pytest.approx(1.575)


def test_analyze_jordan_block():
    sd = analyze_matrix(np.array([[-1.0, 1.0], [0.0, -1.0]]), eps_request=0.01)
    assert np.allclose(sd.A_s, -np.eye(2))
    assert np.allclose(sd.A_N, [[0, 1], [0, 0]])
    assert np.allclose(sd.P_inv @ sd.A_N @ sd.P, [[0, 0.01], [0, 0]])
    assert np.allclose(sd.P, np.diag([1, 0.01]))
    assert sd.blocks == (2,)


def test_analyze_minus_identity():
    sd = analyze_matrix(-np.eye(2))
    assert np.allclose(sd.A_s, -np.eye(2)) and np.allclose(sd.A_N, 0)
    assert sd.delta0 < 1 < sd.delta1


def test_mu_ordering_by_real_part():
    sd = analyze_matrix(np.diag([-0.25, -1.5]))
    assert np.allclose(sd.mu, [-1.5, -0.25])
    assert np.allclose(sd.P_inv @ sd.A @ sd.P, np.diag([-1.5, -0.25]))


def test_nonnegative_spectrum_rejected():
    with pytest.raises(NonNegativeSpectrum):
        analyze_matrix(np.diag([-1.0, 0.0]))
    with pytest.raises(NonNegativeSpectrum):
        analyze_matrix(np.array([[0.5]]))


def test_ill_conditioned_cluster():
    with pytest.raises(IllConditioned):
        analyze_matrix(np.array([[-1.0, 1.0], [0.0, -1.0 - 1e-5]]))


@settings(max_examples=60, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 4))
def test_reconstruction_and_split(seed, n):
    rng = np.random.default_rng(seed)
    A = random_negative_matrix(rng, n)
    sd = analyze_matrix(A)
    nA = np.linalg.norm(A, 2)
    assert np.linalg.norm(sd.P @ sd.jordan @ sd.P_inv - A) <= 1e-8 * nA
    bound = 1e-8 * (1 + nA**n)
    assert np.linalg.norm(sd.A_s + sd.A_N - A) <= bound
    assert np.linalg.norm(sd.A_s @ sd.A_N - sd.A_N @ sd.A_s) <= bound
    assert np.linalg.norm(np.linalg.matrix_power(sd.A_N, n)) <= bound
    assert np.all(-sd.delta1 < sd.mu.real) and np.all(sd.mu.real < -sd.delta0)


@pytest.mark.parametrize(
    "A",
    [
        np.array([[-1.0, 1, 0], [0, -1, 1], [0, 0, -1]]),
        np.array([[-2.0, 1, 0, 0], [0, -2, 0, 0], [0, 0, -2, 1], [0, 0, 0, -2]]),
        np.array([[-1.0, 1, 0], [0, -1, 0], [0, 0, -0.5]]),
    ],
)
def test_defective_matrices(A, rng):
    Q = np.eye(len(A)) + 0.3 * rng.standard_normal(A.shape)
    B = Q @ A @ np.linalg.inv(Q)
    sd = analyze_matrix(B)
    assert np.linalg.norm(sd.P @ sd.jordan @ sd.P_inv - B) <= 1e-8 * np.linalg.norm(B)
    assert np.linalg.norm(np.linalg.matrix_power(sd.A_N, len(A))) <= 1e-8


def test_eq6_sampling(rng):
    A = np.array([[-1.0, 1, 0], [0, -1, 0], [0, 0, -0.5]]) + np.diag([0, 0, 0.1j])
    for M in (A, random_negative_matrix(rng, 3)):
        sd = analyze_matrix(M, eps_request=0.5)
        J = sd.jordan
        y = rng.standard_normal((10_000, 3)) + 1j * rng.standard_normal((10_000, 3))
        y /= np.linalg.norm(y, axis=1)[:, None]
        q = np.real(np.einsum("ij,ij->i", (J @ y.T).T, y.conj()))
        assert np.all(q > -sd.delta1 + sd.eps)
        assert np.all(q < -sd.delta0 - sd.eps)


def test_exp_2pii_matches_expm(rng):
    for n in (1, 2, 3):
        A = random_negative_matrix(rng, n)
        sd = analyze_matrix(A)
        assert np.allclose(exp_2pii(sd), scipy.linalg.expm(2j * np.pi * A), atol=1e-9)
    sd = analyze_matrix(np.array([[-1.0, 1.0], [0.0, -1.0]]))
    assert np.allclose(exp_2pii(sd), scipy.linalg.expm(2j * np.pi * sd.A), atol=1e-9)


def test_resonance_value_examples():
    assert resonance_value([-1.5, -0.25], (0, 2), 0) == pytest.approx(-1)
    assert resonance_value([-1.5, -0.25], (1, 0), 0) == 0
    assert resonance_value([-1.0, -1.0], (2, 1), 1) == pytest.approx(2)


def test_classify_examples():
    assert classify(-1.0) is NEG
    assert classify(0.0) is ZERO
    assert classify(1.5) is NI
    assert classify(3 + 1e-9) is POS
    assert classify(2 + 1e-3j) is NI


def test_classify_borderline_warns():
    with pytest.warns(BorderlineInteger):
        assert classify(2 + 5e-6) is NI
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        classify(2.5)


@settings(max_examples=100, deadline=None)
@given(
    nums=st.lists(st.integers(-64 * 3, -1), min_size=1, max_size=3),
    dens=st.lists(st.integers(1, 64), min_size=3, max_size=3),
    j=st.lists(st.integers(0, 4), min_size=3, max_size=3),
    k=st.integers(0, 2),
)
def test_classify_agrees_with_exact_rationals(nums, dens, j, k):
    n = len(nums)
    mu_exact = [Fraction(a, b) for a, b in zip(nums, dens)]
    j = j[:n]
    k = k % n
    exact = mu_exact[k] - sum(jj * m for jj, m in zip(j, mu_exact))
    if exact.denominator != 1:
        expected = NI
    elif exact < 0:
        expected = NEG
    elif exact == 0:
        expected = ZERO
    else:
        expected = POS
    value = resonance_value([float(m) for m in mu_exact], j, k)
    assert classify(value) is expected


def test_enumerate_section4_example():
    res = enumerate_resonances([-1.5, -0.25], 2)
    assert len(res) == 6
    neg = [r for r in res if r.cls is NEG]
    assert len(neg) == 1 and neg[0].j == (0, 2) and neg[0].k == 0
    r20 = next(r for r in res if r.j == (2, 0) and r.k == 0)
    assert r20.value == pytest.approx(1.5) and r20.cls is NI


def test_enumerate_irrational_and_integer():
    assert all(r.cls is NI for r in enumerate_resonances([-np.pi], 8))
    res = enumerate_resonances([-1.0], 3)
    assert [r.value.real for r in res] == [1.0, 2.0]
    assert all(r.cls is POS for r in res)


@pytest.mark.parametrize("n,nu", [(1, 2), (2, 3), (3, 4), (2, 6)])
def test_enumerate_count(n, nu):
    assert len(enumerate_resonances(-np.ones(n), nu)) == n * (comb(n + nu, n) - n - 1)


def brute_force_max_negative_degree(mu, max_degree=10):
    worst = 0
    for r in enumerate_resonances(mu, max_degree):
        if r.cls is NEG:
            worst = max(worst, r.degree)
    return worst


def test_degree_bound_examples():
    eta = 0.0125
    assert degree_bound(0.25 - eta, 1.5 + eta) == 2
    assert brute_force_max_negative_degree([-1.5, -0.25]) == 2
    sd = analyze_matrix(-np.eye(3))
    assert negative_resonance_degree_bound(sd) <= 1
    assert brute_force_max_negative_degree([-1.0] * 3, 6) == 0
    assert degree_bound(0.5, 1.4) == 0


@settings(max_examples=30, deadline=None)
@given(mus=st.lists(st.integers(-24, -1), min_size=1, max_size=3))
def test_degree_bound_dominates_brute_force(mus):
    mu = [m / 8 for m in mus]
    sd = analyze_matrix(np.diag(mu))
    B = negative_resonance_degree_bound(sd)
    assert brute_force_max_negative_degree(mu, max(B + 3, 4)) <= B


def test_matrix_json_round_trip():
    M = np.array([[1 + 2j, 0], [3, -1j]])
    assert np.array_equal(matrix_from_json(matrix_to_json(M)), M)
    assert np.array_equal(matrix_from_json({"n": 1, "rows": [[-0.5]]}), [[-0.5]])


def test_resonance_json_is_one_based():
    r = Resonance((0, 2), 0, -1 + 0j, NEG)
    assert r.to_json()["k"] == 1 and r.integer == -1


def test_conjugated_jordan_blocks_near_other_eigenvalues():
    # non-normal A with a double eigenvalue close to a simple one
    rng = np.random.default_rng(7)
    for _ in range(100):
        mu = -rng.uniform(0.1, 2, size=2)
        J = np.array([[mu[0], 1, 0], [0, mu[0], 0], [0, 0, mu[1]]], dtype=complex)
        Q = np.eye(3) + 0.3 * (rng.normal(size=(3, 3)) + 1j * rng.normal(size=(3, 3)))
        sd = analyze_matrix(Q @ J @ np.linalg.inv(Q))
        assert sorted(sd.blocks) == [1, 2]
        assert sd.residuals["reconstruction"] < 1e-8
