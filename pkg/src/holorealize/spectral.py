"""Spectral analysis of the linear part ``A``: Jordan structure and resonances.

Eigenvalues come from the characteristic polynomial (Faddeev-LeVerrier)
refined by the Aberth-Ehrlich simultaneous iteration; clusters of roots are
confirmed as eigenvalues of a given algebraic multiplicity by rank tests on
``(A - mu I)^m`` before Jordan chains are extracted.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.linalg

from .errors import BorderlineInteger, IllConditioned, NonNegativeSpectrum, StructuralError
from .jets import basis
from .tolerances import TAU_EIG, TAU_INT

__all__ = [
    "SpectralData",
    "ResonanceClass",
    "Resonance",
    "charpoly",
    "aberth_roots",
    "analyze_matrix",
    "resonance_value",
    "classify",
    "enumerate_resonances",
    "negative_resonance_degree_bound",
    "degree_bound",
    "exp_2pii",
    "matrix_to_json",
    "matrix_from_json",
]

DELTA_MARGIN = 0.05


def charpoly(A: np.ndarray) -> np.ndarray:
    """Monic characteristic polynomial, highest degree first (Faddeev-LeVerrier)."""
    A = np.asarray(A, dtype=complex)
    n = A.shape[0]
    coeffs = np.zeros(n + 1, dtype=complex)
    coeffs[0] = 1.0
    M = np.zeros_like(A)
    eye = np.eye(n)
    for k in range(1, n + 1):
        M = A @ M + coeffs[k - 1] * eye
        coeffs[k] = -np.trace(A @ M) / k
    return coeffs


def aberth_roots(coeffs: Sequence[complex], tol: float = 1e-15, max_iter: int = 2000) -> np.ndarray:
    """All roots of the polynomial ``coeffs`` (highest degree first).

    Multiple roots converge only linearly and to roughly ``eps**(1/m)``
    accuracy; callers cluster the output.
    """
    c = np.asarray(coeffs, dtype=complex)
    c = c / c[0]
    n = len(c) - 1
    if n == 0:
        return np.zeros(0, dtype=complex)
    dc = c[:-1] * np.arange(n, 0, -1)
    center = -c[1] / n
    # Fujiwara-type bound on the root radius around the origin
    radius = 2 * max(abs(c[k]) ** (1.0 / k) for k in range(1, n + 1))
    radius = max(radius, 1e-3)
    z = center + 0.5 * radius * np.exp(1j * (2 * np.pi * np.arange(n) / n + 0.4))
    scale = 1.0 + np.max(np.abs(z))
    for _ in range(max_iter):
        p = np.polyval(c, z)
        dp = np.polyval(dc, z)
        diff = z[:, None] - z[None, :]
        np.fill_diagonal(diff, 1.0)
        inv = 1.0 / diff
        np.fill_diagonal(inv, 0.0)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = p / dp
            delta = ratio / (1.0 - ratio * inv.sum(axis=1))
        delta = np.where(np.isfinite(delta), delta, 0.0)
        z = z - delta
        if np.max(np.abs(delta)) <= tol * scale:
            break
    return z


@dataclass(frozen=True)
class SpectralData:
    """Jordan data of ``A`` with the nilpotent part rescaled to ``eps``.

    ``P^{-1} A P == jordan`` where ``jordan = diag(mu) + eps * (superdiagonal
    ones inside each Jordan block)``. ``A_s = P diag(mu) P^{-1}`` and
    ``A_N = A - A_s``.
    """

    A: np.ndarray
    A_s: np.ndarray
    A_N: np.ndarray
    P: np.ndarray
    P_inv: np.ndarray
    mu: np.ndarray
    lam: np.ndarray
    delta0: float
    delta1: float
    eps: float
    blocks: tuple  # Jordan block sizes, in diagonal order
    residuals: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def jordan(self) -> np.ndarray:
        """The conjugated normal form ``diag(mu) + eps * E``."""
        J = np.diag(self.mu).astype(complex)
        start = 0
        for size in self.blocks:
            for i in range(start, start + size - 1):
                J[i, i + 1] = self.eps
            start += size
        return J

    @property
    def jordan_nilpotent(self) -> np.ndarray:
        return self.jordan - np.diag(self.mu)

    def to_json(self) -> dict:
        return {
            "A": matrix_to_json(self.A),
            "A_s": matrix_to_json(self.A_s),
            "A_N": matrix_to_json(self.A_N),
            "P": matrix_to_json(self.P),
            "P_inv": matrix_to_json(self.P_inv),
            "mu": [[float(m.real), float(m.imag)] for m in self.mu],
            "lambda": [[float(m.real), float(m.imag)] for m in self.lam],
            "delta0": self.delta0,
            "delta1": self.delta1,
            "eps": self.eps,
            "blocks": list(self.blocks),
            "residuals": dict(self.residuals),
        }


def _null_space(M: np.ndarray, dim: int) -> np.ndarray:
    """Orthonormal basis of the ``dim`` smallest right singular directions of M."""
    _, _, vh = np.linalg.svd(M)
    return vh[M.shape[1] - dim :].conj().T


def _numerical_rank(M: np.ndarray, tol: float) -> int:
    s = np.linalg.svd(M, compute_uv=False)
    return int(np.sum(s > tol))


def _pivot(v: np.ndarray) -> int:
    """First entry of (near-)maximal modulus."""
    mags = np.abs(v)
    return int(np.flatnonzero(mags >= mags.max() * (1 - 1e-9))[0])


def _jordan_chains(V: np.ndarray, N: np.ndarray, tol: float) -> list[np.ndarray]:
    """Jordan chains of the nilpotent ``N`` (in ``V``-coordinates), mapped by ``V``.

    Each chain is returned as columns ``[N^{p-1} v, ..., N v, v]`` (bottom first)
    expressed in ambient coordinates.
    """
    m = N.shape[0]
    powers = [np.eye(m, dtype=complex)]
    while np.linalg.norm(powers[-1]) > tol and len(powers) <= m:
        powers.append(powers[-1] @ N)
    index = len(powers) - 1
    kdim = [m - _numerical_rank(Pk, tol) for Pk in powers]
    kdim[index] = m
    tops: list[tuple[np.ndarray, int]] = []
    for p in range(index, 0, -1):
        K_p = _null_space(powers[p], kdim[p]) if kdim[p] < m else np.eye(m, dtype=complex)
        existing = [powers[q - p] @ v for v, q in tops if q > p]
        parts = []
        if kdim[p - 1] > 0:
            parts.append(_null_space(powers[p - 1], kdim[p - 1]))
        if existing:
            parts.append(np.column_stack(existing))
        new = kdim[p] - kdim[p - 1] - len(existing)
        if new <= 0:
            continue
        if parts:
            Q, _ = np.linalg.qr(np.hstack(parts))
            C = K_p - Q @ (Q.conj().T @ K_p)
        else:
            C = K_p
        u, _, _ = np.linalg.svd(C)
        T_m = u[:, :new]
        T_n = V @ T_m
        _, _, piv = scipy.linalg.qr(T_n.T, pivoting=True)
        rows = np.sort(piv[:new])
        T_m = T_m @ np.linalg.inv(T_n[rows, :])
        tops.extend((T_m[:, i], p) for i in range(new))
    chains = []
    for v, p in tops:
        chains.append(np.column_stack([V @ (powers[p - i] @ v) for i in range(1, p + 1)]))
    return chains


def analyze_matrix(
    A,
    eps_request: float = 1e-2,
    tol_eig: float = TAU_EIG,
    require_negative: bool = True,
) -> SpectralData:
    """Jordan analysis of ``A`` with ``eps``-rescaled nilpotent part and delta bounds.

    Raises NonNegativeSpectrum when some eigenvalue has nonnegative real part
    (unless ``require_negative`` is False) and IllConditioned when root clusters
    cannot be matched with the kernel dimensions of ``(A - mu I)^m``.
    """
    A = np.asarray(A, dtype=complex)
    if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] < 1:
        raise StructuralError("A must be a nonempty square matrix")
    n = A.shape[0]
    normA = np.linalg.norm(A, 2)
    roots = aberth_roots(charpoly(A))

    # single-linkage clustering; multiple roots come back spread by eps**(1/m)
    radius = math.sqrt(tol_eig) * (1 + normA)
    labels = list(range(n))
    for i in range(n):
        for j in range(i + 1, n):
            if abs(roots[i] - roots[j]) <= radius:
                old, new = labels[j], labels[i]
                labels = [new if lab == old else lab for lab in labels]
    clusters = {}
    for lab, r in zip(labels, roots):
        clusters.setdefault(lab, []).append(r)

    groups = []
    for members in clusters.values():
        m = len(members)
        center = np.mean(members)
        # a true m-fold root is split by rounding to about (eps*|A|)**(1/m)
        noise = (1e3 * np.finfo(float).eps * (1 + normA)) ** (1.0 / m) * (1 + normA)
        spread = max(abs(r - center) for r in members)
        if m > 1 and spread > max(noise, tol_eig):
            raise IllConditioned(
                f"eigenvalues near {center:.6g} are {spread:.2e} apart: neither distinct nor multiple at tolerance"
            )
        # the cluster mean of an m-fold root can be off by eps**(1/m); refine it
        # by the trace of A on the generalized eigenspace, using left and right
        # null vectors (oblique projection), and keep a step only if it helps
        def residual(c):
            sv = np.linalg.svd(np.linalg.matrix_power(A - c * np.eye(n), m), compute_uv=False)
            return sv[n - m]

        best = residual(center)
        for _ in range(4):
            Pm = np.linalg.matrix_power(A - center * np.eye(n), m)
            V = _null_space(Pm, m)
            W = _null_space(Pm.conj().T, m)
            trial = np.trace(np.linalg.solve(W.conj().T @ V, W.conj().T @ A @ V)) / m
            res = residual(trial)
            if res >= best:
                break
            center, best = trial, res
        Pm = np.linalg.matrix_power(A - center * np.eye(n), m)
        rank_tol = tol_eig * (1 + normA) ** m
        if n - _numerical_rank(Pm, rank_tol) != m:
            raise IllConditioned(
                f"eigenvalue cluster near {center:.6g} of size {m} does not match its generalized eigenspace"
            )
        V = _null_space(Pm, m)
        restricted = V.conj().T @ A @ V
        center = np.trace(restricted) / m
        N = restricted - center * np.eye(m)
        chains = _jordan_chains(V, N, tol_eig * (1 + normA))
        groups.append((center, chains))

    mus = [g[0] for g in groups]
    for i in range(len(mus)):
        for j in range(i + 1, len(mus)):
            if abs(mus[i] - mus[j]) <= radius:
                raise IllConditioned("distinct eigenvalue clusters are not separated")
    if require_negative and max(m.real for m in mus) >= 0:
        raise NonNegativeSpectrum(f"eigenvalues with nonnegative real part: {mus}")

    def sort_key(g):
        c = g[0]
        return (round(c.real / tol_eig), c.imag)

    groups.sort(key=sort_key)

    neg = -np.array([g[0].real for g in groups])
    if require_negative:
        delta0 = (1 - DELTA_MARGIN) * neg.min()
        delta1 = (1 + DELTA_MARGIN) * neg.max()
        margin = min(delta1 - neg.max(), neg.min() - delta0)
        eps = min(eps_request, margin / 2)
    else:
        delta0 = delta1 = float("nan")
        eps = eps_request

    columns, mu, blocks = [], [], []
    for center, chains in groups:
        chains = sorted(chains, key=lambda c: (-c.shape[1], _pivot(c[:, 0])))
        for chain in chains:
            c = 1.0 / chain[_pivot(chain[:, 0]), 0]
            for i in range(chain.shape[1]):
                columns.append(c * eps**i * chain[:, i])
            mu.extend([center] * chain.shape[1])
            blocks.append(chain.shape[1])
    P = np.column_stack(columns)
    P_inv = np.linalg.inv(P)
    mu = np.array(mu, dtype=complex)
    # exact Jordan form with eps on the superdiagonal of each block
    J = np.diag(mu)
    start = 0
    for size in blocks:
        for i in range(start, start + size - 1):
            J[i, i + 1] = eps
        start += size
    A_s = P @ np.diag(mu) @ P_inv
    A_N = P @ (J - np.diag(mu)) @ P_inv
    nA = max(1.0, normA)
    residuals = {
        "reconstruction": float(np.linalg.norm(P @ J @ P_inv - A) / nA),
        "split": float(np.linalg.norm(A_s + A_N - A)),
        "commutator": float(np.linalg.norm(A_s @ A_N - A_N @ A_s)),
        "nilpotency": float(np.linalg.norm(np.linalg.matrix_power(A_N, n))),
        "conjugated": float(np.linalg.norm(P_inv @ A @ P - J)),
    }
    return SpectralData(
        A=A,
        A_s=A_s,
        A_N=A_N,
        P=P,
        P_inv=P_inv,
        mu=mu,
        lam=np.exp(2j * np.pi * mu),
        delta0=float(delta0),
        delta1=float(delta1),
        eps=float(eps),
        blocks=tuple(blocks),
        residuals=residuals,
    )


def exp_2pii(sd: SpectralData) -> np.ndarray:
    """``exp(2 pi i A)`` from the Jordan data (finite series in the nilpotent part)."""
    Nj = 2j * np.pi * sd.jordan_nilpotent
    E = np.eye(sd.n, dtype=complex)
    term = np.eye(sd.n, dtype=complex)
    for k in range(1, sd.n + 1):
        term = term @ Nj / k
        E = E + term
    return sd.P @ (np.diag(sd.lam) @ E) @ sd.P_inv


class ResonanceClass(enum.Enum):
    NON_INTEGER = "NonInteger"
    NEGATIVE_INTEGER = "NegativeInteger"
    ZERO = "Zero"
    POSITIVE_INTEGER = "PositiveInteger"

    @property
    def is_integer(self) -> bool:
        return self is not ResonanceClass.NON_INTEGER


@dataclass(frozen=True)
class Resonance:
    """A pair ``(j; k)`` with value ``mu_k - sum_l j_l mu_l``. ``k`` is 0-based."""

    j: tuple
    k: int
    value: complex
    cls: ResonanceClass

    @property
    def degree(self) -> int:
        return sum(self.j)

    @property
    def integer(self) -> int | None:
        return int(round(self.value.real)) if self.cls.is_integer else None

    def to_json(self) -> dict:
        # k is reported 1-based, as in the usual (j; k) notation
        return {
            "j": list(self.j),
            "k": self.k + 1,
            "value": [self.value.real, self.value.imag],
            "class": self.cls.value,
        }


def resonance_value(mu: Sequence[complex], j: Sequence[int], k: int) -> complex:
    """``mu[k] - sum_l j[l] * mu[l]`` (``k`` 0-based)."""
    mu = np.asarray(mu, dtype=complex)
    if not 0 <= k < len(mu) or len(j) != len(mu):
        raise StructuralError("resonance index out of range")
    return complex(mu[k] - np.dot(np.asarray(j, dtype=float), mu))


def classify(value: complex, tol: float = TAU_INT) -> ResonanceClass:
    value = complex(value)
    nearest = round(value.real)
    dist = max(abs(value.real - nearest), abs(value.imag))
    if dist > tol:
        if dist < 10 * tol:
            warnings.warn(
                f"resonance value {value} is within {dist:.2e} of an integer", BorderlineInteger
            )
        return ResonanceClass.NON_INTEGER
    if nearest < 0:
        return ResonanceClass.NEGATIVE_INTEGER
    if nearest == 0:
        return ResonanceClass.ZERO
    return ResonanceClass.POSITIVE_INTEGER


def _mu_of(sd_or_mu) -> np.ndarray:
    if isinstance(sd_or_mu, SpectralData):
        return sd_or_mu.mu
    return np.asarray(sd_or_mu, dtype=complex)


def enumerate_resonances(sd_or_mu, max_degree: int, tol: float = TAU_INT, min_degree: int = 2) -> list:
    """Every ``(j; k)`` with ``min_degree <= |j| <= max_degree``, classified.

    Ordered by the graded-lexicographic rank of ``j``, then by ``k``.
    """
    mu = _mu_of(sd_or_mu)
    n = len(mu)
    b = basis(n, max_degree)
    out = []
    for i in range(b.offsets[min_degree], b.dim):
        j = tuple(int(e) for e in b.exps[i])
        for k in range(n):
            v = resonance_value(mu, j, k)
            out.append(Resonance(j, k, v, classify(v, tol)))
    return out


def degree_bound(delta0: float, delta1: float) -> int:
    """Largest degree a negative resonance can have given the delta bounds."""
    return max(0, math.floor((delta1 - 1) / delta0))


def negative_resonance_degree_bound(sd: SpectralData) -> int:
    return degree_bound(sd.delta0, sd.delta1)


def matrix_to_json(M) -> dict:
    M = np.asarray(M, dtype=complex)
    return {
        "n": int(M.shape[0]),
        "rows": [[[float(z.real), float(z.imag)] for z in row] for row in M],
    }


def matrix_from_json(data) -> np.ndarray:
    """Accepts the ``{"n", "rows"}`` schema; bare real or [re, im] entries are allowed."""
    rows = data["rows"] if isinstance(data, dict) else data
    out = []
    for row in rows:
        out.append([complex(z[0], z[1]) if isinstance(z, (list, tuple)) else complex(z) for z in row])
    M = np.array(out, dtype=complex)
    if isinstance(data, dict) and "n" in data and M.shape != (data["n"], data["n"]):
        raise StructuralError(f"matrix shape {M.shape} does not match n={data['n']}")
    return M
