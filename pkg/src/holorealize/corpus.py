"""Seeded generator of realizable test cases.

Each case is a diffeomorphism jet ``h = Q o N o Q^{-1}`` where ``N`` has
linear part ``exp(2 pi i J)`` (``J`` diagonal or with one Jordan block) and
nonlinear terms only at resonances ``R_{j;k} >= 0``, together with the
logarithm ``A = Q J Q^{-1}`` of ``dh(0)``. Eigenvalues are negative
rationals with denominators at most 8, chosen so that :func:`choose_nu`
keeps the requested jet order.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction

import numpy as np
import scipy.linalg

from .jets import DiffeoJet, basis, conjugate
from .realize import choose_nu
from .spectral import analyze_matrix, resonance_value

__all__ = ["CorpusCase", "generate_case", "generate_corpus"]

MAX_TERMS = 10


@dataclass
class CorpusCase:
    name: str
    seed: int
    nu: int
    mu: list  # Fractions
    A: np.ndarray
    h: DiffeoJet
    normal: DiffeoJet  # N, in the coordinates of J
    Q: np.ndarray
    jordan: bool

    @property
    def n(self) -> int:
        return len(self.mu)

    def to_json(self) -> dict:
        return {
            "name": self.name,
            "seed": self.seed,
            "nu": self.nu,
            "mu": [str(m) for m in self.mu],
            "jordan": self.jordan,
            "A": [[[float(v.real), float(v.imag)] for v in row] for row in self.A],
            "h": self.h.to_json(),
        }


def _spectrum(rng, n: int, nu: int, jordan: bool) -> list:
    """Negative rationals ``-p/q``, ``q <= 8``, whose delta bounds admit jet order ``nu``."""
    while True:
        mus = []
        for _ in range(n):
            q = int(rng.integers(1, 9))
            p = int(rng.integers(q, 3 * q + 1))
            mus.append(-Fraction(p, q))
        if jordan:
            mus[1] = mus[0]
        A = np.diag([float(m) for m in mus])
        if choose_nu(analyze_matrix(A), nu) == nu:
            return mus


def _resonant_slots(mu, nu: int) -> list:
    """``(j, k)`` with ``2 <= |j| <= nu`` and ``R_{j;k}`` a non-negative integer."""
    b = basis(len(mu), nu)
    out = []
    for i in range(b.offsets[2], b.dim):
        j = tuple(int(e) for e in b.exps[i])
        for k in range(len(mu)):
            R = mu[k] - sum(e * m for e, m in zip(j, mu))
            if R.denominator == 1 and R >= 0:
                out.append((j, k))
    return out


def generate_case(seed: int, n: int | None = None, nu: int | None = None, jordan: bool | None = None) -> CorpusCase:
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 4)) if n is None else n
    nu = int(rng.integers(3, 7)) if nu is None else nu
    if jordan is None:
        jordan = n >= 2 and rng.random() < 0.25
    mus = _spectrum(rng, n, nu, jordan)
    mu = np.array([float(m) for m in mus])
    J = np.diag(mu).astype(complex)
    if jordan:
        J[0, 1] = 1.0
    slots = _resonant_slots(mus, nu)
    count = min(len(slots), int(rng.integers(1, MAX_TERMS + 1)))
    chosen = [slots[i] for i in sorted(rng.choice(len(slots), size=count, replace=False))] if slots else []

    b = basis(n, nu)
    arr = np.zeros((n, b.dim), dtype=complex)
    arr[:, 1 : 1 + n] = scipy.linalg.expm(2j * np.pi * J)
    for j, k in chosen:
        arr[k, b.index[j]] = rng.uniform(0.5, 1.5) * np.exp(2j * np.pi * rng.random())
    N = DiffeoJet.from_array(n, nu, arr)

    if rng.random() < 0.3:
        Q = np.eye(n, dtype=complex)
    else:
        Q = np.eye(n) + 0.3 * (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    h = conjugate(N, DiffeoJet.linear(Q, nu))
    A = Q @ J @ np.linalg.inv(Q)
    assert all(resonance_value(mu, j, k).real >= -1e-9 for j, k in chosen)
    name = f"case{seed:04d}-n{n}-nu{nu}{'-jordan' if jordan else ''}"
    return CorpusCase(name, seed, nu, mus, A, h, N, Q, jordan)


def generate_corpus(count: int = 50, seed: int = 0) -> list:
    """``count`` cases; about a quarter of those with ``n >= 2`` carry a Jordan block."""
    root = np.random.SeedSequence(seed)
    seeds = [int(s.generate_state(1)[0]) for s in root.spawn(count)]
    return [generate_case(s) for s in seeds]
