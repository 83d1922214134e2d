"""Formal normal forms of diffeomorphism jets and gauge linearization of saddle systems."""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import HoloRealizeError, LinearPartMismatch, PreconditionError, SmallDivisor, ZeroDivisor
from .jets import DiffeoJet, basis, composition_matrix, conjugate
from .saddle import GradedField, SaddleSystem
from .spectral import (
    ResonanceClass,
    SpectralData,
    classify,
    enumerate_resonances,
    exp_2pii,
    resonance_value,
)
from .tolerances import TAU_COEFF, TAU_EIG, TAU_INT, TAU_MAT, ZERO_DUST

log = logging.getLogger(__name__)

__all__ = [
    "NormalFormResult",
    "Obstruction",
    "ResonanceVerdict",
    "GaugeResult",
    "diffeo_normal_form",
    "check_negative_resonances",
    "gauge_divisors",
    "gauge_linearize_system",
]


@dataclass
class NormalFormResult:
    """``normal == conjugator o f o conjugator^{-1}`` with only integer resonances left."""

    normal: DiffeoJet
    conjugator: DiffeoJet
    removed: list  # (j, k) pairs whose coefficients were killed, k 0-based
    kept: list  # Resonance entries with a surviving coefficient
    tangent: DiffeoJet = field(repr=False, default=None)  # conjugator == tangent o P^{-1}
    mu: np.ndarray = field(repr=False, default=None)

    def coefficient(self, j, k: int) -> complex:
        return self.normal[k][tuple(j)]

    def to_json(self) -> dict:
        return {
            "normal": self.normal.to_json(),
            "conjugator": self.conjugator.to_json(),
            "removed": [{"j": list(j), "k": k + 1} for j, k in self.removed],
            "kept": [
                dict(r.to_json(), coeff=[self.coefficient(r.j, r.k).real, self.coefficient(r.j, r.k).imag])
                for r in self.kept
            ],
        }


def _check_linear_part(f: DiffeoJet, sd: SpectralData, tol: float) -> None:
    L = f.linear_part()
    E = exp_2pii(sd)
    if np.linalg.norm(sd.P_inv @ (L - E) @ sd.P) > tol * (1 + np.linalg.norm(E)):
        raise LinearPartMismatch("df(0) differs from exp(2 pi i A)")


def _homological_block(L: np.ndarray, d: int, n: int) -> np.ndarray:
    """Matrix of ``p -> p o L - L p`` on degree-``d`` maps, index ``row * n + k``."""
    b = basis(n, d)
    sl = b.degree_slice(d)
    lin = DiffeoJet.linear(L, d)
    Md = composition_matrix(lin.components, d)[sl, sl]
    m = Md.shape[0]
    return np.kron(Md.T, np.eye(n)) - np.kron(np.eye(m), L)


def _neumann_solve(op: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Solve ``op x = rhs`` where ``op = D + N``, ``D`` diagonal, ``N`` nilpotent commuting with ``D``."""
    D = np.diag(op).copy()
    N = op - np.diag(D)
    term = rhs / D
    total = term.copy()
    for _ in range(len(rhs) + 1):
        term = -(N @ term) / D
        if np.max(np.abs(term), initial=0) <= ZERO_DUST * max(1.0, np.max(np.abs(total))):
            return total
        total = total + term
    raise HoloRealizeError("homological Neumann series did not terminate; nilpotent part is not nilpotent")


def diffeo_normal_form(
    f: DiffeoJet,
    sd: SpectralData,
    order: int | None = None,
    tol_int: float = TAU_INT,
    tol_mat: float = TAU_MAT,
    tol_coeff: float = TAU_COEFF,
) -> NormalFormResult:
    """Kill every coefficient at a non-integer resonance, degree by degree.

    The first step conjugates by ``P^{-1}`` so the linear part becomes
    ``exp(2 pi i J)``. At degree ``d`` the homological equation
    ``p o L - L p = -f_d`` is solved on non-resonant positions only; resonant
    components of ``p`` stay zero, which makes the output deterministic.
    """
    order = f.order if order is None else order
    if order < 2:
        raise PreconditionError("normal form needs order >= 2")
    if len(f) != sd.n or f.nvars != sd.n:
        raise PreconditionError("map dimension does not match A")
    f = f.with_order(order)
    _check_linear_part(f, sd, tol_mat)
    n = sd.n
    g = conjugate(f, DiffeoJet.linear(sd.P_inv, order))
    tangent = DiffeoJet.identity(n, order)
    L = g.linear_part()
    b = basis(n, order)
    mu = sd.mu
    removed = []
    for d in range(2, order + 1):
        sl = b.degree_slice(d)
        exps = b.exps[sl]
        mask = np.zeros((len(exps), n), dtype=bool)
        for r, e in enumerate(exps):
            for k in range(n):
                mask[r, k] = classify(resonance_value(mu, e, k), tol_int) is ResonanceClass.NON_INTEGER
        sel = mask.ravel()
        if not sel.any():
            continue
        rhs = -g.coeff_array()[:, sl].T.ravel()[sel]  # row-major (monomial, component)
        if np.max(np.abs(rhs), initial=0) <= ZERO_DUST:
            continue
        op = _homological_block(L, d, n)[np.ix_(sel, sel)]
        small = np.abs(np.diag(op))
        if np.any(small < 10 * tol_int):
            warnings.warn(f"small divisor {small.min():.2e} at degree {d}", SmallDivisor)
            log.warning("small divisor %.3e at degree %d", small.min(), d)
        sol = np.zeros(len(exps) * n, dtype=complex)
        sol[sel] = _neumann_solve(op, rhs)
        idx = np.flatnonzero(sel)
        for i in idx[np.abs(rhs) > tol_coeff]:
            removed.append((tuple(int(v) for v in exps[i // n]), int(i % n)))
        p = np.zeros((n, b.dim), dtype=complex)
        p[:, sl] = sol.reshape(len(exps), n).T
        step = DiffeoJet.from_array(n, order, DiffeoJet.identity(n, order).coeff_array() + p)
        g = conjugate(g, step)
        tangent = step.compose(tangent)
    kept = [
        r
        for r in enumerate_resonances(mu, order, tol_int)
        if r.cls.is_integer and abs(g[r.k][r.j]) > tol_coeff
    ]
    psi = tangent.compose(DiffeoJet.linear(sd.P_inv, order))
    return NormalFormResult(g, psi, removed, kept, tangent, mu)


@dataclass(frozen=True)
class Obstruction:
    j: tuple
    k: int
    value: complex
    coeff: complex

    def to_json(self) -> dict:
        return {
            "j": list(self.j),
            "k": self.k + 1,
            "R": [self.value.real, self.value.imag],
            "coeff": [self.coeff.real, self.coeff.imag],
        }


@dataclass
class ResonanceVerdict:
    obstructions: list

    @property
    def realizable(self) -> bool:
        return not self.obstructions

    @property
    def name(self) -> str:
        return "Realizable" if self.realizable else "Obstructed"

    def to_json(self) -> dict:
        return {"verdict": self.name, "obstructions": [o.to_json() for o in self.obstructions]}


def check_negative_resonances(nf: NormalFormResult, sd: SpectralData, tol_coeff: float = TAU_COEFF) -> ResonanceVerdict:
    """Obstructed iff a kept coefficient sits at a negative integer resonance."""
    obs = []
    for r in nf.kept:
        c = nf.coefficient(r.j, r.k)
        if r.cls is ResonanceClass.NEGATIVE_INTEGER and abs(c) > tol_coeff:
            obs.append(Obstruction(r.j, r.k, r.value, c))
    return ResonanceVerdict(obs)


@dataclass
class GaugeResult:
    """``transformed`` is ``exp(ad W_r) ... exp(ad W_1)`` applied to the input system.

    ``generators`` lists the successive ``W``; with diagonal ``A`` there is one.
    ``solved`` lists ``((xdeg, j), k, R)`` for every targeted position.
    """

    transformed: SaddleSystem
    generators: list
    solved: list

    @property
    def generator(self) -> GradedField:
        return self.generators[0]


def _extended_mu(sd_or_mu) -> np.ndarray:
    mu = sd_or_mu.mu if isinstance(sd_or_mu, SpectralData) else np.asarray(sd_or_mu, dtype=complex)
    return mu


def gauge_divisors(mu, degrees, kmax: int) -> list:
    """``((xdeg, j), k, R)`` for every monomial ``x^xdeg y^j d/dy_k`` with ``|j|`` in ``degrees``.

    ``R`` is the resonance of the extended exponent ``(xdeg, j)`` against the
    extended eigenvalue vector ``(1, mu)``, i.e. ``R_{j;k} - xdeg``.
    """
    mu = np.asarray(mu, dtype=complex)
    n = len(mu)
    ext = np.r_[1.0, mu]
    out = []
    for d in sorted(degrees):
        b = basis(n, d)
        for e in b.exps[b.degree_slice(d)]:
            j = tuple(int(v) for v in e)
            for m in range(kmax + 1):
                for k in range(n):
                    R = resonance_value(ext, (m,) + j, k + 1)
                    out.append(((m, j), k, R))
    return out


def default_kmax(sd: SpectralData, nu: int) -> int:
    return math.ceil(sd.delta1) + nu + 2


def gauge_linearize_system(
    Z: SaddleSystem,
    sd,
    degrees=None,
    kmax: int | None = None,
    targets=None,
    tol_int: float = TAU_INT,
    tol_coeff: float = TAU_COEFF,
    max_rounds: int = 50,
) -> GaugeResult:
    """Remove the terms of ``G`` with y-degree in ``degrees`` by a gauge ``exp(W)``.

    ``A`` must be upper triangular with diagonal ``mu``. The coefficient of
    ``x^m y^j d/dy_k`` changes by ``alpha (R_{j;k} - m)`` under ``[W, Z]``, so
    ``alpha = -a / (R_{j;k} - m)``. Off-diagonal entries of ``A`` couple
    positions; then the step is repeated until the targets are below
    ``tol_coeff``. ``targets`` may list explicit ``(xdeg, j, k)`` positions.
    """
    n = Z.n
    mu = _extended_mu(sd)
    if np.max(np.abs(np.diag(Z.A) - mu)) > TAU_EIG * (1 + np.max(np.abs(mu))):
        raise PreconditionError("diagonal of A does not match the eigenvalues")
    if np.max(np.abs(np.tril(Z.A, -1)), initial=0) > TAU_MAT:
        raise PreconditionError("A must be upper triangular")
    if kmax is None:
        kmax = max(Z.kmax, default_kmax(sd, Z.order)) if isinstance(sd, SpectralData) else Z.kmax
    if targets is None:
        degrees = {2} if degrees is None else set(degrees)
        if min(degrees) < 2:
            raise PreconditionError("gauge targets must have y-degree >= 2")
        table = [t for t in gauge_divisors(mu, degrees, kmax) if sum(t[0][1]) <= Z.order]
    else:
        ext = np.r_[1.0, mu]
        table = [((m, tuple(j)), k, resonance_value(ext, (m,) + tuple(j), k + 1)) for m, j, k in targets]
        if any(sum(j) < 2 for (_, j), _, _ in table):
            raise PreconditionError("gauge targets must have y-degree >= 2")
    zero = [(m, j, k) for (m, j), k, R in table if abs(R) <= tol_int]
    if zero:
        raise ZeroDivisor(f"{len(zero)} targeted monomials are resonant and cannot be removed", zero)
    kmax_field = max(kmax, Z.kmax)
    Y = GradedField(n, Z.order, kmax_field, Z.y_field().parts)
    gens = []
    for _ in range(max_rounds):
        terms = []
        worst = 0.0
        for (m, j), k, R in table:
            a = Y.coeff(m, j, k)
            worst = max(worst, abs(a))
            if a != 0:
                terms.append((m, j, k, -a / R))
        if worst <= tol_coeff:
            break
        W = GradedField.from_terms(n, Z.order, kmax_field, terms)
        gens.append(W)
        Y = W.lie_transform(Y)
    else:
        raise HoloRealizeError("gauge iteration did not reach the coefficient tolerance")
    if not gens:
        gens.append(GradedField.zero(n, Z.order, kmax_field))
    transformed = SaddleSystem.from_y_field(Y, tol=tol_coeff)
    return GaugeResult(transformed, gens, table)
