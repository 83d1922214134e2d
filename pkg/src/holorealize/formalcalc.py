"""Exponential and logarithm on jets, and the Jordan-Chevalley split of suspended maps.

On a truncated jet space both the derivation induced by a nilpotent vector
field and ``h -> h o f - h`` for a unipotent ``f`` are nilpotent operators,
so the series below are finite sums computed exactly up to rounding.
Rounding grows with the size of the nilpotent linear part: on the degree-d
slice the operators carry entries of order ``d * |N|`` and the alternating
sums cancel. Inputs produced by the realization pipeline have ``|N|`` of
order ``2 pi eps``, well inside the accurate range.
"""

from __future__ import annotations

import numpy as np

from .errors import NonNilpotent, NonUnipotent, NotNormalized, XNotFixed
from .jets import DiffeoJet, Jet, JetMap, VFieldJet, composition_matrix
from .tolerances import TAU_COEFF, TAU_INT, TAU_MAT, ZERO_DUST

__all__ = [
    "UnipotentJet",
    "NilpotentVF",
    "exp_vf",
    "log_diffeo",
    "suspend_jordan_chevalley",
    "diagonal_lie_action",
    "restrict_x",
]


class UnipotentJet(DiffeoJet):
    """Diffeomorphism jet whose linear part has every eigenvalue equal to 1."""

    __slots__ = ()


class NilpotentVF(VFieldJet):
    """Vector field jet with nilpotent linear part."""

    __slots__ = ()


def _is_nilpotent(L: np.ndarray, tol: float) -> bool:
    n = L.shape[0]
    return np.linalg.norm(np.linalg.matrix_power(L, n)) <= tol * (1 + np.linalg.norm(L)) ** n


def _identity_rows(n: int, order: int) -> np.ndarray:
    rows = np.zeros((n, DiffeoJet.identity(n, order)[0].coeffs.size), dtype=complex)
    rows[:, 1 : 1 + n] = np.eye(n)
    return rows


def exp_vf(X: VFieldJet, tol: float = TAU_MAT) -> UnipotentJet:
    """Time-one map ``y_j + sum_k X^k(y_j) / k!`` of a nilpotent vector field jet."""
    n, order = X.nvars, X.order
    if len(X) != n:
        raise NonNilpotent("vector field must have one component per variable")
    if np.max(np.abs(X.constant_part())) > 0:
        raise NonNilpotent("vector field must vanish at the origin")
    if order >= 1 and not _is_nilpotent(X.linear_part(), tol):
        raise NonNilpotent("linear part of X is not nilpotent")
    D = X.derivation_matrix()
    term = _identity_rows(n, order)
    total = term.copy()
    cap = D.shape[0] + 1
    for k in range(1, cap + 1):
        term = term @ D.T / k
        total += term
        if np.max(np.abs(term)) <= ZERO_DUST * max(1.0, np.max(np.abs(total))):
            return UnipotentJet.from_array(n, order, total)
    raise NonNilpotent(f"exponential series did not terminate within {cap} terms")


def log_diffeo(f: DiffeoJet, tol: float = TAU_INT) -> NilpotentVF:
    """Infinitesimal generator ``sum_k (-1)^{k+1} Theta^k(y_j) / k``, ``Theta(h) = h o f - h``."""
    n, order = f.nvars, f.order
    if len(f) != n:
        raise NonUnipotent("map must have one component per variable")
    if order >= 1:
        eig = np.linalg.eigvals(f.linear_part())
        if np.max(np.abs(eig - 1)) > tol:
            raise NonUnipotent(f"linear part has eigenvalues {eig}, expected all equal to 1")
    M = composition_matrix(f.components)
    theta = M - np.eye(M.shape[0])
    term = _identity_rows(n, order)
    total = np.zeros_like(term)
    cap = M.shape[0] + 1
    for k in range(1, cap + 1):
        term = term @ theta
        total += (-1) ** (k + 1) * term / k
        if np.max(np.abs(term)) <= ZERO_DUST * max(1.0, np.max(np.abs(total))):
            return NilpotentVF.from_array(n, order, total)
    raise NonUnipotent(f"logarithm series did not terminate within {cap} terms")


def suspend_jordan_chevalley(F: DiffeoJet, lambdas=None, tol: float = TAU_MAT, tol_coeff: float = TAU_COEFF):
    """Split a map fixing ``x`` (variable 0) as ``F = F_s o F_u``.

    ``F_s = (x, lambda_1 y_1, ..., lambda_n y_n)`` and ``F_u = F_s^{-1} o F``.
    ``lambdas`` defaults to the diagonal of the y-linear part, which is exact
    when that part is triangular.
    """
    order = F.order
    x = Jet.variable(F.nvars, order, 0)
    if F[0].coeffs.size != x.coeffs.size or np.max(np.abs(F[0].coeffs - x.coeffs)) > tol_coeff:
        raise XNotFixed("first component of a suspended map must be x")
    Ly = F.linear_part()[1:, 1:]
    lam = np.diag(Ly).copy() if lambdas is None else np.asarray(lambdas, dtype=complex)
    Lam = np.diag(lam)
    scale = 1 + np.linalg.norm(Ly)
    if np.linalg.norm(Ly @ Lam - Lam @ Ly) > tol * scale:
        raise NotNormalized("y-linear part does not commute with diag(lambda)")
    U = np.linalg.solve(Lam, Ly)
    if np.max(np.abs(np.linalg.eigvals(U) - 1)) > TAU_INT:
        raise NotNormalized("diag(lambda)^-1 times the y-linear part is not unipotent")
    F_s = DiffeoJet.linear(np.diag(np.r_[1.0, lam]), order)
    F_u = UnipotentJet([F[0]] + [F[k + 1] / lam[k] for k in range(len(lam))])
    return F_s, F_u


def diagonal_lie_action(M: JetMap, weights) -> JetMap:
    """Apply ``V -> [X_s, V]`` with ``X_s = sum_l w_l z_l d/dz_l``.

    On a monomial ``z^e`` in component ``k`` this multiplies by ``w.e - w_k``.
    The same numbers give ``X_s(F_k) - (X_s)_k o F`` for a map ``F``, so this
    also measures the failure of ``F_* X_s = X_s``.
    """
    w = np.asarray(weights, dtype=complex)
    exps = M[0].basis.exps
    ew = exps @ w
    return type(M).from_array(M.nvars, M.order, M.coeff_array() * (ew[None, :] - w[:, None]))


def restrict_x(M: JetMap, order: int, x_value: complex = 1.0) -> np.ndarray:
    """Substitute ``x = x_value`` (variable 0) in the y-components of ``M``.

    Returns an ``(len(M) - 1, dim)`` coefficient array in the remaining
    variables at the given ``order``; monomials of y-degree above ``order``
    are dropped.
    """
    from .jets import basis

    nv = M.nvars - 1
    target = basis(nv, order)
    exps = M[0].basis.exps
    keep = exps[:, 1:].sum(axis=1) <= order
    idx = np.array([target.index[tuple(e[1:])] if k else -1 for e, k in zip(exps, keep)])
    xpow = x_value ** exps[:, 0].astype(float)
    out = np.zeros((len(M) - 1, target.dim), dtype=complex)
    for row, comp in enumerate(M.components[1:]):
        np.add.at(out[row], idx[keep], (comp.coeffs * xpow)[keep])
    return out
