"""Saddle systems ``x' = x, y' = A y + G(x, y)`` stored by powers of ``x``.

Dense jets in all ``n + 1`` variables would have to carry total degree
``max x-degree + nu``; keeping one n-variable jet map per power of ``x``
keeps the box truncation (x-degree <= kmax, y-degree <= order) exact and
cheap.
"""

from __future__ import annotations

from typing import Iterable

import numpy as np

from .errors import StructuralError
from .jets import DiffeoJet, Jet, VFieldJet, basis, composition_matrix, invert
from .spectral import matrix_from_json, matrix_to_json
from .tolerances import ZERO_DUST

__all__ = ["GradedField", "SaddleSystem"]


class GradedField:
    """The y-part ``sum_m x^m V_m(y)`` of a vector field with no ``d/dx`` term.

    ``parts[m]`` is a :class:`VFieldJet` with ``n`` components in ``n``
    variables truncated at y-order ``order``; powers above ``kmax`` are dropped.
    """

    __slots__ = ("n", "order", "kmax", "parts")

    def __init__(self, n: int, order: int, kmax: int, parts: dict | None = None):
        self.n, self.order, self.kmax = n, order, kmax
        self.parts: dict[int, VFieldJet] = {}
        for m, V in (parts or {}).items():
            if m < 0:
                raise StructuralError("x-degrees must be nonnegative")
            if m > kmax:
                continue
            if len(V) != n or V.nvars != n:
                raise StructuralError("graded part has the wrong shape")
            V = VFieldJet(V.with_order(order).components)
            if V.max_abs() > 0:
                self.parts[m] = V

    @classmethod
    def zero(cls, n: int, order: int, kmax: int) -> "GradedField":
        return cls(n, order, kmax)

    @classmethod
    def from_terms(cls, n: int, order: int, kmax: int, terms: Iterable) -> "GradedField":
        """Build from ``(xdeg, exp, component, coeff)`` tuples (component 0-based)."""
        b = basis(n, order)
        arrays: dict[int, np.ndarray] = {}
        for m, exp, k, c in terms:
            if m > kmax or sum(exp) > order:
                continue
            arr = arrays.setdefault(m, np.zeros((n, b.dim), dtype=complex))
            arr[k, b.index[tuple(exp)]] += c
        return cls(n, order, kmax, {m: VFieldJet.from_array(n, order, a) for m, a in arrays.items()})

    def part(self, m: int) -> VFieldJet:
        return self.parts.get(m, VFieldJet.zero(self.n, self.order))

    def coeff(self, m: int, exp, k: int) -> complex:
        V = self.parts.get(m)
        return 0j if V is None else V[k][tuple(exp)]

    def terms(self, tol: float = 0.0):
        """Yield ``(xdeg, exp, component, coeff)`` with ``|coeff| > tol``."""
        for m in sorted(self.parts):
            for k, comp in enumerate(self.parts[m]):
                for exp, c in comp.terms(tol):
                    yield m, exp, k, c

    def max_abs(self) -> float:
        return max((V.max_abs() for V in self.parts.values()), default=0.0)

    def max_xdeg(self) -> int:
        return max(self.parts, default=0)

    def _like(self, parts: dict) -> "GradedField":
        return GradedField(self.n, self.order, self.kmax, parts)

    def _check(self, other: "GradedField") -> None:
        if (self.n, self.order, self.kmax) != (other.n, other.order, other.kmax):
            raise StructuralError("graded fields have different shapes")

    def __add__(self, other: "GradedField") -> "GradedField":
        self._check(other)
        parts = dict(self.parts)
        for m, V in other.parts.items():
            parts[m] = parts[m] + V if m in parts else V
        return self._like(parts)

    def __sub__(self, other: "GradedField") -> "GradedField":
        return self + other * -1

    def __mul__(self, scalar) -> "GradedField":
        return self._like({m: V * scalar for m, V in self.parts.items()})

    __rmul__ = __mul__

    def __truediv__(self, scalar) -> "GradedField":
        return self * (1 / scalar)

    def euler_x(self) -> "GradedField":
        """``x d/dx`` applied coefficientwise: grade ``m`` is multiplied by ``m``."""
        return self._like({m: V * m for m, V in self.parts.items() if m})

    def apply(self, h: dict) -> dict:
        """``W(h)`` for a graded scalar ``h`` given as ``{m: Jet}``."""
        out: dict[int, Jet] = {}
        for m1, W in self.parts.items():
            for m2, hm in h.items():
                m = m1 + m2
                if m > self.kmax:
                    continue
                val = W.apply(hm)
                out[m] = out[m] + val if m in out else val
        return out

    def bracket(self, other: "GradedField") -> "GradedField":
        """``[self, other]_k = self(other_k) - other(self_k)``."""
        self._check(other)
        parts: dict[int, np.ndarray] = {}
        for m1, W in self.parts.items():
            for m2, V in other.parts.items():
                m = m1 + m2
                if m > self.kmax:
                    continue
                arr = W.bracket(V).coeff_array()
                parts[m] = parts[m] + arr if m in parts else arr
        return self._like({m: VFieldJet.from_array(self.n, self.order, a) for m, a in parts.items()})

    def bracket_with_system(self, Y: "GradedField") -> "GradedField":
        """``[W, x d/dx + Y]`` for ``W = self``; the result again has no ``d/dx`` part."""
        return self.bracket(Y) - self.euler_x()

    def lie_transform(self, Y: "GradedField") -> "GradedField":
        """y-part of ``sum_k ad_W^k (x d/dx + Y) / k!`` (finite: ``W`` is in ``(y)^2``)."""
        for V in self.parts.values():
            if np.any(V.coeff_array()[:, : 1 + self.n] != 0):
                raise StructuralError("Lie transform needs a generator in (y)^2")
        total = Y
        term = self.bracket_with_system(Y)
        k = 1
        # each bracket with W raises the lowest y-degree, so the sum is finite
        while k <= self.order + 1 and term.max_abs() > 0:
            total = total + term
            k += 1
            term = self.bracket(term) / k
        return total

    def pushforward(self, phi: DiffeoJet) -> "GradedField":
        """Push forward by the x-independent change ``y -> phi(y)``.

        Grade by grade, ``V_m -> (D phi . V_m) o phi^{-1}``.
        """
        phi = phi.with_order(self.order)
        phi_inv = invert(phi)
        M = composition_matrix(phi_inv.components, self.order)
        parts = {}
        for m, V in self.parts.items():
            pushed = [sum((phi[k].deriv(l) * V[l] for l in range(self.n)), Jet.zero(self.n, self.order)) for k in range(self.n)]
            arr = np.array([c.coeffs for c in pushed]) @ M
            parts[m] = VFieldJet.from_array(self.n, self.order, arr)
        return self._like(parts)

    def to_jets(self, order: int | None = None) -> list:
        """The components as dense jets in ``(x, y)`` (variable 0 is ``x``).

        ``order`` is the total degree kept; by default everything fits.
        """
        order = self.max_xdeg() + self.order if order is None else order
        b = basis(self.n + 1, order)
        arrs = [np.zeros(b.dim, dtype=complex) for _ in range(self.n)]
        for m, exp, k, c in self.terms():
            if m + sum(exp) <= order:
                arrs[k][b.index[(m,) + tuple(exp)]] += c
        return [Jet(self.n + 1, order, a) for a in arrs]

    @classmethod
    def from_jets(cls, comps, order: int, kmax: int) -> "GradedField":
        """Inverse of :meth:`to_jets`: split dense ``(x, y)`` jets by powers of ``x``."""
        n = len(comps)
        terms = []
        for k, comp in enumerate(comps):
            for exp, c in comp.terms():
                terms.append((exp[0], exp[1:], k, c))
        return cls.from_terms(n, order, kmax, terms)

    def stacked(self) -> np.ndarray:
        """Array of shape ``(kmax + 1, n, dim)`` with grade ``m`` in slot ``m``."""
        dim = basis(self.n, self.order).dim
        out = np.zeros((self.kmax + 1, self.n, dim), dtype=complex)
        for m, V in self.parts.items():
            out[m] = V.coeff_array()
        return out


class SaddleSystem:
    """``x' = x``, ``y' = A y + G(x, y)`` with every term of ``G`` of y-degree >= 2."""

    __slots__ = ("A", "G")

    def __init__(self, A, G: GradedField):
        A = np.asarray(A, dtype=complex)
        if A.shape != (G.n, G.n):
            raise StructuralError("A does not match the fiber dimension of G")
        for m, V in G.parts.items():
            low = V.coeff_array()[:, : 1 + G.n]
            if np.any(low != 0):
                raise StructuralError("G must lie in the ideal (y)^2")
        self.A, self.G = A, G

    @property
    def n(self) -> int:
        return self.G.n

    @property
    def order(self) -> int:
        return self.G.order

    @property
    def kmax(self) -> int:
        return self.G.kmax

    @classmethod
    def linear(cls, A, order: int, kmax: int = 0) -> "SaddleSystem":
        A = np.asarray(A, dtype=complex)
        return cls(A, GradedField.zero(A.shape[0], order, kmax))

    def y_field(self) -> GradedField:
        """``A y + G`` as a graded field."""
        lin = GradedField(self.n, self.order, self.kmax, {0: VFieldJet.linear(self.A, self.order)})
        return lin + self.G

    @classmethod
    def from_y_field(cls, Y: GradedField, tol: float = 0.0) -> "SaddleSystem":
        """Split a graded field into ``A y`` and ``G``.

        Constant terms and x-dependent linear terms above ``tol`` are rejected.
        """
        n = Y.n
        A = Y.part(0).linear_part()
        parts = {}
        for m, V in Y.parts.items():
            arr = V.coeff_array().copy()
            low = arr[:, : 1 + n].copy()
            if m == 0:
                low[:, 1:] = 0
            if np.max(np.abs(low), initial=0) > tol:
                raise StructuralError("field has terms of y-degree < 2 beyond the linear part A y")
            arr[:, : 1 + n] = 0
            parts[m] = VFieldJet.from_array(n, Y.order, arr)
        return cls(A, GradedField(n, Y.order, Y.kmax, parts))

    def truncate(self, order: int) -> "SaddleSystem":
        return SaddleSystem(self.A, GradedField(self.n, order, self.kmax, self.G.parts))

    def to_json(self) -> dict:
        comps: list[list[dict]] = [[] for _ in range(self.n)]
        for m, exp, k, c in self.G.terms(ZERO_DUST):
            comps[k].append({"xdeg": int(m), "exp": [int(e) for e in exp], "re": float(c.real), "im": float(c.imag)})
        return {"n": self.n, "A": matrix_to_json(self.A), "order": self.order, "kmax": self.kmax, "G": comps}

    @classmethod
    def from_json(cls, data: dict) -> "SaddleSystem":
        n = int(data["n"])
        A = matrix_from_json(data["A"])
        comps = data["G"]
        if len(comps) != n:
            raise StructuralError("G must have one term list per component")
        terms = [(t["xdeg"], tuple(t["exp"]), k, complex(t["re"], t["im"])) for k, lst in enumerate(comps) for t in lst]
        order = int(data.get("order", max((sum(t[1]) for t in terms), default=2)))
        kmax = int(data.get("kmax", max((t[0] for t in terms), default=0)))
        return cls(A, GradedField.from_terms(n, order, kmax, terms))

    def __repr__(self) -> str:
        return f"SaddleSystem(n={self.n}, order={self.order}, kmax={self.kmax}, terms={sum(1 for _ in self.G.terms(ZERO_DUST))})"
