"""Dense truncated multivariate power series with complex coefficients.

A :class:`Jet` in ``nvars`` variables truncated at total degree ``order``
stores one coefficient per monomial of degree ``<= order``. Monomials are
ranked graded-lexicographically: first by total degree, then
lexicographically with higher powers of earlier variables first::

    1, y1, y2, y1**2, y1*y2, y2**2, y1**3, ...

Because the ranking is graded, the basis at order ``k`` is a prefix of the
basis at any order ``> k`` and truncation is slicing.

Maps between jet spaces (diffeomorphism jets, vector field jets) are tuples
of jets, see :class:`DiffeoJet` and :class:`VFieldJet`.
"""

from __future__ import annotations

from functools import lru_cache
from math import comb
from typing import Iterable, Iterator, Sequence

import numpy as np

from .errors import PreconditionError, StructuralError
from .tolerances import TAU_COEFF, ZERO_DUST

__all__ = [
    "MultiIndex",
    "Basis",
    "basis",
    "Jet",
    "JetMap",
    "DiffeoJet",
    "VFieldJet",
    "mul",
    "compose",
    "invert",
    "conjugate",
    "composition_matrix",
]

MultiIndex = tuple  # tuple of nonnegative ints


def _monomials(nvars: int, degree: int) -> Iterator[tuple[int, ...]]:
    # lexicographic, higher powers of earlier variables first
    if nvars == 1:
        yield (degree,)
        return
    for first in range(degree, -1, -1):
        for rest in _monomials(nvars - 1, degree - first):
            yield (first,) + rest


class Basis:
    """Monomial indexing tables for a fixed ``(nvars, order)``.

    Multiplication and differentiation tables are built lazily; they are
    shared by every jet with the same shape through :func:`basis`.
    """

    def __init__(self, nvars: int, order: int):
        if nvars < 1 or order < 0:
            raise StructuralError(f"invalid jet shape nvars={nvars}, order={order}")
        self.nvars = nvars
        self.order = order
        exps = [m for d in range(order + 1) for m in _monomials(nvars, d)]
        self.exps = np.array(exps, dtype=np.int64).reshape(len(exps), nvars)
        self.exps.flags.writeable = False
        self.index = {m: i for i, m in enumerate(exps)}
        self.degrees = self.exps.sum(axis=1)
        self.dim = len(exps)
        # offsets[d] = rank of the first monomial of degree d
        self.offsets = [comb(nvars + d - 1, nvars) if d > 0 else 0 for d in range(order + 2)]
        self._pairs = None
        self._deriv = {}
        self._parents = None

    def dim_at(self, order: int) -> int:
        return comb(self.nvars + order, self.nvars)

    def degree_slice(self, d: int) -> slice:
        return slice(self.offsets[d], self.offsets[d + 1])

    @property
    def pairs(self):
        """``(I, J, K, starts)`` with ``exps[I] + exps[J] == exps[K]``, sorted by K.

        ``starts`` marks the first pair of each K, for ``np.add.reduceat``.
        """
        if self._pairs is None:
            I, J, K = [], [], []
            for i, ei in enumerate(self.exps):
                room = self.order - self.degrees[i]
                for j in range(self.dim_at(room)):
                    I.append(i)
                    J.append(j)
                    K.append(self.index[tuple(ei + self.exps[j])])
            I, J, K = (np.asarray(a, dtype=np.int64) for a in (I, J, K))
            perm = np.argsort(K, kind="stable")
            I, J, K = I[perm], J[perm], K[perm]
            starts = np.flatnonzero(np.r_[True, K[1:] != K[:-1]])
            self._pairs = (I, J, K, starts)
        return self._pairs

    def deriv_table(self, var: int):
        """``(src, dst, factor)``: d/dy_var maps coefficient src to dst times factor."""
        if var not in self._deriv:
            src = np.flatnonzero(self.exps[:, var] > 0)
            shifted = self.exps[src].copy()
            shifted[:, var] -= 1
            dst = np.array([self.index[tuple(e)] for e in shifted], dtype=np.int64)
            self._deriv[var] = (src, dst, self.exps[src, var].astype(float))
        return self._deriv[var]

    @property
    def parents(self):
        """For each degree d >= 2, groups ``(var, children, parents)``.

        Monomial ``children[i]`` equals ``parents[i] * y_var``, ``var`` being the
        first variable with positive exponent.
        """
        if self._parents is None:
            groups = {}
            for i in range(self.nvars + 1, self.dim):
                e = self.exps[i]
                var = int(np.flatnonzero(e)[0])
                p = e.copy()
                p[var] -= 1
                key = (int(self.degrees[i]), var)
                groups.setdefault(key, ([], []))
                groups[key][0].append(i)
                groups[key][1].append(self.index[tuple(p)])
            self._parents = [
                (d, var, np.array(ch), np.array(pa))
                for (d, var), (ch, pa) in sorted(groups.items())
            ]
        return self._parents


@lru_cache(maxsize=None)
def basis(nvars: int, order: int) -> Basis:
    return Basis(nvars, order)


class Jet:
    """Truncated power series in ``nvars`` variables up to total degree ``order``.

    Instances are immutable; arithmetic returns new jets. Scalars mix freely
    with jets in ``+``, ``-`` and ``*``.
    """

    __slots__ = ("nvars", "order", "coeffs")

    def __init__(self, nvars: int, order: int, coeffs=None):
        b = basis(nvars, order)
        if coeffs is None:
            arr = np.zeros(b.dim, dtype=complex)
        else:
            arr = np.array(coeffs, dtype=complex)
            if arr.shape != (b.dim,):
                raise StructuralError(
                    f"expected {b.dim} coefficients for nvars={nvars}, order={order}, got {arr.shape}"
                )
        arr.flags.writeable = False
        self.nvars = nvars
        self.order = order
        self.coeffs = arr

    # -- construction -------------------------------------------------
    @classmethod
    def zero(cls, nvars: int, order: int) -> "Jet":
        return cls(nvars, order)

    @classmethod
    def constant(cls, nvars: int, order: int, value: complex) -> "Jet":
        c = np.zeros(basis(nvars, order).dim, dtype=complex)
        c[0] = value
        return cls(nvars, order, c)

    @classmethod
    def variable(cls, nvars: int, order: int, var: int) -> "Jet":
        e = [0] * nvars
        e[var] = 1
        return cls.monomial(nvars, order, e)

    @classmethod
    def monomial(cls, nvars: int, order: int, exp: Sequence[int], coeff: complex = 1.0) -> "Jet":
        return cls.from_terms(nvars, order, {tuple(exp): coeff})

    @classmethod
    def from_terms(cls, nvars: int, order: int, terms) -> "Jet":
        """Build from ``{exponent tuple: coefficient}``; terms above ``order`` are dropped."""
        b = basis(nvars, order)
        c = np.zeros(b.dim, dtype=complex)
        items = terms.items() if hasattr(terms, "items") else terms
        for exp, value in items:
            exp = tuple(int(e) for e in exp)
            if len(exp) != nvars or min(exp) < 0:
                raise StructuralError(f"bad exponent {exp} for {nvars} variables")
            if sum(exp) <= order:
                c[b.index[exp]] += value
        return cls(nvars, order, c)

    # -- inspection ---------------------------------------------------
    @property
    def basis(self) -> Basis:
        return basis(self.nvars, self.order)

    def __getitem__(self, exp) -> complex:
        exp = tuple(exp)
        if sum(exp) > self.order:
            return 0j
        return complex(self.coeffs[self.basis.index[exp]])

    def terms(self, tol: float = 0.0) -> Iterator[tuple[tuple[int, ...], complex]]:
        """Yield ``(exponent, coefficient)`` for coefficients with modulus above ``tol``."""
        exps = self.basis.exps
        for i in np.flatnonzero(np.abs(self.coeffs) > tol):
            yield tuple(int(e) for e in exps[i]), complex(self.coeffs[i])

    def homogeneous(self, d: int) -> "Jet":
        """Degree-``d`` part, as a jet of the same shape."""
        c = np.zeros_like(self.coeffs)
        if d <= self.order:
            s = self.basis.degree_slice(d)
            c[s] = self.coeffs[s]
        return Jet(self.nvars, self.order, c)

    def low_order(self) -> int | None:
        """Smallest degree carrying a nonzero coefficient (None for the zero jet)."""
        nz = np.flatnonzero(self.coeffs != 0)
        return None if nz.size == 0 else int(self.basis.degrees[nz[0]])

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.coeffs))) if self.coeffs.size else 0.0

    def allclose(self, other: "Jet", tol: float = TAU_COEFF) -> bool:
        self._check(other)
        return bool(np.max(np.abs(self.coeffs - other.coeffs), initial=0.0) <= tol)

    def __repr__(self) -> str:
        names = [f"y{i + 1}" for i in range(self.nvars)]
        parts = []
        for exp, c in self.terms(ZERO_DUST):
            mono = "*".join(f"{n}^{e}" if e > 1 else n for n, e in zip(names, exp) if e)
            parts.append(f"({c:.6g})" + (f"*{mono}" if mono else ""))
        body = " + ".join(parts) if parts else "0"
        return f"Jet[{self.nvars},{self.order}]({body})"

    # -- shape changes ------------------------------------------------
    def truncate(self, order: int) -> "Jet":
        if order > self.order:
            raise StructuralError("truncate cannot raise the order; use with_order")
        return Jet(self.nvars, order, self.coeffs[: basis(self.nvars, order).dim])

    def with_order(self, order: int) -> "Jet":
        """Truncate or zero-pad to ``order``."""
        if order <= self.order:
            return self.truncate(order)
        c = np.zeros(basis(self.nvars, order).dim, dtype=complex)
        c[: self.coeffs.size] = self.coeffs
        return Jet(self.nvars, order, c)

    # -- arithmetic ---------------------------------------------------
    def _check(self, other: "Jet") -> None:
        if self.nvars != other.nvars or self.order != other.order:
            raise StructuralError(
                f"jet shape mismatch: ({self.nvars},{self.order}) vs ({other.nvars},{other.order})"
            )

    def _lift(self, other) -> "Jet":
        if isinstance(other, Jet):
            self._check(other)
            return other
        return Jet.constant(self.nvars, self.order, complex(other))

    def __add__(self, other) -> "Jet":
        if not isinstance(other, (Jet, int, float, complex, np.number)):
            return NotImplemented
        return Jet(self.nvars, self.order, self.coeffs + self._lift(other).coeffs)

    __radd__ = __add__

    def __sub__(self, other) -> "Jet":
        if not isinstance(other, (Jet, int, float, complex, np.number)):
            return NotImplemented
        return Jet(self.nvars, self.order, self.coeffs - self._lift(other).coeffs)

    def __rsub__(self, other) -> "Jet":
        return Jet(self.nvars, self.order, self._lift(other).coeffs - self.coeffs)

    def __neg__(self) -> "Jet":
        return Jet(self.nvars, self.order, -self.coeffs)

    def __mul__(self, other) -> "Jet":
        if isinstance(other, Jet):
            return mul(self, other)
        if isinstance(other, (int, float, complex, np.number)):
            return Jet(self.nvars, self.order, self.coeffs * other)
        return NotImplemented

    __rmul__ = __mul__

    def __truediv__(self, other) -> "Jet":
        if isinstance(other, (int, float, complex, np.number)):
            return Jet(self.nvars, self.order, self.coeffs / other)
        return NotImplemented

    def __pow__(self, k: int) -> "Jet":
        out = Jet.constant(self.nvars, self.order, 1.0)
        for _ in range(int(k)):
            out = out * self
        return out

    def deriv(self, var: int) -> "Jet":
        """Partial derivative in ``y_var``. The top-degree slot of the result is zero."""
        src, dst, fac = self.basis.deriv_table(var)
        c = np.zeros_like(self.coeffs)
        c[dst] = self.coeffs[src] * fac
        return Jet(self.nvars, self.order, c)

    def mult_matrix(self) -> np.ndarray:
        """Matrix ``M`` with ``(self * h).coeffs == M @ h.coeffs``."""
        I, J, K, _ = self.basis.pairs
        M = np.zeros((self.basis.dim, self.basis.dim), dtype=complex)
        M[K, I] = self.coeffs[J]
        return M

    def evaluate(self, point) -> complex:
        point = np.asarray(point, dtype=complex)
        monos = np.prod(point[None, :] ** self.basis.exps, axis=1)
        return complex(self.coeffs @ monos)

    # -- serialization ------------------------------------------------
    def to_json(self) -> dict:
        return {
            "nvars": self.nvars,
            "order": self.order,
            "terms": [
                {"exp": list(exp), "re": c.real, "im": c.imag} for exp, c in self.terms(ZERO_DUST)
            ],
        }

    @classmethod
    def from_json(cls, data: dict) -> "Jet":
        terms = {}
        for t in data["terms"]:
            key = tuple(t["exp"])
            terms[key] = terms.get(key, 0) + complex(t["re"], t.get("im", 0.0))
        return cls.from_terms(int(data["nvars"]), int(data["order"]), terms)


def mul(a: Jet, b: Jet) -> Jet:
    """Truncated product of two jets of the same shape."""
    a._check(b)
    I, J, _, starts = a.basis.pairs
    return Jet(a.nvars, a.order, np.add.reduceat(a.coeffs[I] * b.coeffs[J], starts))


def composition_matrix(components: Sequence[Jet], order: int | None = None) -> np.ndarray:
    """Rows are the jets ``comp**e`` for every monomial ``e`` of the outer basis.

    With ``M = composition_matrix(g)``, ``(h o g).coeffs == h.coeffs @ M`` for any
    jet ``h`` in ``len(g)`` variables truncated at ``order`` (default: the order
    of ``g``).
    """
    first = components[0]
    order = first.order if order is None else order
    outer = basis(len(components), order)
    inner = first.basis
    M = np.zeros((outer.dim, inner.dim), dtype=complex)
    M[0, 0] = 1.0
    if order == 0:
        return M
    for v, comp in enumerate(components):
        M[1 + v] = comp.coeffs
    mults = [None] * len(components)
    for _, var, children, parents in outer.parents:
        if mults[var] is None:
            mults[var] = components[var].mult_matrix().T
        M[children] = M[parents] @ mults[var]
    return M


class JetMap:
    """A tuple of jets sharing one shape, read as a map or a vector field."""

    __slots__ = ("components",)

    def __init__(self, components: Iterable[Jet]):
        comps = tuple(components)
        if not comps:
            raise StructuralError("a jet map needs at least one component")
        shape = (comps[0].nvars, comps[0].order)
        for c in comps:
            if (c.nvars, c.order) != shape:
                raise StructuralError("all components must share nvars and order")
        self.components = comps

    @property
    def nvars(self) -> int:
        return self.components[0].nvars

    @property
    def order(self) -> int:
        return self.components[0].order

    def __len__(self) -> int:
        return len(self.components)

    def __iter__(self):
        return iter(self.components)

    def __getitem__(self, k: int) -> Jet:
        return self.components[k]

    def coeff_array(self) -> np.ndarray:
        return np.stack([c.coeffs for c in self.components])

    @classmethod
    def from_array(cls, nvars: int, order: int, arr) -> "JetMap":
        return cls(Jet(nvars, order, row) for row in np.asarray(arr))

    def linear_part(self) -> np.ndarray:
        """Matrix whose ``[k, l]`` entry is the coefficient of ``y_l`` in component ``k``."""
        return self.coeff_array()[:, 1 : 1 + self.nvars].copy()

    def constant_part(self) -> np.ndarray:
        return self.coeff_array()[:, 0].copy()

    def truncate(self, order: int):
        return type(self)(c.truncate(order) for c in self.components)

    def with_order(self, order: int):
        return type(self)(c.with_order(order) for c in self.components)

    def homogeneous(self, d: int):
        return type(self)(c.homogeneous(d) for c in self.components)

    def max_abs(self) -> float:
        return max(c.max_abs() for c in self.components)

    def distance(self, other: "JetMap") -> float:
        """Largest coefficient difference."""
        if len(self) != len(other):
            raise StructuralError("component count mismatch")
        return max(float(np.max(np.abs(a.coeffs - b.coeffs))) for a, b in zip(self, other))

    def allclose(self, other: "JetMap", tol: float = TAU_COEFF) -> bool:
        return self.distance(other) <= tol

    def __add__(self, other):
        return type(self)(a + b for a, b in zip(self, other))

    def __sub__(self, other):
        return type(self)(a - b for a, b in zip(self, other))

    def __neg__(self):
        return type(self)(-a for a in self)

    def __mul__(self, scalar):
        return type(self)(a * scalar for a in self)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return type(self)(a / scalar for a in self)

    def evaluate(self, point) -> np.ndarray:
        point = np.asarray(point, dtype=complex)
        monos = np.prod(point[None, :] ** self.components[0].basis.exps, axis=1)
        return self.coeff_array() @ monos

    __call__ = evaluate

    def __repr__(self) -> str:
        inner = ", ".join(repr(c) for c in self.components)
        return f"{type(self).__name__}({inner})"

    def to_json(self) -> dict:
        return {"components": [c.to_json() for c in self.components]}

    @classmethod
    def from_json(cls, data: dict):
        return cls(Jet.from_json(c) for c in data["components"])


class DiffeoJet(JetMap):
    """Jet of a local diffeomorphism fixing the origin.

    Constant terms must vanish. Invertibility of the linear part is checked
    only where it matters (:func:`invert`).
    """

    __slots__ = ()

    def __init__(self, components: Iterable[Jet]):
        super().__init__(components)
        if np.max(np.abs(self.constant_part())) > 0:
            raise PreconditionError("diffeomorphism jets must have zero constant terms")

    @classmethod
    def identity(cls, n: int, order: int) -> "DiffeoJet":
        return cls(Jet.variable(n, order, k) for k in range(n))

    @classmethod
    def linear(cls, matrix, order: int) -> "DiffeoJet":
        matrix = np.asarray(matrix, dtype=complex)
        n = matrix.shape[0]
        comps = []
        for k in range(n):
            c = np.zeros(basis(n, order).dim, dtype=complex)
            if order >= 1:
                c[1 : 1 + n] = matrix[k]
            comps.append(Jet(n, order, c))
        return cls(comps)

    def compose(self, inner: "DiffeoJet") -> "DiffeoJet":
        """``self o inner``."""
        M = _checked_composition_matrix(len(self), inner, self.order)
        return DiffeoJet(Jet(inner.nvars, inner.order, c.coeffs @ M) for c in self)

    def inverse(self) -> "DiffeoJet":
        return invert(self)


class VFieldJet(JetMap):
    """Jet of a formal vector field ``sum_l b_l d/dy_l`` (components ``b_l``)."""

    __slots__ = ()

    @classmethod
    def zero(cls, n: int, order: int) -> "VFieldJet":
        return cls(Jet.zero(n, order) for _ in range(n))

    @classmethod
    def linear(cls, matrix, order: int) -> "VFieldJet":
        return cls(DiffeoJet.linear(matrix, order).components)

    def apply(self, h: Jet) -> Jet:
        """The derivation applied to ``h``: ``sum_l b_l * dh/dy_l``."""
        out = Jet.zero(h.nvars, h.order)
        for var, b in enumerate(self.components):
            out = out + b * h.deriv(var)
        return out

    def derivation_matrix(self) -> np.ndarray:
        """Matrix ``D`` with ``self.apply(h).coeffs == D @ h.coeffs``."""
        b = self.components[0].basis
        D = np.zeros((b.dim, b.dim), dtype=complex)
        for var, comp in enumerate(self.components):
            src, dst, fac = b.deriv_table(var)
            Dv = np.zeros((b.dim, b.dim))
            Dv[dst, src] = fac
            D += comp.mult_matrix() @ Dv
        return D

    def bracket(self, other: "VFieldJet") -> "VFieldJet":
        """Lie bracket ``[self, other]``, components ``self(other_i) - other(self_i)``."""
        return VFieldJet(self.apply(o) - other.apply(s) for s, o in zip(self, other))


def _checked_composition_matrix(nouter: int, inner: JetMap, order: int) -> np.ndarray:
    if nouter != len(inner):
        raise StructuralError(
            f"outer jet has {nouter} variables but inner map has {len(inner)} components"
        )
    if order != inner.order:
        raise StructuralError(f"order mismatch: outer {order}, inner {inner.order}")
    if np.max(np.abs(inner.constant_part())) > 0:
        raise PreconditionError("inner map must have zero constant term")
    return composition_matrix(inner.components, order)


def compose(outer: Jet, inner: JetMap) -> Jet:
    """Jet of ``outer o inner`` truncated at the common order."""
    M = _checked_composition_matrix(outer.nvars, inner, outer.order)
    return Jet(inner.nvars, inner.order, outer.coeffs @ M)


def invert(f: DiffeoJet) -> DiffeoJet:
    """Compositional inverse by a degree-by-degree triangular solve.

    With ``f = L + N`` (``N`` of order >= 2) the inverse ``g`` solves
    ``g = L^{-1}(y - N o g)``; each pass fixes one more degree, so
    ``order - 1`` passes are exact.
    """
    n = len(f)
    if f.nvars != n:
        raise StructuralError("only maps from n variables to n variables can be inverted")
    L = f.linear_part()
    if np.linalg.cond(L) > 1e12:
        raise PreconditionError("linear part is singular")
    Linv = np.linalg.inv(L)
    g = DiffeoJet.linear(Linv, f.order)
    if f.order < 2:
        return g
    N = f - DiffeoJet.linear(L, f.order)
    ident = DiffeoJet.identity(n, f.order)
    for _ in range(f.order - 1):
        M = composition_matrix(g.components)
        rhs = ident.coeff_array() - N.coeff_array() @ M
        g = DiffeoJet.from_array(n, f.order, Linv @ rhs)
    return g


def conjugate(f: DiffeoJet, psi: DiffeoJet) -> DiffeoJet:
    """``psi o f o psi^{-1}``."""
    if f.order != psi.order or len(f) != len(psi):
        raise StructuralError("f and psi must share order and dimension")
    return psi.compose(f.compose(invert(psi)))
