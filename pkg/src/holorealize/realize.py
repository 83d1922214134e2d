"""From a diffeomorphism jet ``h`` and a logarithm ``A`` of ``dh(0)`` to a saddle system.

Pipeline: spectral analysis, formal normal form, negative-resonance gate,
choice of ``nu``, resonant suspension ``F``, ``Z = X_s + log F_u / (2 pi i)``,
truncation, and a final change of coordinates so that the holonomy of the
returned system on ``{x = 1}`` has the same ``nu``-jet as ``h`` itself.

``F_u`` fixes ``x`` and all its monomials are resonant, so ``log F_u`` is
computed on ``{x = 1}`` (an n-variable jet) and each coefficient is put back
at its power ``x^{R_{j;k}}``. This avoids dense jets in ``n + 1`` variables of
total degree ``max R + nu``. :func:`log_diffeo` applied to the dense
suspension gives the same field and is used as a cross-check in the tests.
"""

from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NegativeResonancePresent, NonIntegerExponent, Obstructed, PreconditionError
from .formalcalc import log_diffeo
from .jets import DiffeoJet, Jet, VFieldJet, basis, invert
from .normalform import (
    NormalFormResult,
    ResonanceVerdict,
    check_negative_resonances,
    diffeo_normal_form,
)
from .saddle import GradedField, SaddleSystem
from .spectral import (
    ResonanceClass,
    SpectralData,
    analyze_matrix,
    classify,
    negative_resonance_degree_bound,
    resonance_value,
)
from .tolerances import TAU_COEFF, TAU_INT, TAU_MAT, ZERO_DUST

log = logging.getLogger(__name__)

__all__ = [
    "RealizationCertificate",
    "choose_nu",
    "build_resonant_suspension",
    "assemble_Z",
    "realize",
    "resonant_defect",
    "minimal_shift",
]


def choose_nu(sd: SpectralData, requested: int | None = None) -> int:
    """Smallest admissible jet order: ``delta0 (nu + 1) - delta1 >= 4`` and all negative resonances seen."""
    rule = math.ceil((4 + sd.delta1) / sd.delta0) - 1
    nu = max(requested or 2, rule, negative_resonance_degree_bound(sd))
    assert sd.delta0 * (nu + 1) - sd.delta1 >= 4 - 1e-12
    return nu


def _weights(mu) -> np.ndarray:
    return np.r_[1.0, np.asarray(mu, dtype=complex)]


def resonant_defect(M: GradedField, mu) -> float:
    """Largest ``|(m + j.mu - mu_k) c|`` over terms ``c x^m y^j e_k`` of ``M``.

    Zero exactly when ``M`` (a map's y-part or a vector field) is invariant
    under the semisimple field ``X_s = x d/dx + sum mu_l y_l d/dy_l``.
    """
    mu = np.asarray(mu, dtype=complex)
    worst = 0.0
    for m, V in M.parts.items():
        b = V[0].basis
        mult = m + b.exps @ mu
        arr = V.coeff_array()
        worst = max(worst, float(np.max(np.abs(arr * (mult[None, :] - mu[:, None])), initial=0)))
    return worst


def _exponent_table(mu, nu: int, tol_int: float) -> dict:
    """``(j, k) -> (R, class)`` for every ``1 <= |j| <= nu``."""
    n = len(mu)
    b = basis(n, nu)
    table = {}
    for i in range(1, b.dim):
        j = tuple(int(v) for v in b.exps[i])
        for k in range(n):
            R = resonance_value(mu, j, k)
            with warnings.catch_warnings():
                warnings.simplefilter("ignore")
                table[(j, k)] = (R, classify(R, tol_int))
    return table


def _lift(arr: np.ndarray, mu, nu: int, table: dict, tol_coeff: float, what: str) -> GradedField:
    """Place the coefficient of ``y^j e_k`` at ``x^{R_{j;k}}``.

    Coefficients at non-integer or negative ``R`` must vanish; anything else
    means ``arr`` is not the restriction of a resonant object.
    """
    n = len(mu)
    b = basis(n, nu)
    scale = max(1.0, float(np.max(np.abs(arr), initial=0)))
    terms, bad, neg = [], [], []
    for i in range(1, b.dim):
        j = tuple(int(v) for v in b.exps[i])
        for k in range(n):
            c = arr[k, i]
            if abs(c) <= ZERO_DUST * scale:
                continue
            R, cls = table[(j, k)]
            if cls is ResonanceClass.NON_INTEGER:
                if abs(c) > tol_coeff * scale:
                    bad.append((j, k, R, c))
                continue
            m = int(round(R.real))
            if m < 0:
                if abs(c) > tol_coeff * scale:
                    neg.append((j, k, R, c))
                continue
            terms.append((m, j, k, c))
    if neg:
        raise NegativeResonancePresent(f"{what} has terms at negative resonances", neg)
    if bad:
        raise NonIntegerExponent(f"{what} has terms at non-integer resonances: {bad[:3]}")
    kmax = max((t[0] for t in terms), default=0)
    return GradedField.from_terms(n, nu, kmax, terms)


def build_resonant_suspension(
    f_normal: DiffeoJet,
    sd: SpectralData,
    nu: int,
    tol_coeff: float = TAU_COEFF,
    tol_int: float = TAU_INT,
) -> GradedField:
    """y-part of ``F(x, y) = (x, sum c_{j;k} x^{R_{j;k}} y^j e_k)`` with ``|j| <= nu``.

    ``f_normal`` must be a normal form with respect to the Jordan data of
    ``sd`` (linear part ``exp(2 pi i J)``). The x-component of ``F`` is ``x``.
    """
    f = f_normal.with_order(nu)
    table = _exponent_table(sd.mu, nu, tol_int)
    return _lift(f.coeff_array(), sd.mu, nu, table, tol_coeff, "f_normal")


def suspension_jet(F: GradedField) -> DiffeoJet:
    """Dense ``(n + 1)``-variable diffeomorphism jet ``(x, F_y)``; for small cases and tests."""
    comps = F.to_jets()
    x = Jet.variable(F.n + 1, comps[0].order, 0)
    return DiffeoJet([x] + comps)


def assemble_Z(
    F: GradedField,
    sd: SpectralData,
    nu: int,
    tol_coeff: float = TAU_COEFF,
    tol_int: float = TAU_INT,
) -> tuple:
    """``Z = X_s + log F_u / (2 pi i)`` truncated at y-degree ``nu``.

    Returns ``(system, Z)`` where ``system`` is the :class:`SaddleSystem` in
    the Jordan coordinates (``A = J``) and ``Z`` is the y-part of ``Z`` as a
    graded field.
    """
    n = sd.n
    lam = sd.lam
    # F_s = (x, lam y); F_u = F_s^{-1} o F divides component k by lam_k.
    # Restricted to x = 1 it is an n-variable unipotent jet.
    f_u = np.zeros((n, basis(n, nu).dim), dtype=complex)
    for m, V in F.parts.items():
        f_u += V.coeff_array()
    f_u /= lam[:, None]
    L = log_diffeo(DiffeoJet.from_array(n, nu, f_u))
    table = _exponent_table(sd.mu, nu, tol_int)
    logF = _lift(L.coeff_array(), sd.mu, nu, table, tol_coeff, "log F_u")
    kmax = max(logF.kmax, F.kmax)
    Xs = GradedField(n, nu, kmax, {0: VFieldJet.linear(np.diag(sd.mu), nu)})
    Z = Xs + GradedField(n, nu, kmax, logF.parts) / (2j * np.pi)
    system = SaddleSystem.from_y_field(Z, tol=tol_coeff)
    return system, Z


@dataclass
class RealizationCertificate:
    """Everything produced on the way from ``h`` to ``system``.

    ``system`` lives in the input coordinates: its holonomy on ``{x = 1}``
    has the same ``nu``-jet as ``h``, so ``conjugator_to_input`` is the
    identity. ``system_normalized`` is the same system before the change of
    coordinates by ``conjugator_normal^{-1}``; its holonomy jet is
    ``nf.normal``.
    """

    system: SaddleSystem
    system_normalized: SaddleSystem
    nu: int
    conjugator_to_input: DiffeoJet
    conjugator_normal: DiffeoJet
    F_suspended: GradedField
    Z_full: GradedField
    resonance_table: list
    h: DiffeoJet
    sd: SpectralData
    nf: NormalFormResult = field(repr=False)
    verdict: ResonanceVerdict = field(repr=False)

    def exponent_table(self) -> list:
        """``(j, k, R, xdeg)`` for every term of ``F_suspended``."""
        out = []
        for m, exp, k, _ in self.F_suspended.terms(ZERO_DUST):
            out.append((exp, k, resonance_value(self.sd.mu, exp, k), m))
        return out

    def to_json(self) -> dict:
        return {
            "nu": self.nu,
            "h": self.h.to_json(),
            "system": self.system.to_json(),
            "system_normalized": self.system_normalized.to_json(),
            "conjugator_to_input": self.conjugator_to_input.to_json(),
            "conjugator_normal": self.conjugator_normal.to_json(),
            "F_suspended": _graded_json(self.F_suspended),
            "Z": _graded_json(self.Z_full),
            "resonances": [
                dict(r.to_json(), coeff=_pair(self.nf.coefficient(r.j, r.k))) for r in self.resonance_table
            ],
            "exponents": [
                {"j": list(j), "k": k + 1, "R": _pair(R), "xdeg": m} for j, k, R, m in self.exponent_table()
            ],
            "verdict": self.verdict.to_json(),
            "spectral": self.sd.to_json(),
        }


def _pair(c: complex) -> list:
    return [float(c.real), float(c.imag)]


def _graded_json(M: GradedField) -> list:
    comps: list[list[dict]] = [[] for _ in range(M.n)]
    for m, exp, k, c in M.terms(ZERO_DUST):
        comps[k].append({"xdeg": int(m), "exp": [int(e) for e in exp], "re": float(c.real), "im": float(c.imag)})
    return comps


def realize(
    h: DiffeoJet,
    A,
    nu: int | None = None,
    nu_override: int | None = None,
    eps_request: float | None = None,
    tol_coeff: float = TAU_COEFF,
    tol_int: float = TAU_INT,
    tol_mat: float = TAU_MAT,
) -> RealizationCertificate:
    """Build a polynomial saddle system whose holonomy on ``{x = 1}`` has ``nu``-jet ``j^nu h``.

    ``nu`` is raised to the admissible minimum from :func:`choose_nu`;
    ``nu_override`` is used as given (with a warning when the delta
    inequality fails), since matching jets does not need it.

    ``eps_request`` defaults to the largest admissible rescaling of the
    nilpotent part: coordinates adapted to a small ``eps`` scale degree-``d``
    coefficients by up to ``eps^{-d}``, and rounding in those coordinates is
    amplified by the same factor on the way back to the coordinates of ``h``.

    Raises Obstructed when ``h`` has a negative resonance with respect to ``A``.
    """
    sd = analyze_matrix(A, eps_request=math.inf if eps_request is None else eps_request)
    n = sd.n
    if nu_override is not None:
        nu_used = int(nu_override)
        if sd.delta0 * (nu_used + 1) - sd.delta1 < 4:
            warnings.warn(f"nu = {nu_used} does not satisfy delta0 (nu + 1) - delta1 >= 4", UserWarning)
        if nu_used < negative_resonance_degree_bound(sd):
            warnings.warn("nu is below the negative-resonance degree bound; higher obstructions are not checked")
    else:
        nu_used = choose_nu(sd, nu)
    if nu_used < 2:
        raise PreconditionError("nu must be at least 2")
    if len(h) != n or h.nvars != n:
        raise PreconditionError("h and A have different dimensions")
    hh = h.with_order(max(h.order, nu_used)).truncate(nu_used)
    nf = diffeo_normal_form(hh, sd, nu_used, tol_int=tol_int, tol_mat=tol_mat, tol_coeff=tol_coeff)
    verdict = check_negative_resonances(nf, sd, tol_coeff)
    if not verdict.realizable:
        raise Obstructed(
            "h has negative resonances with respect to A",
            [(o.j, o.k, o.value, o.coeff) for o in verdict.obstructions],
        )
    F = build_resonant_suspension(nf.normal, sd, nu_used, tol_coeff, tol_int)
    normalized, Z = assemble_Z(F, sd, nu_used, tol_coeff, tol_int)
    # back to the coordinates of h: y = P tangent^{-1}(z), in two steps
    Y = normalized.y_field().pushforward(invert(nf.tangent))
    Y = Y.pushforward(DiffeoJet.linear(sd.P, nu_used))
    pushed = SaddleSystem.from_y_field(Y, tol=tol_coeff * max(1.0, Y.max_abs()))
    if np.linalg.norm(pushed.A - sd.A) > tol_mat * (1 + np.linalg.norm(sd.A)):
        raise PreconditionError("linear part of the realized system drifted from A")
    system = SaddleSystem(sd.A, pushed.G)
    log.info("realized n=%d nu=%d with %d terms", n, nu_used, sum(1 for _ in system.G.terms(ZERO_DUST)))
    return RealizationCertificate(
        system=system,
        system_normalized=normalized,
        nu=nu_used,
        conjugator_to_input=DiffeoJet.identity(n, nu_used),
        conjugator_normal=nf.conjugator,
        F_suspended=F,
        Z_full=Z,
        resonance_table=list(nf.kept),
        h=hh,
        sd=sd,
        nf=nf,
        verdict=verdict,
    )


def minimal_shift(h: DiffeoJet, A, max_shift: int = 20, **kw) -> int:
    """Smallest ``m >= 0`` such that ``h`` has no negative resonances with respect to ``A - m I``."""
    A = np.asarray(A, dtype=complex)
    for m in range(max_shift + 1):
        sd = analyze_matrix(A - m * np.eye(A.shape[0]), **kw)
        nu = max(h.order, negative_resonance_degree_bound(sd), 2)
        nf = diffeo_normal_form(h.with_order(nu), sd, nu)
        if check_negative_resonances(nf, sd).realizable:
            return m
    raise PreconditionError(f"no admissible shift up to {max_shift}")
