"""Numerical holonomy of saddle systems and the transport maps along real rays.

The holonomy jet is obtained by integrating the flow of the system around
the loop ``x = x0 exp(2 pi i s t)`` on the space of order-``nu`` jets: the
state is the jet ``Y(t)`` of the leaf through ``(x0, y)`` as a function of
``y``, and the right-hand side composes the system's coefficients with
``Y`` in the jet ring. Point transports integrate the same field along
``x(t) = x0^{1-t}`` for many initial points at once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.integrate import solve_ivp

from .errors import InsufficientSamples, LeftDomain, NonFiniteCoefficient, PreconditionError, StepUnderflow
from .jets import DiffeoJet, Jet, basis, composition_matrix
from .saddle import SaddleSystem
from .spectral import SpectralData
from .tolerances import ODE_ATOL, ODE_RTOL, ZERO_DUST

__all__ = [
    "HolonomyJet",
    "TransportBoundReport",
    "holonomy_jet",
    "transport_map",
    "inverse_transport_map",
    "working_radius",
    "adapted_system",
    "contraction_report",
    "partial_transport",
    "loop_transport",
    "surgery_cocycle",
    "cocycle_displacement",
    "cocycle_decay_fit",
]


@dataclass
class HolonomyJet:
    jet: DiffeoJet
    x0: complex
    orientation: int
    nfev: int
    steps: int
    rejected: int
    rtol: float
    atol: float
    peak: np.ndarray = field(repr=False, default=None)  # max |coefficient| along the loop, shape (n, dim)

    @property
    def dimension(self) -> int:
        """Size ``n C(n + nu, n)`` of the integrated jet space."""
        return len(self.jet) * basis(self.jet.nvars, self.jet.order).dim

    def to_json(self) -> dict:
        return {
            "jet": self.jet.to_json(),
            "x0": [self.x0.real, self.x0.imag],
            "orientation": self.orientation,
            "stats": {
                "dimension": self.dimension,
                "nfev": self.nfev,
                "steps": self.steps,
                "rejected_steps": self.rejected,
                "rtol": self.rtol,
                "atol": self.atol,
            },
        }


class _Field:
    """Fast evaluation of ``A y + G(x, y)`` for one system truncated at y-order ``order``."""

    def __init__(self, system: SaddleSystem, order: int | None = None):
        order = system.order if order is None else order
        self.n = system.n
        self.order = order
        Y = system.y_field()
        stacked = Y.stacked()
        b_sys = basis(self.n, Y.order)
        b = basis(self.n, order)
        keep = min(b.dim, b_sys.dim)
        self.coeffs = np.zeros((stacked.shape[0], self.n, b.dim), dtype=complex)
        self.coeffs[:, :, :keep] = stacked[:, :, :keep]
        self.basis = b

    def at(self, x: complex) -> np.ndarray:
        """Coefficient array ``(n, dim)`` of the field on the fiber over ``x`` (Horner in ``x``)."""
        C = self.coeffs[-1].copy()
        for m in range(self.coeffs.shape[0] - 2, -1, -1):
            C *= x
            C += self.coeffs[m]
        return C

    def monomials(self, pts: np.ndarray) -> np.ndarray:
        """``pts`` of shape ``(P, n)`` -> values of every basis monomial, shape ``(P, dim)``."""
        b = self.basis
        out = np.empty((pts.shape[0], b.dim), dtype=complex)
        out[:, 0] = 1.0
        if b.order >= 1:
            out[:, 1 : 1 + self.n] = pts
        for _, var, children, parents in b.parents:
            out[:, children] = out[:, parents] * pts[:, var : var + 1]
        return out

    def points(self, x: complex, pts: np.ndarray) -> np.ndarray:
        return self.monomials(pts) @ self.at(x).T

    def difference(self, x: complex, pts: np.ndarray, diff: np.ndarray) -> np.ndarray:
        """Field at ``pts + diff`` minus field at ``pts`` without subtractive cancellation.

        Uses ``q^e - p^e = (q^e' - p^e') q_v + p^e' (q_v - p_v)`` along the
        parent table, so every term is proportional to ``diff``.
        """
        b = self.basis
        q = pts + diff
        mp = np.empty((pts.shape[0], b.dim), dtype=complex)
        mq = np.empty_like(mp)
        dm = np.zeros_like(mp)
        mp[:, 0] = mq[:, 0] = 1.0
        if b.order >= 1:
            mp[:, 1 : 1 + self.n] = pts
            mq[:, 1 : 1 + self.n] = q
            dm[:, 1 : 1 + self.n] = diff
        for _, var, children, parents in b.parents:
            mp[:, children] = mp[:, parents] * pts[:, var : var + 1]
            mq[:, children] = mq[:, parents] * q[:, var : var + 1]
            dm[:, children] = dm[:, parents] * q[:, var : var + 1] + mp[:, parents] * diff[:, var : var + 1]
        return dm @ self.at(x).T


def _solve(rhs, y0, t_end, rtol, atol, method, guard=None):
    events = None
    if guard is not None:
        guard.terminal = True
        events = [guard]
    sol = solve_ivp(rhs, (0.0, t_end), y0, method=method, rtol=rtol, atol=atol, events=events)
    if guard is not None and sol.status == 1:
        raise LeftDomain("trajectory left the working ball", float(sol.t_events[0][0]))
    if sol.status != 0:
        raise StepUnderflow(f"integrator failed: {sol.message}")
    y = sol.y[:, -1]
    if not np.all(np.isfinite(y)):
        raise NonFiniteCoefficient("integration produced non-finite values")
    return y, sol


def holonomy_jet(
    system: SaddleSystem,
    nu: int | None = None,
    x0: complex = 1.0,
    rtol: float = ODE_RTOL,
    atol: float = ODE_ATOL,
    orientation: int = 1,
    method: str = "RK45",
) -> HolonomyJet:
    """Jet of the holonomy on ``{x = x0}`` for the loop ``x0 exp(2 pi i s t)``, ``s = orientation``.

    Integrates ``dY/dt = 2 pi i s (A Y + G(x(t), Y))`` on order-``nu`` jets
    from ``Y(0) = id`` to ``t = 1``. Each step keeps the error of every
    coefficient below ``atol + rtol |Y_i|``: the integrator's RMS error norm
    over ``N`` coefficients is run at ``rtol / sqrt(N)`` and ``atol / sqrt(N)``.
    """
    nu = system.order if nu is None else nu
    if nu < 1:
        raise PreconditionError("nu must be at least 1")
    if abs(abs(complex(x0)) - 1) > 1e-12:
        raise PreconditionError("the base point x0 must lie on the unit circle")
    if orientation not in (1, -1):
        raise PreconditionError("orientation must be +1 or -1")
    fld = _Field(system, nu)
    n, dim = fld.n, fld.basis.dim
    w = 2j * np.pi * orientation
    x0 = complex(x0)

    def rhs(t, flat):
        Y = flat.reshape(n, dim)
        M = composition_matrix([Jet(n, nu, Y[k]) for k in range(n)])
        C = fld.at(x0 * np.exp(w * t))
        return (w * (C @ M)).ravel()

    y0 = DiffeoJet.identity(n, nu).coeff_array().ravel().astype(complex)
    root = math.sqrt(y0.size)
    y, sol = _solve(rhs, y0, 1.0, rtol / root, atol / root, method)
    jet = DiffeoJet.from_array(n, nu, y.reshape(n, dim))
    peak = np.abs(sol.y).max(axis=1).reshape(n, dim)
    steps = len(sol.t) - 1
    # RK45 spends two evaluations choosing the first step and six per attempt
    rejected = max(0, (int(sol.nfev) - 2) // 6 - steps) if method == "RK45" else 0
    return HolonomyJet(jet, x0, orientation, int(sol.nfev), steps, rejected, rtol, atol, peak)


def adapted_system(system: SaddleSystem, sd: SpectralData) -> SaddleSystem:
    """The system in the coordinates ``z = P^{-1} y`` where ``A`` takes its eps-Jordan form.

    In these coordinates ``Re <A z, z>`` lies strictly between
    ``-delta1 |z|^2`` and ``-delta0 |z|^2``, which is what the contraction
    envelope rests on.
    """
    if np.linalg.norm(system.A - sd.A) > 1e-9 * (1 + np.linalg.norm(sd.A)):
        raise PreconditionError("spectral data does not belong to this system")
    Y = system.y_field().pushforward(DiffeoJet.linear(sd.P_inv, system.order))
    return SaddleSystem(sd.jordan, SaddleSystem.from_y_field(Y, tol=ZERO_DUST * max(1.0, Y.max_abs())).G)


def working_radius(system: SaddleSystem) -> float:
    """``min(0.5, 0.5 C^{-1/(nu-1)})`` with ``C`` the largest l1 norm of a component of ``G``."""
    nu = max(system.order, 2)
    norms = np.zeros(system.n)
    for _, _, k, c in system.G.terms():
        norms[k] += abs(c)
    C = float(norms.max(initial=0))
    if C == 0:
        return 0.5
    return min(0.5, 0.5 * C ** (-1.0 / (nu - 1)))


def _slit_log(x) -> complex:
    x = complex(x)
    if x == 0 or (x.imag == 0 and x.real < 0):
        raise PreconditionError("x must lie in the slit disc (not on (-inf, 0])")
    return complex(np.log(x))


def _escape_guard(radius):
    def guard(t, flat):
        return 2 * radius - np.max(np.abs(flat))

    return guard


def _leaf_transport(system, xa, xb, pts, rtol, atol, method, radius, fld=None):
    """Move points along leaves from ``{x = xa}`` to ``{x = xb}`` on ``x(t) = xa^{1-t} xb^t``."""
    la, lb = _slit_log(xa), _slit_log(xb)
    step = lb - la
    fld = fld or _Field(system)
    pts = np.atleast_2d(np.asarray(pts, dtype=complex))
    P, n = pts.shape

    def rhs(t, flat):
        return (step * fld.points(np.exp(la + t * step), flat.reshape(P, n))).ravel()

    guard = None if radius is None else _escape_guard(radius)
    y, _ = _solve(rhs, pts.ravel(), 1.0, rtol, atol, method, guard)
    return y.reshape(P, n)


def _transport(system, x0, pts, rtol, atol, method, inverse, radius, fld=None):
    if inverse:
        return _leaf_transport(system, 1.0, x0, pts, rtol, atol, method, radius, fld)
    return _leaf_transport(system, x0, 1.0, pts, rtol, atol, method, radius, fld)


def _shaped(out, y):
    return out[0] if np.ndim(y) == 1 else out


def transport_map(system, x0, y0, rtol=ODE_RTOL, atol=ODE_ATOL, method="RK45", radius=None):
    """``f_{x0}(y0)``: where the leaf through ``(x0, y0)`` meets ``{x = 1}``.

    Integrates ``w' = -log(x0) Z(w)`` for ``t`` in ``[0, 1]`` so that
    ``x(t) = x0^{1-t}``. ``y0`` may be a single point or an array of points
    (one per row). With ``radius`` set, leaving the ball of radius
    ``2 * radius`` raises LeftDomain.
    """
    return _shaped(_transport(system, x0, y0, rtol, atol, method, False, radius), y0)


def inverse_transport_map(system, x0, w0, rtol=ODE_RTOL, atol=ODE_ATOL, method="RK45", radius=None):
    """``f_{x0}^{-1}(w0)``: from ``{x = 1}`` back to ``{x = x0}`` along ``x(t) = x0^t``."""
    return _shaped(_transport(system, x0, w0, rtol, atol, method, True, radius), w0)


def partial_transport(system, xa, xb, y, rtol=ODE_RTOL, atol=ODE_ATOL, method="RK45", radius=None):
    """Move ``y`` along its leaf from ``{x = xa}`` to ``{x = xb}`` inside the slit disc."""
    return _shaped(_leaf_transport(system, xa, xb, y, rtol, atol, method, radius), y)


def loop_transport(system, y, x0=1.0, orientation=1, rtol=ODE_RTOL, atol=ODE_ATOL, method="RK45"):
    """Holonomy of a point: follow the leaf through ``(x0, y)`` once around ``x0 exp(2 pi i s t)``."""
    fld = _Field(system)
    pts = np.atleast_2d(np.asarray(y, dtype=complex))
    P, n = pts.shape
    w = 2j * np.pi * orientation
    x0 = complex(x0)

    def rhs(t, flat):
        return (w * fld.points(x0 * np.exp(w * t), flat.reshape(P, n))).ravel()

    out, _ = _solve(rhs, pts.ravel(), 1.0, rtol, atol, method)
    return _shaped(out.reshape(P, n), y)


@dataclass
class TransportBoundReport:
    samples: list  # (|x|, ratio)
    exponent: float
    intercept: float
    c0: float
    c1: float
    delta0: float
    delta1: float
    slack: float
    passed: bool
    notes: list = field(default_factory=list)

    def to_json(self) -> dict:
        return {
            "samples": [[float(a), float(b)] for a, b in self.samples],
            "exponent": self.exponent,
            "intercept": self.intercept,
            "c0": self.c0,
            "c1": self.c1,
            "delta0": self.delta0,
            "delta1": self.delta1,
            "slack": self.slack,
            "passed": self.passed,
        }


def _random_ball(rng, count, n, radius):
    v = rng.standard_normal((count, n)) + 1j * rng.standard_normal((count, n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    r = radius * rng.uniform(0.2, 1.0, size=(count, 1))
    return v * r


def contraction_report(
    system: SaddleSystem,
    sd: SpectralData,
    xs=None,
    pairs: int = 10,
    seed: int = 0,
    slack: float = 0.1,
    rtol: float = ODE_RTOL,
    atol: float = ODE_ATOL,
    direction=None,
) -> TransportBoundReport:
    """Fit ``log ratio = a + e log|x|`` for ``ratio = |f_x(u) - f_x(v)| / |u - v|``.

    Points and distances are taken in the adapted coordinates of
    :func:`adapted_system`.

    Passes when ``e`` lies in ``[delta0 - slack, delta1 + slack]`` and the
    envelope constants satisfy ``0 < c1 <= c0``, where ``c0`` and ``c1``
    are the smallest and largest constants with
    ``c1 |x|^delta1 <= ratio <= c0 |x|^delta0`` over all samples. With
    ``direction`` given, each ``v`` is ``u`` moved along that vector.
    """
    if xs is None:
        xs = np.geomspace(0.02, 1.0, 20)
    xs = np.asarray(xs, dtype=float)
    if len(xs) < 2 or pairs < 1:
        raise InsufficientSamples("need at least two |x| values and one pair")
    if np.any(xs <= 0.01) or np.any(xs > 1):
        raise PreconditionError("sample |x| values must lie in (0.01, 1]")
    system = adapted_system(system, sd)
    rng = np.random.default_rng(seed)
    r = 0.2 * working_radius(system)
    fld = _Field(system)
    samples = []
    for x in xs:
        u = _random_ball(rng, pairs, system.n, r)
        if direction is None:
            v = _random_ball(rng, pairs, system.n, r)
        else:
            step = np.asarray(direction, dtype=complex) / np.linalg.norm(direction)
            v = u + 0.5 * r * rng.uniform(0.1, 1.0, size=(pairs, 1)) * step
        out = _transport(system, x, np.vstack([u, v]), rtol, atol, "RK45", False, r * 5, fld)
        fu, fv = out[:pairs], out[pairs:]
        ratio = np.linalg.norm(fu - fv, axis=1) / np.linalg.norm(u - v, axis=1)
        samples.extend((float(x), float(q)) for q in ratio)
    ax = np.log([s[0] for s in samples])
    ay = np.log([s[1] for s in samples])
    e, a = np.polyfit(ax, ay, 1)
    absx = np.array([s[0] for s in samples])
    ratio = np.array([s[1] for s in samples])
    c0 = float(np.max(ratio / absx**sd.delta0))
    c1 = float(np.min(ratio / absx**sd.delta1))
    ok = (sd.delta0 - slack <= e <= sd.delta1 + slack) and 0 < c1 <= c0
    return TransportBoundReport(samples, float(e), float(a), c0, c1, sd.delta0, sd.delta1, slack, bool(ok))


def surgery_cocycle(system, xi: DiffeoJet, x, y, rtol=ODE_RTOL, atol=ODE_ATOL):
    """``phi(x, y) = f_x^{-1}(xi(f_x(y)))``, computed directly."""
    w = transport_map(system, x, y, rtol, atol)
    pts = np.atleast_2d(w)
    moved = np.array([xi.evaluate(p) for p in pts])
    return _shaped(_transport(system, x, moved, rtol, atol, "RK45", True, None), y)


def cocycle_displacement(system, xi: DiffeoJet, x, y, rtol=ODE_RTOL, atol=ODE_ATOL, method="DOP853"):
    """``phi(x, y) - y`` integrated in difference form.

    With ``w = f_x(y)`` and ``d = xi(w) - w``, the displacement is
    ``f_x^{-1}(w + d) - f_x^{-1}(w)``; the two inverse trajectories are
    carried as ``(p, q - p)`` so the difference never suffers cancellation.
    This equals ``surgery_cocycle(...) - y`` up to the round-trip error
    ``f_x^{-1}(f_x(y)) - y`` of the integrator.
    """
    fld = _Field(system)
    lx = _slit_log(x)
    pts = np.atleast_2d(np.asarray(y, dtype=complex))
    P, n = pts.shape
    w = _transport(system, x, pts, rtol, atol, method, False, None, fld)
    bump = xi - DiffeoJet.identity(xi.nvars, xi.order)
    d = np.array([bump.evaluate(p) for p in w])

    def rhs(t, flat):
        S = flat.reshape(2, P, n)
        p, diff = S[0], S[1]
        xt = np.exp(t * lx)
        return (lx * np.stack([fld.points(xt, p), fld.difference(xt, p, diff)])).ravel()

    if not np.any(d):
        return _shaped(np.zeros_like(pts), y)
    # the difference block is controlled relative to its own size
    scale = float(np.max(np.abs(d)))
    atol_vec = np.concatenate([np.full(P * n, atol), np.full(P * n, max(rtol * scale, 1e-290))])
    sol = solve_ivp(rhs, (0.0, 1.0), np.stack([w, d]).ravel(), method=method, rtol=rtol, atol=atol_vec)
    if sol.status != 0:
        raise StepUnderflow(f"integrator failed: {sol.message}")
    return _shaped(sol.y[:, -1].reshape(2, P, n)[1], y)


def cocycle_decay_fit(
    system: SaddleSystem,
    sd: SpectralData,
    nu: int,
    xs=None,
    points: int = 4,
    seed: int = 0,
    rtol: float = 1e-12,
    atol: float = 1e-16,
) -> dict:
    """Fit the decay exponent of ``|phi(x, y) - y|`` in ``|x|`` for ``xi = id + c y_1^{nu+1} e_1``.

    The bound ``C |x|^{delta0 (nu + 1) - delta1} |y|^{nu + 1}`` predicts an
    exponent of at least ``delta0 (nu + 1) - delta1``. ``c`` is scaled so
    that the perturbation at ``{x = 1}`` is visible above rounding. Like
    :func:`contraction_report` this works in the adapted coordinates.
    """
    if xs is None:
        xs = np.geomspace(0.02, 1.0, 20)
    system = adapted_system(system, sd)
    rng = np.random.default_rng(seed)
    n = system.n
    r = 0.2 * working_radius(system)
    ys = _random_ball(rng, points, n, r)
    order = nu + 1
    c = 0.1 * r ** (-nu)
    xi = DiffeoJet.identity(n, order) + DiffeoJet(
        [Jet.monomial(n, order, (order,) + (0,) * (n - 1), c)] + [Jet.zero(n, order)] * (n - 1)
    )
    rows = []
    for x in xs:
        disp = cocycle_displacement(system, xi, x, ys, rtol, atol)
        rows.append((float(x), float(np.max(np.linalg.norm(disp, axis=1)))))
    data = np.array(rows)
    good = data[:, 1] > 0
    e, a = np.polyfit(np.log(data[good, 0]), np.log(data[good, 1]), 1)
    bound = sd.delta0 * (nu + 1) - sd.delta1
    return {"samples": rows, "exponent": float(e), "bound": float(bound), "passed": bool(e >= bound - 0.2)}
