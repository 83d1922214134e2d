"""Command-line front end: ``holorealize <command> [options]``.

Every command writes one JSON document (to ``--out`` or stdout) with a
``manifest`` entry describing the run; short human-readable summaries go to
stderr. Exit codes: 0 verdict as expected, 1 I/O or validation error,
2 verdict contrary to expectation, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import logging
import math
import os
import platform
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
import scipy

from . import __version__
from .corpus import generate_case
from .errors import (
    HoloRealizeError,
    LeftDomain,
    NonFiniteCoefficient,
    Obstructed,
    PreconditionError,
    StepUnderflow,
    StructuralError,
)
from .holonomy import contraction_report, holonomy_jet
from .jets import DiffeoJet, Jet
from .normalform import check_negative_resonances, diffeo_normal_form, gauge_divisors, gauge_linearize_system
from .realize import realize
from .saddle import GradedField, SaddleSystem
from .spectral import (
    ResonanceClass,
    analyze_matrix,
    enumerate_resonances,
    exp_2pii,
    matrix_from_json,
    negative_resonance_degree_bound,
)
from .tolerances import ODE_RTOL, TAU_COEFF, TAU_INT

EXIT_OK, EXIT_INPUT, EXIT_CONTRARY, EXIT_NUMERIC = 0, 1, 2, 3
ROUND_TRIP_THRESHOLD = 1e-6

# the obstructed example: A = diag(-3/2, -1/4), h = (-y1 + y2^2, -i y2)
EXAMPLE_MU = (Fraction(-3, 2), Fraction(-1, 4))
EXAMPLE_MU_FLOAT = [float(m) for m in EXAMPLE_MU]
DIVISOR_KMAX = 20


class Contrary(Exception):
    """The command finished but its verdict is not the expected one."""

    def __init__(self, report: dict):
        super().__init__(report.get("verdict", "unexpected verdict"))
        self.report = report


@dataclass
class RunManifest:
    command: str
    inputs: dict  # path -> sha256 of the file contents
    tolerances: dict
    seed: int
    versions: dict
    wall_time: float = 0.0
    options: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return asdict(self)


def _versions() -> dict:
    return {
        "holorealize": __version__,
        "python": platform.python_version(),
        "numpy": np.__version__,
        "scipy": scipy.__version__,
    }


def _digest(path: str) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _load(path: str, manifest: RunManifest) -> dict:
    manifest.inputs[str(path)] = _digest(path)
    with open(path) as fh:
        return json.load(fh)


def _json_default(obj):
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, (complex, np.complexfloating)):
        return [float(obj.real), float(obj.imag)]
    if isinstance(obj, Fraction):
        return str(obj)
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _emit(report: dict, manifest: RunManifest, out: str | None) -> None:
    doc = dict(report, manifest=manifest.to_json())
    text = json.dumps(doc, indent=2, sort_keys=True, default=_json_default)
    if out:
        Path(out).write_text(text + "\n")
    else:
        sys.stdout.write(text + "\n")


def _note(msg: str) -> None:
    print(msg, file=sys.stderr)


def _pair(c) -> list:
    c = complex(c)
    return [c.real, c.imag]


def _parse_complex(text: str) -> complex:
    parts = [float(p) for p in text.split(",")]
    if len(parts) == 1:
        return complex(parts[0])
    if len(parts) == 2:
        return complex(parts[0], parts[1])
    raise argparse.ArgumentTypeError(f"expected 're' or 're,im', got {text!r}")


def _system_from(data: dict) -> SaddleSystem:
    """Accepts a SaddleSystem document or a realization certificate."""
    return SaddleSystem.from_json(data["system"] if "system" in data else data)


def _tolerances(args) -> dict:
    return {"coeff": args.tol_coeff, "int": args.tol_int, "ode_rtol": args.tol_ode, "ode_atol": args.tol_ode / 1000}


# ---------------------------------------------------------------- commands


def cmd_analyze(args, manifest):
    A = matrix_from_json(_load(args.matrix, manifest))
    sd = analyze_matrix(A, eps_request=args.eps)
    degree = args.max_degree or max(2, negative_resonance_degree_bound(sd))
    res = enumerate_resonances(sd, degree, tol=args.tol_int)
    negative = [r for r in res if r.cls is ResonanceClass.NEGATIVE_INTEGER]
    _note(f"mu = {[_pair(m) for m in sd.mu]}, delta0 = {sd.delta0:.6g}, delta1 = {sd.delta1:.6g}, eps = {sd.eps:.3g}")
    _note(f"{len(negative)} negative resonances up to degree {degree}")
    return {
        "spectral": sd.to_json(),
        "resonance_degree": degree,
        "resonances": [r.to_json() for r in res if r.cls.is_integer],
    }


def cmd_normalform(args, manifest):
    data = _load(args.input, manifest)
    A = matrix_from_json(data["A"])
    f = DiffeoJet.from_json(data["f"])
    order = int(data.get("order", f.order))
    sd = analyze_matrix(A)
    nf = diffeo_normal_form(f.with_order(max(order, f.order)).truncate(order), sd, order, tol_int=args.tol_int, tol_coeff=args.tol_coeff)
    verdict = check_negative_resonances(nf, sd, args.tol_coeff)
    _note(f"removed {len(nf.removed)} monomials, kept {len(nf.kept)}; {verdict.name}")
    return dict(nf.to_json(), verdict=verdict.to_json())


def _realize_report(h, A, args, nu=None, nu_override=None) -> dict:
    cert = realize(h, A, nu=nu, nu_override=nu_override, tol_coeff=args.tol_coeff, tol_int=args.tol_int)
    return cert.to_json()


def cmd_realize(args, manifest):
    A = matrix_from_json(_load(args.matrix, manifest))
    h = DiffeoJet.from_json(_load(args.diffeo, manifest))
    try:
        report = _realize_report(h, A, args, nu=args.nu, nu_override=args.nu_override)
    except Obstructed as err:
        report = {"verdict": _obstruction_json(err)}
        if args.expect == "realizable":
            _note("Obstructed: negative resonances present")
            raise Contrary(report) from err
        return report
    _note(f"Realizable at nu = {report['nu']}")
    if args.expect == "obstructed":
        raise Contrary(report)
    return report


def _obstruction_json(err: Obstructed) -> dict:
    return {
        "verdict": "Obstructed",
        "obstructions": [{"j": list(j), "k": k + 1, "R": _pair(R), "coeff": _pair(c)} for j, k, R, c in err.obstructions],
    }


def cmd_holonomy(args, manifest):
    system = _system_from(_load(args.system, manifest))
    hol = holonomy_jet(system, nu=args.nu, x0=args.x0, rtol=args.tol, atol=args.tol / 1000, orientation=args.orientation)
    _note(f"holonomy jet of order {hol.jet.order}: {hol.steps} steps, {hol.nfev} evaluations")
    return hol.to_json()


def _round_trip(system: SaddleSystem, h: DiffeoJet, rtol: float) -> dict:
    hol = holonomy_jet(system, nu=h.order, rtol=rtol, atol=rtol / 1000)
    err = hol.jet.distance(h)
    return {"max_coefficient_error": err, "nu": h.order, "steps": hol.steps, "nfev": hol.nfev}


def _verify_case(seed: int, rtol: float) -> dict:
    case = generate_case(seed)
    cert = realize(case.h, case.A, nu=case.nu)
    # only the system and h cross over to the check, as they would through JSON
    system = SaddleSystem.from_json(cert.system.to_json())
    return dict(_round_trip(system, DiffeoJet.from_json(case.h.to_json()), rtol), case=case.name)


def cmd_verify(args, manifest):
    if args.cert:
        data = _load(args.cert, manifest)
        system = SaddleSystem.from_json(data["system"])
        h = DiffeoJet.from_json(data["h"])
        report = _round_trip(system, h, args.tol_ode)
        worst = report["max_coefficient_error"]
        report["cases"] = 1
    else:
        root = np.random.SeedSequence(args.seed)
        seeds = [int(s.generate_state(1)[0]) for s in root.spawn(args.corpus)]
        if args.jobs > 1:
            with ProcessPoolExecutor(args.jobs) as pool:
                rows = list(pool.map(_verify_case, seeds, [args.tol_ode] * len(seeds)))
        else:
            rows = [_verify_case(s, args.tol_ode) for s in seeds]
        worst = max(r["max_coefficient_error"] for r in rows)
        report = {"cases": len(rows), "max_coefficient_error": worst, "per_case": rows}
    report["threshold"] = args.threshold
    report["passed"] = worst <= args.threshold
    print(f"max coefficient error: {worst:.3e}", file=sys.stderr)
    if not report["passed"]:
        raise Contrary(report)
    return report


def cmd_contraction(args, manifest):
    system = _system_from(_load(args.system, manifest))
    sdj = _load(args.spectral, manifest)
    sdj = sdj.get("spectral", sdj)
    sd = analyze_matrix(matrix_from_json(sdj["A"]), eps_request=float(sdj.get("eps", 1e-2)))
    rep = contraction_report(system, sd, pairs=args.pairs, seed=args.seed, rtol=args.tol_ode, atol=args.tol_ode / 1000)
    _note(f"fitted exponent {rep.exponent:.4f} in [{sd.delta0:.4f}, {sd.delta1:.4f}] +- {rep.slack}: {rep.passed}")
    report = rep.to_json()
    if not rep.passed:
        raise Contrary(report)
    return report


def example_data(shift: int = 0, order: int = 4):
    """``(h, A)`` of the obstructed example, with ``A`` shifted by ``-shift I``."""
    h = DiffeoJet(
        [
            Jet.from_terms(2, order, {(1, 0): -1, (0, 2): 1}),
            Jet.from_terms(2, order, {(0, 1): -1j}),
        ]
    )
    A = np.diag(EXAMPLE_MU_FLOAT) - shift * np.eye(2)
    return h, A


def divisor_tables(kmax: int = DIVISOR_KMAX) -> dict:
    """Gauge divisors ``R_{(m, j); k}`` of the degree-2 monomials, per component."""
    mu = EXAMPLE_MU_FLOAT
    tables: dict[int, dict] = {}
    for (m, j), k, R in gauge_divisors(mu, {2}, kmax):
        row = tables.setdefault(k + 1, {})
        row.setdefault(str(list(j)), []).append(R.real)
    out = {}
    for comp, row in tables.items():
        values = [v for vals in row.values() for v in vals]
        out[str(comp)] = {
            "by_exponent": row,
            "base_values": sorted({vals[0] for vals in row.values()}),
            "min_abs": min(abs(v) for v in values),
            "all_nonzero": all(abs(v) > TAU_INT for v in values),
        }
    return out


def _gauge_sample() -> dict:
    """Gauge away the degree-2 terms of a system with the example's linear part."""
    A = np.diag(EXAMPLE_MU_FLOAT)
    G = GradedField.from_terms(2, 3, 2, [(0, (0, 2), 0, 1.0), (1, (1, 1), 1, 0.5), (2, (2, 0), 0, -0.25)])
    res = gauge_linearize_system(SaddleSystem(A, G), EXAMPLE_MU_FLOAT, degrees={2}, kmax=DIVISOR_KMAX)
    left = max((abs(c) for m, e, k, c in res.transformed.G.terms() if sum(e) == 2), default=0.0)
    smallest = min(abs(R) for _, _, R in res.solved)
    return {"targets": len(res.solved), "smallest_divisor": smallest, "degree2_residual": left}


def cmd_counterexample(args, manifest):
    shift = args.shift
    h, A = example_data(shift)
    # shifting A by -m I moves R_{(0,2);1} from -1 to -1 + m
    expected = "Obstructed" if shift < 1 else "Realizable"
    report = {
        "shift": shift,
        "A": [[_pair(v) for v in row] for row in A],
        "expected": expected,
        "divisor_tables": divisor_tables(),
        "gauge_sample": _gauge_sample(),
    }
    try:
        cert = realize(h, A, nu_override=args.nu, tol_coeff=args.tol_coeff, tol_int=args.tol_int)
    except Obstructed as err:
        report["verdict"] = "Obstructed"
        report["obstructions"] = _obstruction_json(err)["obstructions"]
        for j, k, R, c in err.obstructions:
            _note(f"negative resonance (j={list(j)}; k={k + 1}) R = {R.real:+.6g} coefficient {_pair(c)}")
        single = len(err.obstructions) == 1
        j, k, R, _ = err.obstructions[0]
        report["reproduced"] = single and tuple(j) == (0, 2) and k == 0 and round(R.real) == -1 + shift
    else:
        hol = holonomy_jet(cert.system, rtol=args.tol_ode, atol=args.tol_ode / 1000)
        report["verdict"] = "Realizable"
        report["nu"] = cert.nu
        report["holonomy_linear_error"] = float(np.abs(hol.jet.linear_part() - exp_2pii(cert.sd)).max())
        report["round_trip_error"] = hol.jet.distance(h.with_order(max(h.order, cert.nu)).truncate(cert.nu))
        report["reproduced"] = True
        _note(f"Realizable at nu = {cert.nu}, round-trip error {report['round_trip_error']:.2e}")
    if report["verdict"] != expected or not report["reproduced"]:
        raise Contrary(report)
    return report


def golden_mu() -> float:
    return -(3 - math.sqrt(5)) / 2


def demo_data(a_coeffs, mu1: float, mu2: int, order: int):
    """``f(y1, y2) = (lambda y1, y2 + a(y1))`` with ``lambda = exp(2 pi i mu1)``."""
    lam = np.exp(2j * np.pi * mu1)
    a = {(d, 0): c for d, c in enumerate(a_coeffs) if d >= 2 and d <= order and c != 0}
    f = DiffeoJet([Jet.from_terms(2, order, {(1, 0): lam}), Jet.from_terms(2, order, {(0, 1): 1, **a})])
    return f, np.diag([mu1, float(mu2)])


def cmd_demo_linearizable(args, manifest):
    if args.mu2 >= 0:
        raise PreconditionError("mu2 must be a negative integer")
    f, A = demo_data(args.a, args.mu1, args.mu2, args.nu)
    cert = realize(f, A, nu_override=args.nu, tol_coeff=args.tol_coeff, tol_int=args.tol_int)
    hol = holonomy_jet(cert.system, rtol=args.tol_ode, atol=args.tol_ode / 1000)
    err = hol.jet.distance(f)
    report = {
        "verdict": cert.verdict.name,
        "round_trip_error": err,
        "threshold": ROUND_TRIP_THRESHOLD,
        "normal_form_nonlinear": float(np.abs(cert.nf.normal.coeff_array()[:, 3:]).max(initial=0)),
        "certificate": cert.to_json(),
    }
    _note(f"{cert.verdict.name} at nu = {cert.nu}, round-trip error {err:.2e}")
    if err > ROUND_TRIP_THRESHOLD:
        raise Contrary(report)
    return report


# ------------------------------------------------------------------ parser


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    def d(value):
        return argparse.SUPPRESS if suppress else value

    g = p.add_argument_group("global options")
    g.add_argument("--tol-coeff", type=float, default=d(TAU_COEFF), help="coefficient tolerance")
    g.add_argument("--tol-int", type=float, default=d(TAU_INT), help="integrality tolerance for resonances")
    g.add_argument("--tol-ode", type=float, default=d(ODE_RTOL), help="ODE relative tolerance (absolute is 1/1000 of it)")
    g.add_argument("--seed", type=int, default=d(0), help="seed for corpus generation and sampling")
    g.add_argument("--jobs", type=int, default=d(1), help="worker processes for corpus verification")
    g.add_argument("--out", default=d(None), help="write the JSON result here instead of stdout")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holorealize", description="Realize diffeomorphism jets as saddle holonomies.")
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)

    def command(name, func, help):
        p = sub.add_parser(name, help=help)
        _add_globals(p, suppress=True)
        p.set_defaults(func=func)
        return p

    p = command("analyze", cmd_analyze, "spectral data and integer resonances of A")
    p.add_argument("--matrix", required=True)
    p.add_argument("--eps", type=float, default=1e-2, help="requested scale of the nilpotent part")
    p.add_argument("--max-degree", type=int, default=None)

    p = command("normalform", cmd_normalform, "formal normal form of f with respect to A")
    p.add_argument("--input", required=True, help='JSON {"A": matrix, "f": diffeo jet, "order": nu}')

    p = command("realize", cmd_realize, "build a saddle system realizing h")
    p.add_argument("--matrix", required=True)
    p.add_argument("--diffeo", required=True)
    p.add_argument("--nu", type=int, default=None, help="requested jet order (raised to the admissible minimum)")
    p.add_argument("--nu-override", type=int, default=None, help="jet order used as given")
    p.add_argument("--expect", choices=["realizable", "obstructed"], default="realizable")

    p = command("holonomy", cmd_holonomy, "integrate the holonomy jet of a system")
    p.add_argument("--system", required=True, help="SaddleSystem JSON or a certificate")
    p.add_argument("--nu", type=int, default=None)
    p.add_argument("--x0", type=_parse_complex, default=1.0, help="base point re[,im] on the unit circle")
    p.add_argument("--tol", type=float, default=ODE_RTOL)
    p.add_argument("--orientation", type=int, choices=[1, -1], default=1)

    p = command("verify", cmd_verify, "holonomy round trip of a certificate or of a generated corpus")
    src = p.add_mutually_exclusive_group(required=True)
    src.add_argument("--cert")
    src.add_argument("--corpus", type=int, help="number of generated cases")
    p.add_argument("--threshold", type=float, default=ROUND_TRIP_THRESHOLD)

    p = command("contraction", cmd_contraction, "fit the transport contraction exponent")
    p.add_argument("--system", required=True)
    p.add_argument("--spectral", required=True, help="output of analyze, or spectral data JSON")
    p.add_argument("--pairs", type=int, default=10)

    p = command("counterexample", cmd_counterexample, "reproduce the obstructed example")
    p.add_argument("--shift", type=int, default=0, help="use A - shift I")
    p.add_argument("--nu", type=int, default=None, help="jet order used as given")

    p = command("demo-linearizable", cmd_demo_linearizable, "realize (lambda y1, y2 + a(y1))")
    p.add_argument("--a", type=lambda s: [complex(v) for v in s.split(",")], default=[0, 0, 1], help="coefficients a_0,a_1,a_2,...")
    p.add_argument("--mu1", type=float, default=golden_mu())
    p.add_argument("--mu2", type=int, default=-1)
    p.add_argument("--nu", type=int, default=4)
    return parser


def main(argv=None) -> int:
    logging.basicConfig(level=os.environ.get("HOLOREALIZE_LOG", "WARNING").upper(), stream=sys.stderr)
    parser = build_parser()
    args = parser.parse_args(argv)
    manifest = RunManifest(
        command=args.command,
        inputs={},
        tolerances=_tolerances(args),
        seed=args.seed,
        versions=_versions(),
        options={k: v for k, v in vars(args).items() if k not in ("func", "command", "out")},
    )
    start = time.perf_counter()
    code = EXIT_OK
    try:
        report = args.func(args, manifest)
    except Contrary as err:
        report, code = err.report, EXIT_CONTRARY
    except (OSError, json.JSONDecodeError, KeyError, TypeError, StructuralError, PreconditionError) as err:
        _note(f"error: {type(err).__name__}: {err}")
        return EXIT_INPUT
    except (StepUnderflow, NonFiniteCoefficient, LeftDomain, HoloRealizeError, FloatingPointError) as err:
        _note(f"numerical failure: {type(err).__name__}: {err}")
        return EXIT_NUMERIC
    manifest.wall_time = time.perf_counter() - start
    try:
        _emit(report, manifest, args.out)
    except OSError as err:
        _note(f"error: {err}")
        return EXIT_INPUT
    return code


if __name__ == "__main__":
    sys.exit(main())
