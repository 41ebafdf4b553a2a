"""Command-line front end.

Problem specifications are JSON files with polynomials written as expression
strings over the declared variables::

    {
      "name": "example1",
      "mode": "doa",                      # doa | safe-stabilization | check | simulate
      "variables": ["x1", "x2"],
      "f": ["x2", "-x1 - x2 + x1^3"],
      "g": [["0"], ["1"]],                # control-affine input matrix, n rows
      "V": "x1^2 + x1*x2 + x2^2",
      "unsafe": ["(x1 - 3)^2 + (x2 - 1)^2 - 1"],
      "options": {"gamma": 1.0, "cert_degree": 4, "seed": 0},
      "verify": {"samples": 100000, "volume_samples": 1000000},
      "region": {"box": [[-3, 3], [-3, 3]], "resolution": 200},
      "certificate": {"h": "...", "u": ["..."], "c_star": 1.0},
      "simulate": {"x0": [[0.5, 0.0]], "T": 10.0, "dt": 0.01, "controller": "polynomial"}
    }

Exit codes: 0 verified, 2 synthesized (or simulated) but a check failed, 1 error.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import templates
from .certify import (
    CertificateResult,
    DoaProblem,
    InvalidProblemError,
    SafeStabilizationProblem,
    SynthesisError,
    SynthesisOptions,
    expand_doa,
    synthesize_safe_region,
)
from .polynomial import ParseError, Polynomial, PolyVectorField, VariableSet, parse
from .sdp import SolverOptions
from .verify import (
    Check,
    DomainBoxError,
    VerificationReport,
    qp_controller_batch,
    horizon,
    polynomial_controller,
    region_box,
    simulate_batch,
    union_box,
    verify_result,
)

logger = logging.getLogger("pbcert")

EXIT_OK, EXIT_ERROR, EXIT_FAILED = 0, 1, 2
MODES = ("doa", "safe-stabilization", "check", "simulate")
CERTIFICATE_FORMAT = "pbcert-certificate/1"
REPORT_FORMAT = "pbcert-report/1"

TOP_KEYS = {"name", "mode", "variables", "f", "g", "V", "unsafe", "options", "verify", "region",
            "certificate", "simulate", "description"}
OPTION_KEYS = {"gamma", "cert_degree", "multiplier_degree", "controller_degree", "coeff_bound",
               "containment_degrees", "max_iters", "rel_tol", "trace_bound", "bisection_tol", "bracket_start",
               "bracket_cap", "backend", "sdp_feastol", "sdp_gaptol", "sdp_max_iters", "seed"}
VERIFY_DEFAULTS = {"samples": 100_000, "trajectories": 100, "volume_samples": 1_000_000, "qp_samples": 10_000,
                   "dt": 0.01, "horizon": None}
REGION_KEYS = {"box", "resolution"}
SIMULATE_KEYS = {"x0", "T", "dt", "controller"}
CONTROLLERS = ("polynomial", "qp", "none")


class SpecError(ValueError):
    """Invalid problem specification; the message carries file and line context."""


class RegionError(ValueError):
    pass


# -- specification ------------------------------------------------------------


def _line_of(text: str | None, needle: str) -> int | None:
    if not text:
        return None
    pos = text.find(json.dumps(needle))
    return None if pos < 0 else text.count("\n", 0, pos) + 1


@dataclass
class ProblemSpec:
    name: str
    mode: str
    vars: VariableSet
    field: PolyVectorField
    V: Polynomial | None
    unsafe: list[Polynomial] = field(default_factory=list)
    options: dict = field(default_factory=dict)
    verify: dict = field(default_factory=lambda: dict(VERIFY_DEFAULTS))
    region: dict = field(default_factory=dict)
    certificate: dict | None = None
    simulate: dict | None = None
    source: str = "<spec>"

    @property
    def seed(self) -> int:
        return int(self.options.get("seed", 0))

    @property
    def gamma(self) -> float:
        return float(self.options.get("gamma", 1.0))

    @classmethod
    def load(cls, path: str | Path) -> "ProblemSpec":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise SpecError(f"{path}: cannot read spec ({exc.strerror})") from None
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise SpecError(f"{path}:{exc.lineno}:{exc.colno}: invalid JSON: {exc.msg}") from None
        return cls.from_dict(data, source=str(path), text=text)

    @classmethod
    def from_dict(cls, data: dict, source: str = "<spec>", text: str | None = None) -> "ProblemSpec":
        def fail(msg, needle=None):
            line = _line_of(text, needle) if needle is not None else None
            where = f"{source}:{line}" if line else source
            raise SpecError(f"{where}: {msg}")

        if not isinstance(data, dict):
            fail("top level must be a JSON object")
        unknown = set(data) - TOP_KEYS
        if unknown:
            fail(f"unknown keys {sorted(unknown)}", sorted(unknown)[0])
        for key in ("variables", "f"):
            if key not in data:
                fail(f"missing required key {key!r}")
        mode = data.get("mode", "doa")
        if mode not in MODES:
            fail(f"mode must be one of {MODES}, got {mode!r}", "mode")
        try:
            vars = VariableSet(tuple(data["variables"]))
        except (TypeError, ValueError) as exc:
            fail(f"variables: {exc}", "variables")

        def poly(s, what):
            if not isinstance(s, str):
                fail(f"{what} must be an expression string", what.split("[")[0])
            try:
                return parse(s, vars)
            except ParseError as exc:
                fail(f"{what}: {exc}\n    {s}\n    {' ' * exc.position}^", s)
            except ValueError as exc:
                fail(f"{what}: {exc}", s)

        f_raw = data["f"]
        if not isinstance(f_raw, list) or len(f_raw) != vars.n:
            fail(f"f must list {vars.n} components, one per variable", "f")
        f = tuple(poly(s, f"f[{i}]") for i, s in enumerate(f_raw))

        g = None
        g_raw = data.get("g")
        unsafe_raw = data.get("unsafe") or []
        if mode == "doa":
            if g_raw is not None:
                logger.warning("mode=doa: ignoring the input matrix g")
                g_raw = None
            if unsafe_raw:
                logger.warning("mode=doa: ignoring %d unsafe set(s)", len(unsafe_raw))
                unsafe_raw = []
        if g_raw is not None:
            if not isinstance(g_raw, list) or len(g_raw) != vars.n or not all(isinstance(r, list) for r in g_raw):
                fail(f"g must be a list of {vars.n} rows", "g")
            widths = {len(r) for r in g_raw}
            if len(widths) != 1 or 0 in widths:
                fail("g rows must all have the same positive length", "g")
            g = tuple(tuple(poly(s, f"g[{i}][{j}]") for j, s in enumerate(r)) for i, r in enumerate(g_raw))
        if mode == "safe-stabilization" and g is None:
            fail("mode=safe-stabilization requires an input matrix g", "mode")
        if not isinstance(unsafe_raw, list):
            fail("unsafe must be a list of expression strings", "unsafe")
        unsafe = [poly(s, f"unsafe[{i}]") for i, s in enumerate(unsafe_raw)]
        if mode == "safe-stabilization" and not unsafe:
            logger.warning("mode=safe-stabilization without unsafe sets")

        V = None
        if "V" in data:
            V = poly(data["V"], "V")
        elif mode != "simulate":
            fail("missing required key 'V'")

        options = data.get("options") or {}
        bad = set(options) - OPTION_KEYS
        if bad:
            fail(f"unknown options {sorted(bad)}", sorted(bad)[0])
        verify = dict(VERIFY_DEFAULTS)
        vraw = data.get("verify") or {}
        bad = set(vraw) - set(VERIFY_DEFAULTS)
        if bad:
            fail(f"unknown verify settings {sorted(bad)}", sorted(bad)[0])
        verify.update(vraw)
        region = data.get("region") or {}
        bad = set(region) - REGION_KEYS
        if bad:
            fail(f"unknown region settings {sorted(bad)}", sorted(bad)[0])

        cert = data.get("certificate")
        if cert is not None:
            cert = _parse_certificate(cert, vars, poly)
        if mode == "check":
            if cert is None:
                fail("mode=check requires a certificate with h", "mode")
            if g is not None and cert.get("u") is None:
                fail("checking a controlled system requires the controller u in the certificate", "certificate")
        if cert is not None and cert.get("u") is not None:
            if g is None:
                fail("certificate has a controller u but the system has no input matrix g", "u")
            if len(cert["u"]) != len(g[0]):
                fail(f"controller u needs {len(g[0])} components", "u")

        sim = data.get("simulate")
        if sim is not None:
            bad = set(sim) - SIMULATE_KEYS
            if bad:
                fail(f"unknown simulate settings {sorted(bad)}", sorted(bad)[0])
            sim = dict(sim)
            x0 = np.atleast_2d(np.asarray(sim.get("x0", []), dtype=float))
            if x0.size == 0 or x0.shape[1] != vars.n:
                fail(f"simulate.x0 must hold initial states of length {vars.n}", "x0")
            sim["x0"] = x0.tolist()
            if sim.get("controller", "polynomial") not in CONTROLLERS:
                fail(f"simulate.controller must be one of {CONTROLLERS}", "controller")
        if mode == "simulate" and sim is None:
            fail("mode=simulate requires a simulate section with x0", "mode")

        return cls(
            name=str(data.get("name", Path(source).stem)), mode=mode, vars=vars, field=PolyVectorField(f, g),
            V=V, unsafe=unsafe, options=dict(options), verify=verify, region=dict(region), certificate=cert,
            simulate=sim, source=source,
        )

    def with_overrides(self, **kw) -> "ProblemSpec":
        for key, value in kw.items():
            if value is not None:
                self.options[key] = value
        return self


def _parse_certificate(cert: dict, vars: VariableSet, poly) -> dict:
    if not isinstance(cert, dict) or "h" not in cert:
        raise SpecError("certificate must be an object with at least 'h'")
    if "variables" in cert and tuple(cert["variables"]) != vars.names:
        raise SpecError(f"certificate variables {cert['variables']} differ from the spec's {list(vars.names)}")
    out = {"h": poly(cert["h"], "certificate.h")}
    if cert.get("u") is not None:
        out["u"] = [poly(s, f"certificate.u[{i}]") for i, s in enumerate(cert["u"])]
    if cert.get("c_star") is not None:
        out["c_star"] = float(cert["c_star"])
    return out


def load_certificate(path: str | Path, spec: ProblemSpec) -> dict:
    """Read a certificate file written by ``run`` and parse it over the spec's variables."""
    data = json.loads(Path(path).read_text())

    def poly(s, what):
        try:
            return parse(s, spec.vars)
        except ValueError as exc:
            raise SpecError(f"{path}: {what}: {exc}") from None

    return _parse_certificate(data, spec.vars, poly)


# -- synthesis and verification ---------------------------------------------


def synthesis_options(options: dict) -> SynthesisOptions:
    solver_kw = {k[4:]: options[k] for k in ("sdp_feastol", "sdp_gaptol", "sdp_max_iters") if k in options}
    solver = SolverOptions.from_env(**solver_kw)
    kw = {k: options[k] for k in ("max_iters", "rel_tol", "trace_bound", "bisection_tol", "bracket_start",
                                  "bracket_cap", "backend") if k in options}
    return SynthesisOptions(solver=solver, **kw)


def _verify_kwargs(spec: ProblemSpec) -> dict:
    v = spec.verify
    return {"n_samples": int(v["samples"]), "n_trajectories": int(v["trajectories"]),
            "n_volume": int(v["volume_samples"]), "n_qp": int(v["qp_samples"]), "seed": spec.seed,
            "dt": float(v["dt"]), "T": None if v["horizon"] is None else float(v["horizon"])}


def synthesize(spec: ProblemSpec) -> CertificateResult:
    o = spec.options
    opts = synthesis_options(o)
    if spec.mode == "doa":
        prob = DoaProblem(spec.field.drift(), spec.V, spec.gamma, o.get("cert_degree"), o.get("multiplier_degree"),
                          opts)
        return expand_doa(prob, verify=True, verify_kwargs=_verify_kwargs(spec))
    prob = SafeStabilizationProblem(
        spec.field, spec.V, spec.unsafe, spec.gamma, o.get("cert_degree"), o.get("controller_degree"),
        float(o.get("coeff_bound", 100.0)), o.get("multiplier_degree"), o.get("containment_degrees"), opts)
    return synthesize_safe_region(prob, verify=True, verify_kwargs=_verify_kwargs(spec))


@dataclass
class _Candidate:
    h: Polynomial
    V: Polynomial
    u: list[Polynomial] | None = None
    c_star: float | None = None

    @property
    def h_initial(self) -> Polynomial | None:
        if self.c_star is None:
            return None
        return Polynomial.constant(self.c_star, self.V.vars) - self.V


def check_certificate(spec: ProblemSpec, cert: dict) -> VerificationReport:
    cand = _Candidate(cert["h"], spec.V, cert.get("u"), cert.get("c_star"))
    try:
        region_box(cand.h)
    except DomainBoxError as exc:
        # an unbounded candidate is a failed certificate, not a usage error
        report = VerificationReport()
        report.checks.append(Check("bounded_region", 0, float("-inf"), 0.0, False))
        report.info["error"] = str(exc)
        return report
    return verify_result(cand, spec.field, spec.gamma, unsafe=spec.unsafe, **_verify_kwargs(spec))


# -- serialization ------------------------------------------------------------


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to strings."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        x = float(obj)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        return x
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def _pstr(p: Polynomial | None):
    return None if p is None else p.to_string()


def certificate_dict(spec: ProblemSpec, result: CertificateResult) -> dict:
    """Everything needed to reuse or audit a certificate; contains no timings."""
    settings = dict(result.settings)
    settings["seed"] = spec.seed
    settings["verify"] = dict(spec.verify)
    return _clean({
        "format": CERTIFICATE_FORMAT,
        "name": spec.name,
        "mode": spec.mode,
        "variables": list(spec.vars.names),
        "f": [p.to_string() for p in spec.field.f],
        "g": None if spec.field.g is None else [[p.to_string() for p in row] for row in spec.field.g],
        "V": result.V.to_string(),
        "unsafe": [q.to_string() for q in spec.unsafe],
        "c_star": result.c_star,
        "h": result.h.to_string(),
        "u": None if result.u is None else [p.to_string() for p in result.u],
        "J": None if result.J is None else [p.to_string() for p in result.J],
        "L1": _pstr(result.L1),
        "L2": _pstr(result.L2),
        "step1_multiplier": _pstr(result.step1_multiplier),
        "gram": {"basis": [list(m) for m in result.gram.basis.entries], "Q": result.gram.Q.tolist()},
        "trace_history": list(result.trace_history),
        "trace_saturated": result.trace_saturated,
        "iterations": [{"iteration": r.iteration, "epsilon": r.epsilon, "trace": r.trace, "accepted": r.accepted,
                        "saturated": r.saturated, "status": r.status} for r in result.iterations],
        "settings": settings,
    })


def report_dict(spec: ProblemSpec, report: VerificationReport, result: CertificateResult | None = None) -> dict:
    out = {"format": REPORT_FORMAT, "name": spec.name, "mode": spec.mode, **report.to_dict()}
    if result is not None:
        out["timings"] = {"iterations": [r.seconds for r in result.iterations]}
    return _clean(out)


def _write_json(path: Path, data: dict):
    path.write_text(json.dumps(data, indent=2) + "\n")


# -- region grid -----------------------------------------------------------------


def export_region(h: Polynomial, V: Polynomial | None, unsafe: Sequence[Polynomial], box, resolution: int):
    """Regular grid over ``box``; returns ``(header, rows)`` with columns x.., h, V, q1..qM."""
    n = h.n
    if n > 3:
        raise RegionError(f"region export supports at most 3 variables, got {n}; "
                          "substitute fixed values for the extra variables to export a slice")
    if int(resolution) < 2:
        raise RegionError("resolution must be at least 2 per axis")
    box = np.asarray(box, dtype=float)
    if box.shape != (n, 2) or np.any(box[:, 1] <= box[:, 0]):
        raise RegionError(f"box must be {n} increasing [lo, hi] pairs")
    axes = [np.linspace(lo, hi, int(resolution)) for lo, hi in box]
    X = np.stack([a.ravel() for a in np.meshgrid(*axes, indexing="ij")], axis=1)
    cols = [X, h.evaluate(X)[:, None]]
    header = list(h.vars.names) + ["h"]
    if V is not None:
        cols.append(V.evaluate(X)[:, None])
        header.append("V")
    for i, q in enumerate(unsafe):
        cols.append(q.evaluate(X)[:, None])
        header.append(f"q{i + 1}")
    return header, np.hstack(cols)


def write_region_csv(path: Path, header: list[str], rows: np.ndarray):
    np.savetxt(path, rows, delimiter=",", header=",".join(header), comments="", fmt="%.12g")


def _region_box(spec: ProblemSpec, h: Polynomial, c_star: float | None):
    if spec.region.get("box") is not None:
        return np.asarray(spec.region["box"], dtype=float)
    box = region_box(h)
    if c_star is not None and spec.V is not None:
        box = union_box(box, region_box(Polynomial.constant(c_star, spec.vars) - spec.V))
    return box


def _default_resolution(n: int) -> int:
    return 200 if n <= 2 else 40


def _export_for(spec: ProblemSpec, h: Polynomial, c_star: float | None, out: Path, resolution: int | None = None):
    if spec.vars.n > 3:
        logger.warning("skipping region.csv: %d variables (at most 3 supported)", spec.vars.n)
        return None
    res = resolution or spec.region.get("resolution") or _default_resolution(spec.vars.n)
    header, rows = export_region(h, spec.V, spec.unsafe, _region_box(spec, h, c_star), res)
    write_region_csv(out, header, rows)
    return out


# -- simulation ---------------------------------------------------------------------


def run_simulation(spec: ProblemSpec, cert: dict | None, x0=None, T=None, dt=None, controller=None):
    """Integrate from each initial state; returns ``(header, rows, diverged)``."""
    sim = dict(spec.simulate or {})
    X0 = np.atleast_2d(np.asarray(x0 if x0 is not None else sim.get("x0"), dtype=float))
    if X0.size == 0 or X0.shape[1] != spec.vars.n:
        raise SpecError(f"initial states must have length {spec.vars.n}")
    dt = float(dt or sim.get("dt") or spec.verify["dt"])
    kind = controller or sim.get("controller") or ("polynomial" if cert and cert.get("u") else "none")
    fieldv = spec.field
    if kind == "none" or fieldv.g is None:
        ctrl = None
    elif kind == "polynomial":
        if not cert or not cert.get("u"):
            raise SpecError("polynomial controller requested but no certificate u available")
        ctrl = polynomial_controller(cert["u"])
    elif kind == "qp":
        if not cert or spec.V is None:
            raise SpecError("QP controller needs a certificate h and a Lyapunov function V")
        h, V, gamma = cert["h"], spec.V, spec.gamma

        def ctrl(X):
            return qp_controller_batch(X, V, h, fieldv, gamma)[0]
    else:
        raise SpecError(f"unknown controller {kind!r}")
    if T is None:
        T = sim.get("T")
    if T is None:
        u = cert.get("u") if (cert and ctrl is not None) else None
        try:
            T = horizon(fieldv, u)
        except ValueError:
            T = 10.0
    times, states, div = simulate_batch(fieldv, X0, dt, float(T), ctrl)
    header = ["run", "t"] + list(spec.vars.names)
    parts = []
    for k in range(len(X0)):
        S = states[:, k, :]
        cols = [np.full((len(times), 1), k), times[:, None], S]
        if ctrl is not None:
            U = ctrl(S)
            cols.append(U)
        if cert:
            cols.append(cert["h"].evaluate(S)[:, None])
        if spec.V is not None:
            cols.append(spec.V.evaluate(S)[:, None])
        parts.append(np.hstack(cols))
    if ctrl is not None:
        header += [f"u{i + 1}" for i in range(fieldv.m)]
    if cert:
        header.append("h")
    if spec.V is not None:
        header.append("V")
    return header, np.vstack(parts), div


# -- verbs ---------------------------------------------------------------------------


def _out_dir(args) -> Path:
    out = Path(args.out or args.out_dir or "out")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_spec(args) -> ProblemSpec:
    spec = ProblemSpec.load(args.spec)
    return spec.with_overrides(gamma=getattr(args, "gamma", None), cert_degree=getattr(args, "cert_degree", None),
                               max_iters=getattr(args, "max_iters", None), seed=getattr(args, "seed", None))


def _summarize(report: VerificationReport, stream=None):
    stream = stream or sys.stdout
    for c in report.checks:
        flag = "PASS" if c.passed else "FAIL"
        print(f"  {flag} {c.name:<24} worst margin {c.worst_margin:.3e} (threshold {c.threshold:g}, "
              f"{c.samples} samples)", file=stream)
    for key, v in report.volumes.items():
        print(f"  volume[{key}] = {v.volume:.6g} +/- {v.stderr:.2g}", file=stream)


def cmd_run(args) -> int:
    spec = _load_spec(args)
    if spec.mode == "check":
        return _do_check(spec, spec.certificate, args)
    if spec.mode == "simulate":
        return _do_simulate(spec, spec.certificate, args)
    out = _out_dir(args)
    result = synthesize(spec)
    report = result.verification
    _write_json(out / "certificate.json", certificate_dict(spec, result))
    _write_json(out / "report.json", report_dict(spec, report, result))
    _export_for(spec, result.h, result.c_star, out / "region.csv")
    print(f"{spec.name}: c* = {result.c_star:.6f}, {len(result.iterations)} alternation step(s), "
          f"final trace {result.trace_history[-1]:.6g}")
    print(f"  h = {result.h.to_string(6)}")
    if result.u is not None:
        for i, p in enumerate(result.u):
            print(f"  u{i + 1} = {p.to_string(6)}")
    _summarize(report)
    print(f"wrote {out / 'certificate.json'}, {out / 'report.json'}")
    return EXIT_OK if report.passed else EXIT_FAILED


def _cert_from_args(spec: ProblemSpec, args) -> dict | None:
    path = getattr(args, "certificate", None)
    if path:
        return load_certificate(path, spec)
    return spec.certificate


def _do_check(spec: ProblemSpec, cert: dict | None, args) -> int:
    if cert is None:
        raise SpecError("no certificate: put one in the spec or pass --certificate")
    if spec.field.g is not None and cert.get("u") is None:
        raise SpecError("checking a controlled system requires the controller u")
    report = check_certificate(spec, cert)
    print(f"{spec.name}: checking h = {cert['h'].to_string(6)}")
    _summarize(report)
    if args.out or getattr(args, "out_dir", None):
        out = _out_dir(args)
        _write_json(out / "report.json", report_dict(spec, report))
        if "error" not in report.info:
            _export_for(spec, cert["h"], cert.get("c_star"), out / "region.csv")
    return EXIT_OK if report.passed else EXIT_FAILED


def cmd_check(args) -> int:
    spec = _load_spec(args)
    return _do_check(spec, _cert_from_args(spec, args), args)


def _do_simulate(spec: ProblemSpec, cert: dict | None, args) -> int:
    x0 = None
    if getattr(args, "x0", None):
        x0 = [[float(v) for v in s.split(",")] for s in args.x0]
    header, rows, div = run_simulation(spec, cert, x0, getattr(args, "T", None), getattr(args, "dt", None),
                                       getattr(args, "controller", None))
    out = _out_dir(args)
    write_region_csv(out / "trajectory.csv", header, rows)
    ok = not div.any()
    if cert is not None:
        ok &= bool(np.min(cert["h"].evaluate(rows[:, 2:2 + spec.vars.n])) >= -1e-4)
    final = rows[rows[:, 0] == rows[:, 0].max()][-1, 2:2 + spec.vars.n]
    print(f"{spec.name}: {int(rows[:, 0].max()) + 1} trajectory(ies), diverged {int(div.sum())}, "
          f"last final state norm {np.linalg.norm(final):.3e}; wrote {out / 'trajectory.csv'}")
    return EXIT_OK if ok else EXIT_FAILED


def cmd_simulate(args) -> int:
    spec = _load_spec(args)
    return _do_simulate(spec, _cert_from_args(spec, args), args)


def cmd_export_region(args) -> int:
    spec = _load_spec(args)
    cert = _cert_from_args(spec, args)
    if cert is None:
        raise SpecError("no certificate: put one in the spec or pass --certificate")
    if args.box:
        lo_hi = [float(v) for v in args.box.split(",")]
        if len(lo_hi) != 2 * spec.vars.n:
            raise RegionError(f"--box needs {2 * spec.vars.n} numbers lo1,hi1,lo2,hi2,...")
        spec.region["box"] = [lo_hi[i:i + 2] for i in range(0, len(lo_hi), 2)]
    out = Path(args.out or "region.csv")
    if out.suffix != ".csv":
        out.mkdir(parents=True, exist_ok=True)
        out = out / "region.csv"
    res = args.resolution or spec.region.get("resolution") or _default_resolution(spec.vars.n)
    header, rows = export_region(cert["h"], spec.V, spec.unsafe, _region_box(spec, cert["h"], cert.get("c_star")),
                                 res)
    write_region_csv(out, header, rows)
    print(f"wrote {len(rows)} rows to {out}")
    return EXIT_OK


def cmd_init(args) -> int:
    text = json.dumps(templates.template(args.template), indent=2) + "\n"
    if args.out:
        Path(args.out).write_text(text)
        print(f"wrote {args.out}")
    else:
        sys.stdout.write(text)
    return EXIT_OK


# -- entry point ---------------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    # usage errors share the generic error status; 2 means "verification failed"
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_ERROR, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pbcert", description="Maximum-volume barrier certificate synthesis.")
    parser.add_argument("-v", "--verbose", action="count", default=0, help="-v for progress, -vv for debug")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, out_help="output directory"):
        p.add_argument("spec", help="problem specification (JSON)")
        p.add_argument("--gamma", type=float, help="barrier decay rate")
        p.add_argument("--cert-degree", type=int, help="certificate degree (even)")
        p.add_argument("--max-iters", type=int, help="alternation iteration cap")
        p.add_argument("--seed", type=int, help="sampling seed for verification")
        p.add_argument("--out", help=out_help)

    p = sub.add_parser("run", help="synthesize and verify as the spec's mode says")
    common(p)
    p.add_argument("out_dir", nargs="?", help="output directory (same as --out)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("check", help="verify a given certificate without synthesis")
    common(p)
    p.add_argument("--certificate", help="certificate.json written by run (default: the spec's certificate)")
    p.set_defaults(func=cmd_check, out_dir=None)

    p = sub.add_parser("simulate", help="integrate closed-loop trajectories")
    common(p)
    p.add_argument("--certificate", help="certificate.json providing h and u")
    p.add_argument("--x0", action="append", help="initial state, e.g. --x0=-1,0.5; repeatable")
    p.add_argument("--T", type=float, help="horizon")
    p.add_argument("--dt", type=float, help="RK4 step")
    p.add_argument("--controller", choices=CONTROLLERS)
    p.set_defaults(func=cmd_simulate, out_dir=None)

    p = sub.add_parser("export-region", help="write the h, V, q grid as CSV")
    common(p, out_help="CSV path or directory (default region.csv)")
    p.add_argument("--certificate", help="certificate.json providing h")
    p.add_argument("--box", help="lo1,hi1,lo2,hi2,... (default: fitted to the region)")
    p.add_argument("--resolution", type=int, help="grid points per axis")
    p.set_defaults(func=cmd_export_region)

    p = sub.add_parser("init", help="write a template spec")
    p.add_argument("--template", default="blank", choices=sorted(templates.TEMPLATES))
    p.add_argument("--out", help="destination file (default stdout)")
    p.set_defaults(func=cmd_init)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    level = logging.WARNING if args.verbose == 0 else logging.INFO if args.verbose == 1 else logging.DEBUG
    logging.basicConfig(level=level, format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except SynthesisError as exc:
        print(f"error: synthesis failed: {exc}", file=sys.stderr)
        if exc.status:
            print(f"  solver status: {exc.status}", file=sys.stderr)
        print("  rerun with -v for the per-iteration log", file=sys.stderr)
    except (SpecError, RegionError, InvalidProblemError, ValueError, KeyError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
    return EXIT_ERROR


if __name__ == "__main__":
    sys.exit(main())
