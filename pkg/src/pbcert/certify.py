"""Barrier-certificate synthesis by alternating SOS programs.

Autonomous systems (domain-of-attraction expansion):

1. bisection on ``c`` for the largest Lyapunov sublevel ``{V <= c}``
   certified by ``-dV/dt - L (c - V)`` SOS;
2. with ``h`` fixed, choose multipliers ``L1, L2`` maximizing the barrier
   margin ``eps``;
3. with ``L1, L2`` fixed, choose ``h`` maximizing the Gram trace.

Steps 2 and 3 alternate until the trace stops improving. The controlled
variant adds a polynomial feedback ``u`` (searched in steps 1 and 2) and
containment constraints ``-h + J_i q_i`` SOS keeping ``{h >= 0}`` out of
each unsafe set ``{q_i < 0}``.
"""

from __future__ import annotations

import logging
import math
import time
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from .polynomial import Polynomial, PolyVectorField, VariableSet, grlex_key, monomials_up_to
from .sdp import OPTIMAL, SolverOptions
from .smr import GramForm, MonomialBasis, canonical_gram, square_index, standard_basis
from .sos import DecisionPoly, Expr, SosProblem, SosSolution

logger = logging.getLogger(__name__)


class SynthesisError(RuntimeError):
    """A synthesis step failed; carries the step name, iteration and solver status."""

    def __init__(self, message: str, step: str = "", iteration: int | None = None, status: str = ""):
        self.step = step
        self.iteration = iteration
        self.status = status
        where = step if iteration is None else f"{step} (iteration {iteration})"
        super().__init__(f"{where}: {message}" if where else message)


class InvalidProblemError(ValueError):
    pass


@dataclass
class SynthesisOptions:
    max_iters: int = 30
    rel_tol: float = 1e-3
    trace_bound: float = 1e4
    bisection_tol: float = 1e-4
    bracket_start: float = 1.0
    bracket_cap: float = 2.0**10
    backend: str = "ipm"
    solver: SolverOptions | None = None

    def __post_init__(self):
        if self.max_iters < 0:
            raise ValueError("max_iters must be >= 0")
        if self.rel_tol <= 0 or self.trace_bound <= 0 or self.bisection_tol <= 0:
            raise ValueError("tolerances and trace bound must be positive")
        if not 0 < self.bracket_start <= self.bracket_cap:
            raise ValueError("need 0 < bracket_start <= bracket_cap")


def default_multiplier_degree(field_degree: int) -> int:
    """Smallest even degree that is at least ``max(2, deg f - 1)``."""
    d = max(2, field_degree - 1)
    return d + (d % 2)


def default_containment_degree(cert_degree: int, q: Polynomial) -> int:
    d = max(0, cert_degree - q.degree() + 2)
    return d - (d % 2)


def _validate_lyapunov(V: Polynomial, radius: float = 0.1, samples: int = 2000, seed: int = 0):
    n = V.n
    if abs(V.coefficient((0,) * n)) > 1e-12:
        raise InvalidProblemError("V(0) must be 0")
    rng = np.random.default_rng(seed)
    pts = rng.normal(size=(samples, n))
    pts *= (radius * rng.uniform(0.05, 1.0, size=(samples, 1))) / np.linalg.norm(pts, axis=1, keepdims=True)
    if np.min(V.evaluate(pts)) <= 0:
        raise InvalidProblemError("V is not positive on a punctured neighborhood of the origin")


def _even(name: str, d: int):
    if d < 0 or d % 2:
        raise InvalidProblemError(f"{name} must be a non-negative even integer, got {d}")


@dataclass
class DoaProblem:
    field: PolyVectorField
    V: Polynomial
    gamma: float = 1.0
    cert_degree: int | None = None
    multiplier_degree: int | None = None
    options: SynthesisOptions = field(default_factory=SynthesisOptions)

    def __post_init__(self):
        if self.gamma <= 0:
            raise InvalidProblemError("gamma must be positive")
        if self.V.vars != self.field.vars:
            raise InvalidProblemError("V and f use different variables")
        _validate_lyapunov(self.V)
        if self.cert_degree is None:
            self.cert_degree = self.V.degree() + self.V.degree() % 2
            logger.info("cert_degree defaulted to %d", self.cert_degree)
        _even("cert_degree", self.cert_degree)
        if self.multiplier_degree is None:
            self.multiplier_degree = default_multiplier_degree(self.field.drift().degree())
            logger.info("multiplier degree defaulted to %d", self.multiplier_degree)
        _even("multiplier_degree", self.multiplier_degree)

    def settings(self) -> dict:
        return {
            "gamma": self.gamma,
            "cert_degree": self.cert_degree,
            "multiplier_degree": self.multiplier_degree,
            **_options_dict(self.options),
        }


@dataclass
class SafeStabilizationProblem:
    field: PolyVectorField
    V: Polynomial
    unsafe: list[Polynomial]
    gamma: float = 1.0
    cert_degree: int | None = None
    controller_degree: int | None = None
    coeff_bound: float = 100.0
    multiplier_degree: int | None = None
    containment_degrees: list[int] | None = None
    options: SynthesisOptions = field(default_factory=SynthesisOptions)

    def __post_init__(self):
        if self.field.g is None:
            raise InvalidProblemError("safe stabilization needs an input matrix g")
        if self.gamma <= 0:
            raise InvalidProblemError("gamma must be positive")
        if self.coeff_bound < 0:
            raise InvalidProblemError("coeff_bound must be non-negative")
        if self.V.vars != self.field.vars:
            raise InvalidProblemError("V and f use different variables")
        for q in self.unsafe:
            if q.vars != self.field.vars:
                raise InvalidProblemError("unsafe polynomial uses a different variable set")
        _validate_lyapunov(self.V)
        if self.cert_degree is None:
            self.cert_degree = self.V.degree() + self.V.degree() % 2
            logger.info("cert_degree defaulted to %d", self.cert_degree)
        _even("cert_degree", self.cert_degree)
        if self.controller_degree is None:
            self.controller_degree = max(1, self.field.drift().degree())
            logger.info("controller degree defaulted to %d", self.controller_degree)
        if self.controller_degree < 1:
            raise InvalidProblemError("controller_degree must be >= 1")
        if self.multiplier_degree is None:
            self.multiplier_degree = default_multiplier_degree(self.field.drift().degree())
            logger.info("multiplier degree defaulted to %d", self.multiplier_degree)
        _even("multiplier_degree", self.multiplier_degree)
        if self.containment_degrees is None:
            self.containment_degrees = [default_containment_degree(self.cert_degree, q) for q in self.unsafe]
        if len(self.containment_degrees) != len(self.unsafe):
            raise InvalidProblemError("one containment degree per unsafe polynomial")
        for d in self.containment_degrees:
            _even("containment degree", d)

    def settings(self) -> dict:
        return {
            "gamma": self.gamma,
            "cert_degree": self.cert_degree,
            "controller_degree": self.controller_degree,
            "coeff_bound": self.coeff_bound,
            "multiplier_degree": self.multiplier_degree,
            "containment_degrees": list(self.containment_degrees),
            **_options_dict(self.options),
        }


def _options_dict(o: SynthesisOptions) -> dict:
    solver = o.solver or SolverOptions.from_env()
    return {
        "max_iters": o.max_iters,
        "rel_tol": o.rel_tol,
        "trace_bound": o.trace_bound,
        "bisection_tol": o.bisection_tol,
        "bracket_cap": o.bracket_cap,
        "backend": o.backend,
        "sdp_feastol": solver.feastol,
        "sdp_gaptol": solver.gaptol,
        "sdp_max_iters": solver.max_iters,
    }


@dataclass
class IterationRecord:
    iteration: int
    epsilon: float
    trace: float
    accepted: bool
    saturated: bool = False
    seconds: float = 0.0
    status: str = "accepted"


@dataclass
class CertificateResult:
    h: Polynomial
    gram: GramForm
    c_star: float
    V: Polynomial
    trace_history: list[float]
    iterations: list[IterationRecord]
    u: list[Polynomial] | None = None
    J: list[Polynomial] | None = None
    L1: Polynomial | None = None
    L2: Polynomial | None = None
    step1_multiplier: Polynomial | None = None
    trace_saturated: bool = False
    settings: dict = field(default_factory=dict)
    verification: object | None = None

    @property
    def h_initial(self) -> Polynomial:
        return Polynomial.constant(self.c_star, self.V.vars) - self.V


@dataclass
class SublevelResult:
    c_star: float
    L: Polynomial
    u: list[Polynomial] | None = None
    J: list[Polynomial] | None = None
    evaluations: int = 0
    at_cap: bool = False

    def __iter__(self):
        # allows ``c, L = max_sublevel(...)``
        return iter((self.c_star, self.L))


# -- helpers ---------------------------------------------------------------


def _solve(prob: SosProblem, opts: SynthesisOptions) -> SosSolution:
    return prob.solve(opts.backend, opts.solver or SolverOptions.from_env())


def _multiplier(prob: SosProblem, degree: int, name: str, vanish: bool) -> Expr | DecisionPoly:
    """SOS multiplier of ``degree``; ``vanish`` drops the constant (forcing ``L(0) = 0``)."""
    n = prob.vars.n
    lo = 1 if vanish else 0
    hi = degree // 2
    if hi < lo:
        return None
    basis = MonomialBasis(tuple(monomials_up_to(n, hi, lo)), n, hi, lo)
    return prob.new_sos_poly(basis, name)


def _expr(d) -> Expr:
    return d.expr if isinstance(d, DecisionPoly) else d


def _lie(p: Polynomial | Expr, components: Sequence[Polynomial | Expr], vars: VariableSet) -> Expr:
    return Expr.lift(p, vars).lie_derivative(components)


def _controller(prob: SosProblem, m: int, degree: int, bound: float | None) -> list[DecisionPoly]:
    """Polynomial feedback without constant term, coefficients boxed by ``bound``."""
    n = prob.vars.n
    monos = monomials_up_to(n, degree, 1)
    u = []
    for j in range(m):
        uj = prob.new_free_poly(monos, f"u{j + 1}")
        if bound is not None:
            for mono in monos:
                coef = uj.expr.coefficient(mono)
                prob.add_linear_le(coef, bound, f"u{j + 1}.ub")
                prob.add_linear_ge(coef, -bound, f"u{j + 1}.lb")
        u.append(uj)
    return u


def _closed_loop_exprs(fieldv: PolyVectorField, u: Sequence[DecisionPoly]) -> list[Expr]:
    vars = fieldv.vars
    comps = []
    for i in range(fieldv.n):
        acc = Expr.lift(fieldv.f[i], vars)
        for j, uj in enumerate(u):
            gij = fieldv.g[i][j]
            if not gij.is_zero():
                acc = acc + uj.expr * gij
        comps.append(acc)
    return comps


def gram_basis(n: int, cert_degree: int) -> MonomialBasis:
    return standard_basis(n, cert_degree // 2)


def canonical_trace(h: Polynomial, basis: MonomialBasis) -> float:
    """Trace of the canonical Gram matrix of ``h``: sum of square-monomial coefficients."""
    return float(sum(h.coefficient(m) for m in square_index(basis)))


def _canonical_gram_exprs(h: Expr, basis: MonomialBasis) -> list[list[Expr]]:
    cmap = basis.coefficient_map
    squares = square_index(basis)
    k = len(basis)
    zero = Expr(h.vars)
    entries = [[zero for _ in range(k)] for _ in range(k)]
    for mono, plist in cmap.pairs.items():
        coef = h.coefficient(mono)
        if mono in squares:
            i = squares[mono]
            entries[i][i] = coef
            continue
        off = [(i, j) for i, j in plist if i < j]
        share = coef * (1.0 / len(off))
        for i, j in off:
            entries[i][j] = share
            entries[j][i] = share
    return entries


def _bisect(feasible: Callable[[float], object | None], opts: SynthesisOptions, step: str):
    """Largest ``c`` in ``[0, cap]`` with a feasible witness, to ``bisection_tol``."""
    evaluations = 0
    lo, lo_witness = 0.0, None
    c = opts.bracket_start
    hi = None
    while True:
        w = feasible(c)
        evaluations += 1
        logger.debug("%s: c=%.6g %s", step, c, "feasible" if w is not None else "infeasible")
        if w is None:
            hi = c
            break
        lo, lo_witness = c, w
        if c >= opts.bracket_cap:
            return lo, lo_witness, evaluations, True
        c = min(2 * c, opts.bracket_cap)
    while hi - lo > opts.bisection_tol:
        mid = 0.5 * (lo + hi)
        w = feasible(mid)
        evaluations += 1
        logger.debug("%s: c=%.6g %s", step, mid, "feasible" if w is not None else "infeasible")
        if w is None:
            hi = mid
        else:
            lo, lo_witness = mid, w
    if lo_witness is None:
        raise SynthesisError("no feasible level found above 0; V cannot be certified with these degrees",
                             step=step, status="infeasible")
    return lo, lo_witness, evaluations, False


# -- autonomous -------------------------------------------------------------


def _level_problem(fieldv, V, c, L_degree, u_spec=None, unsafe=(), J_degrees=()):
    vars = V.vars
    prob = SosProblem(vars, f"level c={c:.6g}")
    L = _multiplier(prob, L_degree, "L", vanish=True)
    h = Polynomial.constant(c, vars) - V
    if u_spec is None:
        comps = list(fieldv.f)
        u = None
    else:
        degree, bound = u_spec
        u = _controller(prob, fieldv.m, degree, bound)
        comps = _closed_loop_exprs(fieldv, u)
    expr = -_lie(V, comps, vars)
    if L is not None:
        expr = expr - _expr(L) * h
    prob.add_sos(expr, "lyapunov")
    J = []
    for i, (q, dj) in enumerate(zip(unsafe, J_degrees)):
        Ji = _multiplier(prob, dj, f"J{i + 1}", vanish=False)
        prob.add_sos(-h + _expr(Ji) * q, f"containment{i + 1}")
        J.append(Ji)
    return prob, L, u, J


def max_sublevel(fieldv: PolyVectorField, V: Polynomial, gamma: float = 1.0, L_degree: int | None = None,
                 options: SynthesisOptions | None = None) -> SublevelResult:
    """Largest ``c`` such that ``-dV/dt - L (c - V)`` is SOS for some SOS ``L``.

    ``gamma`` does not enter this step; it is accepted for a uniform call
    signature with the later steps.
    """
    opts = options or SynthesisOptions()
    if L_degree is None:
        L_degree = default_multiplier_degree(fieldv.drift().degree())
    drift = fieldv.drift()

    def feasible(c):
        prob, L, _, _ = _level_problem(drift, V, c, L_degree)
        sol = _solve(prob, opts)
        if not sol.ok:
            return None
        return sol.polynomial(L) if L is not None else Polynomial.zero(V.vars)

    c, L, evals, capped = _bisect(feasible, opts, "max_sublevel")
    logger.info("max_sublevel: c* = %.6f after %d SOS solves", c, evals)
    return SublevelResult(c, L, evaluations=evals, at_cap=capped)


def alg1_step2(h: Polynomial, fieldv: PolyVectorField, V: Polynomial, gamma: float = 1.0,
               multiplier_degree: int = 2, options: SynthesisOptions | None = None):
    """Multipliers ``L1, L2`` for fixed ``h``, maximizing the barrier margin.

    Returns ``(L1, L2, epsilon)``.
    """
    opts = options or SynthesisOptions()
    comps = list(fieldv.drift().f)
    return _step2(h, comps, V, gamma, multiplier_degree, opts, None)[1:]


def _step2(h, comps, V, gamma, mdeg, opts, u):
    vars = V.vars
    prob = SosProblem(vars, "step2")
    L1 = _multiplier(prob, mdeg, "L1", vanish=True)
    L2 = _multiplier(prob, mdeg, "L2", vanish=False)
    eps = prob.new_scalar("eps", nonneg=True)
    if u is not None:
        degree, bound, m, fieldv = u
        uu = _controller(prob, m, degree, bound)
        comps = _closed_loop_exprs(fieldv, uu)
    else:
        uu = None
    lyap = -_lie(V, comps, vars)
    if L1 is not None:
        lyap = lyap - _expr(L1) * h
    prob.add_sos(lyap, "lyapunov")
    barrier = _lie(h, comps, vars) + h * gamma - _expr(L2) * h - eps.expr
    prob.add_sos(barrier, "barrier")
    prob.maximize(eps.expr)
    sol = _solve(prob, opts)
    if not sol.ok:
        raise SynthesisError(f"margin search returned {sol.status}; the fixed h violates the Lyapunov "
                             "or barrier constraint", step="step2", status=sol.status)
    L1p = sol.polynomial(L1) if L1 is not None else Polynomial.zero(vars)
    u_out = [sol.polynomial(d) for d in uu] if uu is not None else None
    return u_out, L1p, sol.polynomial(L2), max(0.0, sol.scalar(eps))


def _step3(L1, L2, comps, V, gamma, cert_degree, opts, unsafe=(), J_degrees=()):
    vars = V.vars
    n = vars.n
    prob = SosProblem(vars, "step3")
    basis = gram_basis(n, cert_degree)
    hd = prob.new_free_poly(monomials_up_to(n, cert_degree), "h")
    h = hd.expr
    prob.add_sos(-_lie(V, comps, vars) - h * L1, "lyapunov")
    prob.add_sos(_lie(h, comps, vars) + h * gamma - h * L2, "barrier")
    J = []
    for i, (q, dj) in enumerate(zip(unsafe, J_degrees)):
        Ji = _multiplier(prob, dj, f"J{i + 1}", vanish=False)
        prob.add_sos(-h + _expr(Ji) * q, f"containment{i + 1}")
        J.append(Ji)
    entries = _canonical_gram_exprs(h, basis)
    bound = [[(-e + (opts.trace_bound if i == j else 0.0)) for j, e in enumerate(row)]
             for i, row in enumerate(entries)]
    prob.add_psd(bound, "trace-safeguard")
    trace_expr = Expr(vars)
    for m in square_index(basis):
        trace_expr = trace_expr + h.coefficient(m)
    prob.maximize(trace_expr)
    sol = _solve(prob, opts)
    if not sol.ok:
        raise SynthesisError(f"certificate search returned {sol.status}", step="step3", status=sol.status)
    hp = sol.polynomial(hd)
    gram = canonical_gram(hp, basis)
    saturated = float(np.linalg.eigvalsh(gram.Q)[-1]) >= opts.trace_bound * (1 - 1e-6)
    Jp = [sol.polynomial(Ji) for Ji in J]
    return hp, gram, canonical_trace(hp, basis), saturated, Jp


def alg1_step3(L1: Polynomial, L2: Polynomial, fieldv: PolyVectorField, V: Polynomial, gamma: float = 1.0,
               cert_degree: int = 2, prev_trace: float | None = None, options: SynthesisOptions | None = None):
    """Certificate ``h`` maximizing the Gram trace for fixed multipliers.

    Returns ``(h, gram, trace, saturated)``. Raises :class:`SynthesisError`
    if the trace falls below ``prev_trace`` by more than the tolerance.
    """
    opts = options or SynthesisOptions()
    h, gram, tr, sat, _ = _step3(L1, L2, list(fieldv.drift().f), V, gamma, cert_degree, opts)
    _check_monotone(tr, prev_trace)
    return h, gram, tr, sat


def _monotone_tol(prev: float) -> float:
    return 1e-6 * (1 + abs(prev))


def _check_monotone(tr, prev):
    if prev is not None and tr < prev - _monotone_tol(prev):
        raise SynthesisError(f"trace decreased from {prev:.8g} to {tr:.8g}", step="step3", status="rejected")


_SOFT_FAILURES = ("numerical-failure", "max-iter")


def _alternate(result_init: dict, step2: Callable, step3: Callable, basis: MonomialBasis,
               opts: SynthesisOptions) -> dict:
    """Shared Step-2/Step-3 loop; ``result_init`` holds the Step-1 state."""
    h = result_init["h"]
    state = dict(result_init)
    trace = canonical_trace(h, basis)
    history = [trace]
    records: list[IterationRecord] = []
    saturated = False
    for k in range(1, opts.max_iters + 1):
        t0 = time.perf_counter()
        try:
            s2 = step2(h)
            s3 = step3(s2)
        except SynthesisError as e:
            e.iteration = k
            # a solver breakdown after progress keeps the last accepted certificate
            if k > 1 and e.status in _SOFT_FAILURES:
                records.append(IterationRecord(k, float("nan"), float("nan"), False, False,
                                               time.perf_counter() - t0, f"{e.step}: {e.status}"))
                logger.warning("iteration %d stopped: %s", k, e)
                break
            raise
        h_new, gram_new, tr_new, sat = s3["h"], s3["gram"], s3["trace"], s3["saturated"]
        dt = time.perf_counter() - t0
        if tr_new < trace - _monotone_tol(trace):
            records.append(IterationRecord(k, s2["epsilon"], tr_new, False, sat, dt, "trace decreased"))
            logger.info("iteration %d: trace %.6g below %.6g, step rejected", k, tr_new, trace)
            break
        records.append(IterationRecord(k, s2["epsilon"], tr_new, True, sat, dt))
        state.update(s2)
        state.update(s3)
        h = h_new
        improvement = (tr_new - trace) / max(1.0, abs(trace))
        trace = tr_new
        history.append(trace)
        saturated = saturated or sat
        logger.info("iteration %d: eps=%.4g trace=%.6g (+%.2e)%s", k, s2["epsilon"], trace, improvement,
                    " [trace saturated]" if sat else "")
        if improvement < opts.rel_tol:
            break
    state["h"] = h
    state["trace_history"] = history
    state["records"] = records
    state["saturated"] = saturated
    if "gram" not in state:
        state["gram"] = canonical_gram(h, basis)
    return state


def expand_doa(p: DoaProblem, verify: bool = True, verify_kwargs: dict | None = None) -> CertificateResult:
    """Full domain-of-attraction expansion for an autonomous system."""
    opts = p.options
    fieldv = p.field.drift()
    V = p.V
    vars = V.vars
    basis = gram_basis(vars.n, p.cert_degree)
    lvl = max_sublevel(fieldv, V, p.gamma, p.multiplier_degree, opts)
    if lvl.at_cap:
        logger.warning("sublevel search reached the bracket cap %g", opts.bracket_cap)
    h0 = Polynomial.constant(lvl.c_star, vars) - V
    comps = list(fieldv.f)

    def step2(h):
        _, L1, L2, eps = _step2(h, comps, V, p.gamma, p.multiplier_degree, opts, None)
        return {"L1": L1, "L2": L2, "epsilon": eps}

    def step3(s2):
        h, gram, tr, sat, _ = _step3(s2["L1"], s2["L2"], comps, V, p.gamma, p.cert_degree, opts)
        return {"h": h, "gram": gram, "trace": tr, "saturated": sat}

    state = _alternate({"h": h0}, step2, step3, basis, opts)
    result = CertificateResult(
        h=state["h"], gram=state["gram"], c_star=lvl.c_star, V=V, trace_history=state["trace_history"],
        iterations=state["records"], L1=state.get("L1"), L2=state.get("L2"), step1_multiplier=lvl.L,
        trace_saturated=state["saturated"], settings=p.settings(),
    )
    if result.trace_saturated:
        logger.warning("trace saturated at bound %g", opts.trace_bound)
    if verify:
        from .verify import verify_result

        result.verification = verify_result(result, p.field, p.gamma, **(verify_kwargs or {}))
    return result


# -- controlled -------------------------------------------------------------


def _check_origin_safe(unsafe: Sequence[Polynomial]):
    for i, q in enumerate(unsafe):
        q0 = q.coefficient((0,) * q.n)
        if q0 <= 0:
            raise SynthesisError(f"unsafe set {i + 1} contains the origin (q{i + 1}(0) = {q0:g})",
                                 step="max_sublevel_controlled", status="infeasible")


def max_sublevel_controlled(fieldv: PolyVectorField, V: Polynomial, unsafe: Sequence[Polynomial] = (),
                            L_degree: int | None = None, J_degrees: Sequence[int] | None = None,
                            controller_degree: int | None = None, coeff_bound: float | None = 100.0,
                            cert_degree: int = 2, options: SynthesisOptions | None = None) -> SublevelResult:
    """Largest certified sublevel under some polynomial feedback, outside every unsafe set."""
    opts = options or SynthesisOptions()
    if fieldv.g is None:
        raise InvalidProblemError("controlled sublevel search needs an input matrix g")
    unsafe = list(unsafe)
    _check_origin_safe(unsafe)
    if L_degree is None:
        L_degree = default_multiplier_degree(fieldv.drift().degree())
    if controller_degree is None:
        controller_degree = max(1, fieldv.drift().degree())
    if J_degrees is None:
        J_degrees = [default_containment_degree(cert_degree, q) for q in unsafe]

    def feasible(c):
        prob, L, u, J = _level_problem(fieldv, V, c, L_degree, (controller_degree, coeff_bound), unsafe, J_degrees)
        sol = _solve(prob, opts)
        if not sol.ok:
            return None
        Lp = sol.polynomial(L) if L is not None else Polynomial.zero(V.vars)
        return Lp, [sol.polynomial(d) for d in u], [sol.polynomial(d) for d in J]

    c, (L, u, J), evals, capped = _bisect(feasible, opts, "max_sublevel_controlled")
    logger.info("max_sublevel_controlled: c* = %.6f after %d SOS solves", c, evals)
    return SublevelResult(c, L, u, J, evals, capped)


def alg2_step2(h: Polynomial, fieldv: PolyVectorField, V: Polynomial, gamma: float = 1.0,
               multiplier_degree: int = 2, controller_degree: int = 1, coeff_bound: float | None = 100.0,
               options: SynthesisOptions | None = None):
    """Returns ``(u, L1, L2, epsilon)`` for fixed ``h``."""
    opts = options or SynthesisOptions()
    return _step2(h, None, V, gamma, multiplier_degree, opts, (controller_degree, coeff_bound, fieldv.m, fieldv))


def alg2_step3(u: Sequence[Polynomial], L1: Polynomial, L2: Polynomial, fieldv: PolyVectorField, V: Polynomial,
               gamma: float = 1.0, unsafe: Sequence[Polynomial] = (), cert_degree: int = 2,
               J_degrees: Sequence[int] | None = None, prev_trace: float | None = None,
               options: SynthesisOptions | None = None):
    """Returns ``(h, gram, J, trace, saturated)`` for fixed ``u, L1, L2``."""
    opts = options or SynthesisOptions()
    if J_degrees is None:
        J_degrees = [default_containment_degree(cert_degree, q) for q in unsafe]
    comps = list(fieldv.closed_loop(u).f)
    h, gram, tr, sat, J = _step3(L1, L2, comps, V, gamma, cert_degree, opts, list(unsafe), list(J_degrees))
    _check_monotone(tr, prev_trace)
    return h, gram, J, tr, sat


def synthesize_safe_region(p: SafeStabilizationProblem, verify: bool = True,
                           verify_kwargs: dict | None = None) -> CertificateResult:
    """Full safe-stabilization synthesis with controller co-design."""
    opts = p.options
    V = p.V
    vars = V.vars
    basis = gram_basis(vars.n, p.cert_degree)
    lvl = max_sublevel_controlled(p.field, V, p.unsafe, p.multiplier_degree, p.containment_degrees,
                                  p.controller_degree, p.coeff_bound, p.cert_degree, opts)
    h0 = Polynomial.constant(lvl.c_star, vars) - V

    def step2(h):
        u, L1, L2, eps = _step2(h, None, V, p.gamma, p.multiplier_degree, opts,
                                (p.controller_degree, p.coeff_bound, p.field.m, p.field))
        return {"u": u, "L1": L1, "L2": L2, "epsilon": eps}

    def step3(s2):
        comps = list(p.field.closed_loop(s2["u"]).f)
        h, gram, tr, sat, J = _step3(s2["L1"], s2["L2"], comps, V, p.gamma, p.cert_degree, opts,
                                     p.unsafe, p.containment_degrees)
        return {"h": h, "gram": gram, "trace": tr, "saturated": sat, "J": J}

    state = _alternate({"h": h0, "u": lvl.u, "J": lvl.J}, step2, step3, basis, opts)
    u = state["u"]
    result = CertificateResult(
        h=state["h"], gram=state["gram"], c_star=lvl.c_star, V=V, trace_history=state["trace_history"],
        iterations=state["records"], u=u, J=state.get("J"), L1=state.get("L1"), L2=state.get("L2"),
        step1_multiplier=lvl.L, trace_saturated=state["saturated"], settings=p.settings(),
    )
    if verify:
        from .verify import verify_result

        result.verification = verify_result(result, p.field, p.gamma, unsafe=p.unsafe, **(verify_kwargs or {}))
    return result
