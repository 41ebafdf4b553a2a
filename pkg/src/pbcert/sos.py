"""Sum-of-squares programs compiled to block SDPs by coefficient matching.

Decision polynomials and scalars enter constraint expressions affinely
(:class:`Expr`). ``add_sos(expr)`` introduces a PSD Gram block ``G`` over a
monomial basis and equates every coefficient of ``expr`` with the matching
aggregate of ``G`` entries. Multiplying two expressions that both depend on
decision variables raises :class:`BilinearError`; alternation schemes fix one
side first.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from .polynomial import Monomial, Polynomial, VariableSet, grlex_key, monomials_up_to
from .sdp import OPTIMAL, SdpProblem, SdpSolution, SolverOptions, get_backend
from .smr import GramForm, MonomialBasis, canonical_gram, coefficient_map, square_index, vech_index

logger = logging.getLogger(__name__)


class BilinearError(ValueError):
    """Product of two decision-dependent expressions."""

    def __init__(self, left: Iterable[str], right: Iterable[str]):
        self.left = tuple(sorted(left))
        self.right = tuple(sorted(right))
        super().__init__(f"bilinear product of decision handles {self.left} and {self.right}")


class EmptyProblemError(ValueError):
    pass


class UnusableSolutionError(RuntimeError):
    def __init__(self, status: str):
        self.status = status
        super().__init__(f"SDP solution status {status!r} cannot be recovered")


class Expr:
    """Polynomial whose coefficients are affine in decision variables.

    ``const`` maps monomials to numbers; ``lin`` maps monomials to
    ``{variable index: coefficient}``. ``handles`` names the decision
    objects the expression depends on.
    """

    __slots__ = ("vars", "const", "lin", "handles")

    def __init__(self, vars: VariableSet, const=None, lin=None, handles=frozenset()):
        self.vars = vars
        self.const: dict[Monomial, float] = const or {}
        self.lin: dict[Monomial, dict[int, float]] = lin or {}
        self.handles = frozenset(handles)

    @classmethod
    def lift(cls, p: "Polynomial | Expr | float", vars: VariableSet) -> "Expr":
        if isinstance(p, Expr):
            return p
        if isinstance(p, Polynomial):
            if p.vars != vars:
                raise ValueError("variable set mismatch")
            return cls(vars, dict(p.items()))
        if isinstance(p, (int, float, np.floating, np.integer)):
            return cls(vars, {(0,) * vars.n: float(p)} if p else {})
        raise TypeError(f"cannot use {type(p).__name__} in an SOS expression")

    @property
    def is_constant(self) -> bool:
        return not any(self.lin.values())

    def support(self) -> set[Monomial]:
        out = {m for m, c in self.const.items() if c != 0.0}
        out |= {m for m, row in self.lin.items() if row}
        return out

    def coefficient(self, mono: Monomial) -> "Expr":
        zero = (0,) * self.vars.n
        const = {zero: self.const[mono]} if self.const.get(mono) else {}
        lin = {zero: dict(self.lin[mono])} if self.lin.get(mono) else {}
        return Expr(self.vars, const, lin, self.handles)

    def scalar_parts(self) -> tuple[float, dict[int, float]]:
        """Constant and linear part of a degree-0 expression."""
        zero = (0,) * self.vars.n
        extra = [m for m in self.support() if m != zero]
        if extra:
            raise ValueError(f"expression is not scalar (has monomials {extra[:3]})")
        return self.const.get(zero, 0.0), dict(self.lin.get(zero, {}))

    def _other(self, other) -> "Expr":
        return Expr.lift(other, self.vars)

    def __add__(self, other):
        other = self._other(other)
        const = dict(self.const)
        for m, c in other.const.items():
            const[m] = const.get(m, 0.0) + c
        lin = {m: dict(r) for m, r in self.lin.items()}
        for m, row in other.lin.items():
            tgt = lin.setdefault(m, {})
            for v, c in row.items():
                tgt[v] = tgt.get(v, 0.0) + c
        return Expr(self.vars, const, lin, self.handles | other.handles)

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, other):
        return self + (-self._other(other))

    def __rsub__(self, other):
        return self._other(other) + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            k = float(other)
            return Expr(self.vars, {m: c * k for m, c in self.const.items()},
                        {m: {v: c * k for v, c in r.items()} for m, r in self.lin.items()}, self.handles)
        other = self._other(other)
        if not self.is_constant and not other.is_constant:
            raise BilinearError(self.handles, other.handles)
        if not self.is_constant:
            return self._times_known(other.const)
        if not other.is_constant:
            return other._times_known(self.const)
        const: dict[Monomial, float] = {}
        for m1, c1 in self.const.items():
            for m2, c2 in other.const.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                const[m] = const.get(m, 0.0) + c1 * c2
        return Expr(self.vars, const, {}, self.handles | other.handles)

    __rmul__ = __mul__

    def _times_known(self, known: Mapping[Monomial, float]) -> "Expr":
        const: dict[Monomial, float] = {}
        lin: dict[Monomial, dict[int, float]] = {}
        for m2, c2 in known.items():
            if c2 == 0.0:
                continue
            for m1, c1 in self.const.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                const[m] = const.get(m, 0.0) + c1 * c2
            for m1, row in self.lin.items():
                m = tuple(a + b for a, b in zip(m1, m2))
                tgt = lin.setdefault(m, {})
                for v, c in row.items():
                    tgt[v] = tgt.get(v, 0.0) + c * c2
        return Expr(self.vars, const, lin, self.handles)

    def differentiate(self, i: int) -> "Expr":
        const: dict[Monomial, float] = {}
        lin: dict[Monomial, dict[int, float]] = {}
        for m, c in self.const.items():
            if m[i]:
                mm = m[:i] + (m[i] - 1,) + m[i + 1:]
                const[mm] = const.get(mm, 0.0) + c * m[i]
        for m, row in self.lin.items():
            if m[i]:
                mm = m[:i] + (m[i] - 1,) + m[i + 1:]
                tgt = lin.setdefault(mm, {})
                for v, c in row.items():
                    tgt[v] = tgt.get(v, 0.0) + c * m[i]
        return Expr(self.vars, const, lin, self.handles)

    def lie_derivative(self, components: Sequence["Polynomial | Expr"]) -> "Expr":
        """``sum_i d(self)/dx_i * components[i]``; at most one side may hold decisions."""
        out = Expr(self.vars)
        for i, fi in enumerate(components):
            out = out + self.differentiate(i) * fi
        return out

    def degree(self) -> int:
        sup = self.support()
        return max((sum(m) for m in sup), default=-1)

    def __repr__(self):
        return f"Expr(terms={len(self.support())}, handles={sorted(self.handles)})"


@dataclass
class DecisionPoly:
    """A decision polynomial: free coefficients, or a (PSD or free) Gram matrix."""

    id: str
    kind: str  # "free-polynomial", "sos-polynomial", "gram-polynomial"
    vars: VariableSet
    monomials: tuple[Monomial, ...] = ()
    basis: MonomialBasis | None = None
    var_index: np.ndarray | None = None
    expr: Expr | None = field(default=None, repr=False)

    @property
    def is_sos(self) -> bool:
        return self.kind == "sos-polynomial"


@dataclass
class Scalar:
    id: str
    index: int
    nonneg: bool
    expr: Expr = field(repr=False)


@dataclass
class SosConstraint:
    name: str
    kind: str  # "sos" or "zero"
    expr: Expr = field(repr=False)
    gram: DecisionPoly | None = None


class SosProblem:
    """Builder for an SOS program."""

    def __init__(self, vars: VariableSet, name: str = "sos"):
        self.vars = vars
        self.name = name
        self._var_kind: list[tuple] = []  # ("free",) | ("nonneg",) | ("block", block_id, i, j)
        self._blocks: list[int] = []
        self._equalities: list[tuple[dict[int, float], float, str]] = []
        self.decisions: list[DecisionPoly] = []
        self.scalars: list[Scalar] = []
        self.constraints: list[SosConstraint] = []
        self._objective: tuple[float, dict[int, float]] | None = None
        self.sense = "min"
        self._ids: set[str] = set()

    # -- variables --------------------------------------------------------

    def _fresh_id(self, name: str) -> str:
        base, k = name, 1
        while name in self._ids:
            k += 1
            name = f"{base}#{k}"
        self._ids.add(name)
        return name

    def _new_vars(self, count: int, kind: tuple) -> np.ndarray:
        start = len(self._var_kind)
        self._var_kind.extend([kind] * count)
        return np.arange(start, start + count)

    def _new_block(self, k: int) -> np.ndarray:
        bid = len(self._blocks)
        self._blocks.append(k)
        idx = np.zeros((k, k), dtype=int)
        for i, j in vech_index(k):
            v = len(self._var_kind)
            self._var_kind.append(("block", bid, i, j))
            idx[i, j] = idx[j, i] = v
        return idx

    @property
    def n_variables(self) -> int:
        return len(self._var_kind)

    def new_scalar(self, name: str = "t", nonneg: bool = False) -> Scalar:
        sid = self._fresh_id(name)
        if nonneg:
            idx = self._new_block(1)[0, 0]
        else:
            idx = int(self._new_vars(1, ("free",))[0])
        zero = (0,) * self.vars.n
        expr = Expr(self.vars, {}, {zero: {int(idx): 1.0}}, {sid})
        s = Scalar(sid, int(idx), nonneg, expr)
        self.scalars.append(s)
        return s

    def new_free_poly(self, monomials: Sequence[Monomial], name: str = "p") -> DecisionPoly:
        pid = self._fresh_id(name)
        monomials = tuple(sorted({tuple(m) for m in monomials}, key=grlex_key))
        idx = self._new_vars(len(monomials), ("free",))
        expr = Expr(self.vars, {}, {m: {int(v): 1.0} for m, v in zip(monomials, idx)}, {pid})
        d = DecisionPoly(pid, "free-polynomial", self.vars, monomials, None, idx, expr)
        self.decisions.append(d)
        return d

    def new_sos_poly(self, basis: MonomialBasis, name: str = "s") -> DecisionPoly:
        return self._gram_poly(basis, name, psd=True)

    def new_gram_poly(self, basis: MonomialBasis, name: str = "q", psd: bool = False) -> DecisionPoly:
        """Polynomial ``Z^T Q Z`` with ``Q`` a decision matrix (PSD if ``psd``)."""
        return self._gram_poly(basis, name, psd=psd)

    def _gram_poly(self, basis: MonomialBasis, name: str, psd: bool) -> DecisionPoly:
        pid = self._fresh_id(name)
        k = len(basis)
        if psd:
            idx = self._new_block(k)
        else:
            flat = self._new_vars(k * (k + 1) // 2, ("free",))
            idx = np.zeros((k, k), dtype=int)
            for t, (i, j) in enumerate(vech_index(k)):
                idx[i, j] = idx[j, i] = flat[t]
        expr = Expr(self.vars, {}, _gram_lin(basis, idx), {pid})
        kind = "sos-polynomial" if psd else "gram-polynomial"
        d = DecisionPoly(pid, kind, self.vars, tuple(basis.coefficient_map.monomials), basis, idx, expr)
        self.decisions.append(d)
        return d

    # -- constraints ------------------------------------------------------

    def _add_equality(self, row: dict[int, float], rhs: float, label: str):
        row = {v: c for v, c in row.items() if c != 0.0}
        self._equalities.append((row, rhs, label))

    def add_zero(self, expr, name: str = "zero") -> SosConstraint:
        expr = Expr.lift(expr, self.vars)
        for m in sorted(expr.support(), key=grlex_key):
            self._add_equality(dict(expr.lin.get(m, {})), -expr.const.get(m, 0.0), f"{name}:{m}")
        con = SosConstraint(name, "zero", expr)
        self.constraints.append(con)
        return con

    def add_sos(self, expr, name: str = "sos", basis: MonomialBasis | None = None) -> SosConstraint:
        """Require ``expr`` to be a sum of squares."""
        expr = Expr.lift(expr, self.vars)
        if basis is None:
            basis = gram_basis_for(expr.support(), self.vars.n)
        if basis is None:
            con = self.add_zero(expr, name)
            con.kind = "sos"
            return con
        gram = self._gram_poly(basis, f"{name}.gram", psd=True)
        diff = expr - gram.expr
        for m in sorted(diff.support(), key=grlex_key):
            self._add_equality(dict(diff.lin.get(m, {})), -diff.const.get(m, 0.0), f"{name}:{m}")
        con = SosConstraint(name, "sos", expr, gram)
        self.constraints.append(con)
        return con

    def add_linear_eq(self, scalar_expr, value: float = 0.0, name: str = "eq"):
        const, lin = Expr.lift(scalar_expr, self.vars).scalar_parts()
        self._add_equality(lin, value - const, name)
        self.constraints.append(SosConstraint(name, "zero", Expr.lift(scalar_expr, self.vars)))

    def add_linear_le(self, scalar_expr, bound: float, name: str = "le"):
        """``scalar_expr <= bound`` through a non-negative slack."""
        slack = self.new_scalar(f"{name}.slack", nonneg=True)
        self.add_linear_eq(Expr.lift(scalar_expr, self.vars) + slack.expr, bound, name)

    def add_linear_ge(self, scalar_expr, bound: float, name: str = "ge"):
        self.add_linear_le(-Expr.lift(scalar_expr, self.vars), -bound, name)

    def add_psd(self, entries: Sequence[Sequence], name: str = "lmi"):
        """Require the symmetric matrix of scalar expressions ``entries`` to be PSD."""
        k = len(entries)
        idx = self._new_block(k)
        for i in range(k):
            for j in range(i, k):
                e = Expr.lift(entries[i][j], self.vars)
                const, lin = e.scalar_parts()
                lin[int(idx[i, j])] = lin.get(int(idx[i, j]), 0.0) - 1.0
                self._add_equality(lin, -const, f"{name}[{i},{j}]")
        self.constraints.append(SosConstraint(name, "psd", Expr(self.vars)))
        return idx

    # -- objective --------------------------------------------------------

    def maximize(self, scalar_expr):
        self._set_objective(scalar_expr, "max")

    def minimize(self, scalar_expr):
        self._set_objective(scalar_expr, "min")

    def _set_objective(self, scalar_expr, sense):
        const, lin = Expr.lift(scalar_expr, self.vars).scalar_parts()
        self._objective = (const, lin)
        self.sense = sense

    # -- compile / solve --------------------------------------------------

    def compile(self) -> "CompiledSos":
        if not self.constraints:
            raise EmptyProblemError(f"SOS problem {self.name!r} has no constraints")
        nvar = len(self._var_kind)
        free_vars = [v for v, k in enumerate(self._var_kind) if k[0] == "free"]
        n_free = len(free_vars)
        offsets = []
        pos = n_free
        for k in self._blocks:
            offsets.append(pos)
            pos += k * (k + 1) // 2
        col = np.zeros(nvar, dtype=int)
        for t, v in enumerate(free_vars):
            col[v] = t
        for v, kind in enumerate(self._var_kind):
            if kind[0] == "block":
                _, bid, i, j = kind
                k = self._blocks[bid]
                col[v] = offsets[bid] + i * k - i * (i - 1) // 2 + (j - i)
        ri, ci, data, b, labels = [], [], [], [], []
        for r, (row, rhs, label) in enumerate(self._equalities):
            for v, cval in row.items():
                ri.append(r)
                ci.append(col[v])
                data.append(cval)
            b.append(rhs)
            labels.append(label)
        A = sp.csr_matrix((data, (ri, ci)), shape=(len(self._equalities), pos))
        c = np.zeros(pos)
        offset = 0.0
        if self._objective is not None:
            offset, lin = self._objective
            for v, cval in lin.items():
                c[col[v]] += cval
        sdp = SdpProblem(list(self._blocks), n_free, A, np.array(b), c, self.sense, offset, labels)
        return CompiledSos(self, sdp, col)

    def solve(self, backend: str = "ipm", options: SolverOptions | None = None) -> "SosSolution":
        compiled = self.compile()
        fn = get_backend(backend)
        sol = fn(compiled.sdp, options) if backend == "ipm" else fn(compiled.sdp)
        return SosSolution(compiled, sol)


def _gram_lin(basis: MonomialBasis, idx: np.ndarray) -> dict[Monomial, dict[int, float]]:
    lin: dict[Monomial, dict[int, float]] = {}
    k = len(basis)
    for i in range(k):
        for j in range(i, k):
            m = tuple(a + b for a, b in zip(basis.entries[i], basis.entries[j]))
            row = lin.setdefault(m, {})
            v = int(idx[i, j])
            row[v] = row.get(v, 0.0) + (1.0 if i == j else 2.0)
    return lin


def gram_basis_for(support: Iterable[Monomial], n: int) -> MonomialBasis | None:
    """Smallest degree-range basis that can represent an SOS with this support.

    Uses only exact reductions: the lowest and highest homogeneous parts of
    a sum of squares come from the squares' lowest and highest parts, and
    each variable's exponent in a square term is at most half its maximum
    exponent in the support. Returns ``None`` if no basis can apply (the
    expression must then vanish identically).
    """
    support = list(support)
    if not support:
        return MonomialBasis(((0,) * n,), n, 0, 0)
    degs = [sum(m) for m in support]
    lo = math.ceil(min(degs) / 2)
    hi = max(degs) // 2
    if hi < lo:
        return None
    caps = [max(m[i] for m in support) // 2 for i in range(n)]
    entries = tuple(m for m in monomials_up_to(n, hi, lo) if all(e <= c for e, c in zip(m, caps)))
    if not entries:
        return None
    return MonomialBasis(entries, n, hi, lo)


@dataclass
class CompiledSos:
    problem: SosProblem
    sdp: SdpProblem
    columns: np.ndarray


class SosSolution:
    """SDP solution mapped back onto decision polynomials."""

    def __init__(self, compiled: CompiledSos, sdp_solution: SdpSolution):
        self.compiled = compiled
        self.sdp_solution = sdp_solution
        self.status = sdp_solution.status
        self._values = None
        if sdp_solution.status == OPTIMAL or sdp_solution.usable():
            v = sdp_solution.vector(compiled.sdp)
            self._values = v[compiled.columns]

    @property
    def ok(self) -> bool:
        return self._values is not None

    @property
    def objective(self) -> float:
        return self.sdp_solution.objective

    def _require(self):
        if self._values is None:
            raise UnusableSolutionError(self.status)

    def variable_values(self) -> np.ndarray:
        self._require()
        return self._values

    def evaluate_expr(self, expr: Expr) -> Polynomial:
        self._require()
        vals = self._values
        terms: dict[Monomial, float] = dict(expr.const)
        for m, row in expr.lin.items():
            terms[m] = terms.get(m, 0.0) + sum(c * vals[v] for v, c in row.items())
        return Polynomial(terms, expr.vars)

    def polynomial(self, d: DecisionPoly) -> Polynomial:
        return self.evaluate_expr(d.expr)

    def gram(self, d: DecisionPoly) -> GramForm:
        self._require()
        if d.basis is None:
            raise ValueError(f"{d.id} has no Gram matrix")
        return GramForm(d.basis, self._values[d.var_index])

    def scalar(self, s: Scalar) -> float:
        self._require()
        return float(self._values[s.index])

    def constraint_gram(self, con: SosConstraint) -> GramForm | None:
        return None if con.gram is None else self.gram(con.gram)


def compile(p: SosProblem) -> SdpProblem:
    return p.compile().sdp


def recover(p: SosProblem, s: SdpSolution) -> dict[str, Polynomial | tuple[Polynomial, GramForm]]:
    """Materialize every decision polynomial; SOS-kind entries also carry their Gram."""
    sol = SosSolution(p.compile(), s)
    sol._require()
    out: dict = {}
    for d in p.decisions:
        if d.id.endswith(".gram"):
            continue
        poly = sol.polynomial(d)
        out[d.id] = (poly, sol.gram(d)) if d.is_sos else poly
    return out
