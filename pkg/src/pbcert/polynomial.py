"""Sparse multivariate polynomials with float coefficients.

Polynomials are immutable maps from exponent tuples to coefficients over a
fixed, ordered :class:`VariableSet`. Terms iterate in graded-lexicographic
order so printing and Gram indexing are reproducible.

Expression grammar accepted by :func:`parse`::

    expr   ::= term (('+' | '-') term)*
    term   ::= factor ('*' factor)*
    factor ::= ('+' | '-') factor | power
    power  ::= atom ('^' INT)?
    atom   ::= NUMBER | NAME | '(' expr ')'

Whitespace is insignificant; NUMBER is a decimal literal with optional
exponent (``1.5``, ``2e-3``).
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np

Monomial = tuple[int, ...]

DROP_TOL = 1e-14


class ParseError(ValueError):
    """Malformed expression; ``position`` is the 0-based offset of the problem."""

    def __init__(self, message: str, position: int, text: str = ""):
        self.position = position
        self.text = text
        super().__init__(f"{message} at position {position}")


class DimensionError(ValueError):
    pass


@dataclass(frozen=True)
class VariableSet:
    names: tuple[str, ...]

    def __post_init__(self):
        names = tuple(self.names)
        object.__setattr__(self, "names", names)
        if not names:
            raise ValueError("a variable set needs at least one variable")
        if len(set(names)) != len(names):
            raise ValueError(f"duplicate variable names in {names}")
        for name in names:
            if not re.fullmatch(r"[A-Za-z_][A-Za-z_0-9]*", name):
                raise ValueError(f"invalid variable name {name!r}")

    @classmethod
    def standard(cls, n: int, prefix: str = "x") -> "VariableSet":
        return cls(tuple(f"{prefix}{i + 1}" for i in range(n)))

    @property
    def n(self) -> int:
        return len(self.names)

    def index(self, name: str) -> int:
        return self.names.index(name)


def grlex_key(mono: Monomial) -> tuple:
    """Ascending graded-lex key: lower degree first, then x1 dominates."""
    return (sum(mono), tuple(-e for e in mono))


def monomials_up_to(n: int, degree: int, min_degree: int = 0) -> list[Monomial]:
    out: list[Monomial] = []
    for d in range(max(min_degree, 0), degree + 1):
        out.extend(_monomials_of_degree(n, d))
    return out


def _monomials_of_degree(n: int, d: int) -> list[Monomial]:
    if n == 1:
        return [(d,)]
    out = []
    for first in range(d, -1, -1):
        for rest in _monomials_of_degree(n - 1, d - first):
            out.append((first,) + rest)
    return out


def _mono_mul(a: Monomial, b: Monomial) -> Monomial:
    return tuple(i + j for i, j in zip(a, b))


class Polynomial:
    """Immutable sparse polynomial.

    Zero coefficients (magnitude below ``DROP_TOL``) are never stored.
    """

    __slots__ = ("vars", "_terms", "_cache")

    def __init__(self, terms: Mapping[Monomial, float], vars: VariableSet):
        n = vars.n
        clean: dict[Monomial, float] = {}
        for mono, coef in terms.items():
            mono = tuple(int(e) for e in mono)
            if len(mono) != n:
                raise DimensionError(f"monomial {mono} has length {len(mono)}, expected {n}")
            if any(e < 0 for e in mono):
                raise ValueError(f"negative exponent in {mono}")
            c = float(coef)
            if not math.isfinite(c):
                raise ValueError(f"non-finite coefficient {c} for monomial {mono}")
            if abs(c) >= DROP_TOL:
                clean[mono] = clean.get(mono, 0.0) + c
        self.vars = vars
        self._terms = {m: clean[m] for m in sorted(clean, key=grlex_key) if abs(clean[m]) >= DROP_TOL}
        self._cache = None

    # construction helpers

    @classmethod
    def zero(cls, vars: VariableSet) -> "Polynomial":
        return cls({}, vars)

    @classmethod
    def constant(cls, value: float, vars: VariableSet) -> "Polynomial":
        return cls({(0,) * vars.n: value}, vars)

    @classmethod
    def variable(cls, index: int, vars: VariableSet) -> "Polynomial":
        mono = [0] * vars.n
        mono[index] = 1
        return cls({tuple(mono): 1.0}, vars)

    @classmethod
    def from_monomials(cls, monos: Sequence[Monomial], coefs: Sequence[float], vars: VariableSet):
        acc: dict[Monomial, float] = {}
        for m, c in zip(monos, coefs):
            acc[m] = acc.get(m, 0.0) + float(c)
        return cls(acc, vars)

    # basic queries

    @property
    def terms(self) -> dict[Monomial, float]:
        return dict(self._terms)

    @property
    def n(self) -> int:
        return self.vars.n

    def items(self):
        return self._terms.items()

    def monomials(self) -> list[Monomial]:
        return list(self._terms)

    def coefficient(self, mono: Monomial) -> float:
        return self._terms.get(tuple(mono), 0.0)

    def is_zero(self) -> bool:
        return not self._terms

    def degree(self) -> int:
        """Total degree; the zero polynomial has degree -1."""
        if not self._terms:
            return -1
        return max(sum(m) for m in self._terms)

    def min_degree(self) -> int:
        if not self._terms:
            return -1
        return min(sum(m) for m in self._terms)

    def __len__(self):
        return len(self._terms)

    def __eq__(self, other):
        if isinstance(other, (int, float)):
            other = Polynomial.constant(other, self.vars)
        if not isinstance(other, Polynomial):
            return NotImplemented
        return self.vars == other.vars and self._terms == other._terms

    def __hash__(self):
        return hash((self.vars, tuple(self._terms.items())))

    def allclose(self, other: "Polynomial", atol: float = 1e-9) -> bool:
        self._check(other)
        keys = set(self._terms) | set(other._terms)
        return all(abs(self.coefficient(k) - other.coefficient(k)) <= atol for k in keys)

    # arithmetic

    def _check(self, other: "Polynomial"):
        if other.vars != self.vars:
            raise DimensionError(f"variable sets differ: {self.vars.names} vs {other.vars.names}")

    def _coerce(self, other) -> "Polynomial":
        if isinstance(other, Polynomial):
            self._check(other)
            return other
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial.constant(float(other), self.vars)
        return NotImplemented

    def __add__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        acc = dict(self._terms)
        for m, c in other._terms.items():
            acc[m] = acc.get(m, 0.0) + c
        return Polynomial(acc, self.vars)

    __radd__ = __add__

    def __neg__(self):
        return Polynomial({m: -c for m, c in self._terms.items()}, self.vars)

    def __sub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return self + (-other)

    def __rsub__(self, other):
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        return other + (-self)

    def __mul__(self, other):
        if isinstance(other, (int, float, np.floating, np.integer)):
            return Polynomial({m: c * float(other) for m, c in self._terms.items()}, self.vars)
        other = self._coerce(other)
        if other is NotImplemented:
            return NotImplemented
        acc: dict[Monomial, float] = {}
        for m1, c1 in self._terms.items():
            for m2, c2 in other._terms.items():
                m = _mono_mul(m1, m2)
                acc[m] = acc.get(m, 0.0) + c1 * c2
        return Polynomial(acc, self.vars)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        if not isinstance(scalar, (int, float, np.floating, np.integer)):
            return NotImplemented
        return self * (1.0 / float(scalar))

    def __pow__(self, k: int):
        if not isinstance(k, (int, np.integer)) or k < 0:
            raise ValueError("only non-negative integer powers are supported")
        result = Polynomial.constant(1.0, self.vars)
        base = self
        while k:
            if k & 1:
                result = result * base
            base = base * base
            k >>= 1
        return result

    # calculus

    def differentiate(self, var_index: int) -> "Polynomial":
        if not 0 <= var_index < self.n:
            raise IndexError(f"variable index {var_index} out of range for n={self.n}")
        acc: dict[Monomial, float] = {}
        for m, c in self._terms.items():
            e = m[var_index]
            if e == 0:
                continue
            mm = list(m)
            mm[var_index] = e - 1
            acc[tuple(mm)] = acc.get(tuple(mm), 0.0) + c * e
        return Polynomial(acc, self.vars)

    def gradient(self) -> list["Polynomial"]:
        return [self.differentiate(i) for i in range(self.n)]

    def lie_derivative(self, field: "PolyVectorField") -> "Polynomial":
        """Derivative of ``self`` along the drift of ``field``: sum_i dp/dx_i * f_i."""
        if field.n != self.n:
            raise DimensionError(f"field has dimension {field.n}, polynomial has {self.n}")
        self._check(field.f[0])
        out = Polynomial.zero(self.vars)
        for i, fi in enumerate(field.f):
            out = out + self.differentiate(i) * fi
        return out

    # evaluation

    def _compiled(self):
        if self._cache is None:
            if self._terms:
                exps = np.array(list(self._terms), dtype=np.int64)
                coefs = np.array(list(self._terms.values()))
            else:
                exps = np.zeros((0, self.n), dtype=np.int64)
                coefs = np.zeros(0)
            self._cache = (exps, coefs)
        return self._cache

    def __call__(self, point) -> float | np.ndarray:
        return self.evaluate(point)

    def evaluate(self, point) -> float | np.ndarray:
        """Evaluate at one point (shape ``(n,)``) or a batch (shape ``(N, n)``)."""
        x = np.asarray(point, dtype=float)
        single = x.ndim == 1
        if single:
            x = x[None, :]
        if x.ndim != 2 or x.shape[1] != self.n:
            raise DimensionError(f"expected points of dimension {self.n}, got shape {np.shape(point)}")
        exps, coefs = self._compiled()
        out = np.zeros(x.shape[0])
        if len(coefs):
            maxdeg = int(exps.max()) if exps.size else 0
            powers = [np.ones_like(x)]
            for _ in range(maxdeg):
                powers.append(powers[-1] * x)
            for exp, c in zip(exps, coefs):
                term = np.full(x.shape[0], c)
                for i, e in enumerate(exp):
                    if e:
                        term = term * powers[e][:, i]
                out += term
        return float(out[0]) if single else out

    # presentation

    def __str__(self):
        return self.to_string()

    def __repr__(self):
        return f"Polynomial({self.to_string()!r}, vars={self.vars.names})"

    def to_string(self, precision: int | None = None) -> str:
        """Render in the parse grammar; ``parse(p.to_string()) == p`` at full precision."""
        if not self._terms:
            return "0"
        parts = []
        for mono, coef in self._terms.items():
            mag = abs(coef)
            num = repr(mag) if precision is None else f"{mag:.{precision}g}"
            factors = []
            for name, e in zip(self.vars.names, mono):
                if e == 1:
                    factors.append(name)
                elif e > 1:
                    factors.append(f"{name}^{e}")
            if factors and mag == 1.0:
                body = "*".join(factors)
            else:
                body = "*".join([num] + factors)
            sign = "-" if coef < 0 else "+"
            parts.append((sign, body))
        first_sign, first_body = parts[0]
        text = ("-" if first_sign == "-" else "") + first_body
        for sign, body in parts[1:]:
            text += f" {sign} {body}"
        return text

    def to_dict(self) -> list[list]:
        return [[list(m), c] for m, c in self._terms.items()]


@dataclass(frozen=True)
class PolyVectorField:
    """Control-affine polynomial field ``f(x) + g(x) u``.

    ``g`` is a tuple of rows (one per state), each a tuple of ``m`` entries,
    or ``None`` for an autonomous field.
    """

    f: tuple[Polynomial, ...]
    g: tuple[tuple[Polynomial, ...], ...] | None = None

    def __post_init__(self):
        f = tuple(self.f)
        object.__setattr__(self, "f", f)
        if not f:
            raise ValueError("empty vector field")
        vars = f[0].vars
        if len(f) != vars.n:
            raise DimensionError(f"{len(f)} components for {vars.n} variables")
        for p in f:
            if p.vars != vars:
                raise DimensionError("field components use different variable sets")
        if self.g is not None:
            g = tuple(tuple(row) for row in self.g)
            object.__setattr__(self, "g", g)
            if len(g) != vars.n:
                raise DimensionError(f"g has {len(g)} rows, expected {vars.n}")
            widths = {len(row) for row in g}
            if len(widths) != 1 or 0 in widths:
                raise DimensionError("g rows must share a positive column count")
            for row in g:
                for p in row:
                    if p.vars != vars:
                        raise DimensionError("g entries use a different variable set")

    @property
    def vars(self) -> VariableSet:
        return self.f[0].vars

    @property
    def n(self) -> int:
        return len(self.f)

    @property
    def m(self) -> int:
        return 0 if self.g is None else len(self.g[0])

    def degree(self) -> int:
        return max(p.degree() for p in self.f)

    def input_column(self, j: int) -> tuple[Polynomial, ...]:
        if self.g is None:
            raise ValueError("field has no inputs")
        return tuple(row[j] for row in self.g)

    def closed_loop(self, u: Sequence[Polynomial]) -> "PolyVectorField":
        """Autonomous field ``f + g u`` for a polynomial feedback ``u``."""
        if self.g is None:
            if len(u):
                raise DimensionError("controller given for an autonomous field")
            return PolyVectorField(self.f)
        if len(u) != self.m:
            raise DimensionError(f"controller has {len(u)} components, expected {self.m}")
        comps = []
        for i, fi in enumerate(self.f):
            acc = fi
            for j, uj in enumerate(u):
                acc = acc + self.g[i][j] * uj
            comps.append(acc)
        return PolyVectorField(tuple(comps))

    def drift(self) -> "PolyVectorField":
        return PolyVectorField(self.f)

    def evaluate(self, x, u=None) -> np.ndarray:
        """Vectorized ``f(x) + g(x) u`` for ``x`` of shape ``(N, n)`` or ``(n,)``."""
        x = np.asarray(x, dtype=float)
        single = x.ndim == 1
        xb = x[None, :] if single else x
        out = np.stack([p.evaluate(xb) for p in self.f], axis=1)
        if self.g is not None and u is not None:
            ub = np.asarray(u, dtype=float)
            ub = ub[None, :] if ub.ndim == 1 else ub
            for i in range(self.n):
                for j in range(self.m):
                    gij = self.g[i][j]
                    if not gij.is_zero():
                        out[:, i] += gij.evaluate(xb) * ub[:, j]
        return out[0] if single else out

    def g_matrix(self, x) -> np.ndarray:
        """``g`` evaluated on a batch: shape ``(N, n, m)``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros((x.shape[0], self.n, self.m))
        for i in range(self.n):
            for j in range(self.m):
                out[:, i, j] = self.g[i][j].evaluate(x)
        return out


def lie_derivative(p: Polynomial, field: PolyVectorField) -> Polynomial:
    return p.lie_derivative(field)


def differentiate(p: Polynomial, var_index: int) -> Polynomial:
    return p.differentiate(var_index)


def evaluate(p: Polynomial, point) -> float | np.ndarray:
    return p.evaluate(point)


# ---------------------------------------------------------------------------
# parsing

_TOKEN_RE = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*^()]))"
)


def _tokenize(text: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if not m or m.end() == pos:
            raise ParseError(f"unexpected character {text[pos]!r}", pos, text)
        kind = m.lastgroup
        start = m.start(kind)
        tokens.append((kind, m.group(kind), start))
        pos = m.end()
    tokens.append(("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, text: str, vars: VariableSet):
        self.text = text
        self.vars = vars
        self.tokens = _tokenize(text)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def error(self, msg, tok=None):
        tok = tok or self.peek()
        raise ParseError(msg, tok[2], self.text)

    def parse(self) -> Polynomial:
        if self.peek()[0] == "end":
            self.error("empty expression")
        p = self.expr()
        if self.peek()[0] != "end":
            self.error(f"unexpected token {self.peek()[1]!r}")
        return p

    def expr(self):
        p = self.term()
        while self.peek()[1] in ("+", "-") and self.peek()[0] == "op":
            op = self.take()[1]
            q = self.term()
            p = p + q if op == "+" else p - q
        return p

    def term(self):
        p = self.factor()
        while self.peek()[0] == "op" and self.peek()[1] == "*":
            self.take()
            p = p * self.factor()
        return p

    def factor(self):
        tok = self.peek()
        if tok[0] == "op" and tok[1] in ("+", "-"):
            self.take()
            p = self.factor()
            return -p if tok[1] == "-" else p
        return self.power()

    def power(self):
        base = self.atom()
        if self.peek()[0] == "op" and self.peek()[1] == "^":
            self.take()
            tok = self.take()
            if tok[0] != "num" or not re.fullmatch(r"\d+", tok[1]):
                self.error("exponent must be a non-negative integer", tok)
            return base ** int(tok[1])
        return base

    def atom(self):
        tok = self.take()
        kind, val, _ = tok
        if kind == "num":
            return Polynomial.constant(float(val), self.vars)
        if kind == "name":
            if val not in self.vars.names:
                self.error(f"unknown variable {val!r}", tok)
            return Polynomial.variable(self.vars.index(val), self.vars)
        if kind == "op" and val == "(":
            p = self.expr()
            if self.peek()[1] != ")":
                self.error("expected ')'")
            self.take()
            return p
        self.error(f"unexpected token {val!r}" if val else "unexpected end of expression", tok)


def parse(text: str, vars: VariableSet | Sequence[str]) -> Polynomial:
    """Parse an arithmetic expression into a canonical :class:`Polynomial`."""
    if not isinstance(vars, VariableSet):
        vars = VariableSet(tuple(vars))
    return _Parser(text, vars).parse()


def parse_field(f: Sequence[str], vars: VariableSet, g: Sequence[Sequence[str]] | None = None) -> PolyVectorField:
    fp = tuple(parse(s, vars) for s in f)
    gp = None
    if g is not None:
        gp = tuple(tuple(parse(s, vars) for s in row) for row in g)
    return PolyVectorField(fp, gp)


def random_polynomial(vars: VariableSet, degree: int, rng: np.random.Generator, density: float = 1.0,
                      scale: float = 1.0) -> Polynomial:
    monos = monomials_up_to(vars.n, degree)
    coefs = rng.normal(scale=scale, size=len(monos))
    keep = rng.random(len(monos)) < density
    return Polynomial.from_monomials([m for m, k in zip(monos, keep) if k], coefs[keep], vars)


def binomial(n: int, k: int) -> int:
    return math.comb(n, k)
