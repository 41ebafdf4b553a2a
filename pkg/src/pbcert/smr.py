"""Square matrix representation: monomial bases and Gram matrices.

A polynomial ``p`` is written as ``Z(x)^T Q Z(x)`` with ``Z`` a monomial
vector and ``Q`` symmetric. The linear map from the upper triangle of ``Q``
(``vech`` order, row-major over ``i <= j``) to the coefficients of ``p`` is
what turns SOS membership into a semidefinite constraint.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.sparse as sp

from .polynomial import Monomial, Polynomial, VariableSet, grlex_key, monomials_up_to


@dataclass(frozen=True)
class MonomialBasis:
    entries: tuple[Monomial, ...]
    n: int
    max_degree: int
    min_degree: int = 0

    def __post_init__(self):
        object.__setattr__(self, "entries", tuple(tuple(m) for m in self.entries))
        for m in self.entries:
            if len(m) != self.n:
                raise ValueError(f"monomial {m} does not match dimension {self.n}")
        if len(set(self.entries)) != len(self.entries):
            raise ValueError("duplicate monomials in basis")

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries)

    def index(self, mono: Monomial) -> int:
        return self.entries.index(tuple(mono))

    def evaluate(self, x) -> np.ndarray:
        """Rows ``Z(x_k)`` for a batch of points, shape ``(N, len(basis))``."""
        x = np.atleast_2d(np.asarray(x, dtype=float))
        exps = np.array(self.entries, dtype=np.int64)
        return np.prod(x[:, None, :] ** exps[None, :, :], axis=2)

    @cached_property
    def coefficient_map(self) -> "CoefficientMap":
        return coefficient_map(self)


def standard_basis(n: int, d: int) -> MonomialBasis:
    """All monomials of degree ``<= d`` in graded-lex order."""
    if n < 1 or d < 0:
        raise ValueError("need n >= 1 and d >= 0")
    return MonomialBasis(tuple(monomials_up_to(n, d)), n, d, 0)


def degree_range_basis(n: int, lo: int, hi: int) -> MonomialBasis:
    """Monomials with ``lo <= degree <= hi``."""
    if hi < lo:
        raise ValueError(f"empty degree range [{lo}, {hi}]")
    return MonomialBasis(tuple(monomials_up_to(n, hi, lo)), n, hi, lo)


def vech_index(k: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(k) for j in range(i, k)]


def vech(Q: np.ndarray) -> np.ndarray:
    k = Q.shape[0]
    iu = np.triu_indices(k)
    return np.asarray(Q)[iu]


def unvech(v: np.ndarray, k: int) -> np.ndarray:
    Q = np.zeros((k, k))
    iu = np.triu_indices(k)
    Q[iu] = v
    return Q + np.triu(Q, 1).T


@dataclass(frozen=True)
class CoefficientMap:
    """Sparse linear map ``A`` with ``A @ vech(Q) = coefficients(Z^T Q Z)``.

    ``monomials`` lists the product monomials in graded-lex order (the row
    order of ``A``); ``pairs[m]`` lists the ordered basis index pairs whose
    product is ``m``.
    """

    basis: MonomialBasis
    monomials: tuple[Monomial, ...]
    pairs: dict
    matrix: sp.csr_matrix

    def row(self, mono: Monomial) -> int:
        return self._rows[tuple(mono)]

    @cached_property
    def _rows(self):
        return {m: i for i, m in enumerate(self.monomials)}

    def apply(self, Q: np.ndarray) -> dict[Monomial, float]:
        coefs = self.matrix @ vech(Q)
        return dict(zip(self.monomials, coefs))


def coefficient_map(basis: MonomialBasis) -> CoefficientMap:
    k = len(basis)
    pairs: dict[Monomial, list[tuple[int, int]]] = {}
    for i, a in enumerate(basis.entries):
        for j, b in enumerate(basis.entries):
            m = tuple(x + y for x, y in zip(a, b))
            pairs.setdefault(m, []).append((i, j))
    monomials = tuple(sorted(pairs, key=grlex_key))
    rows = {m: r for r, m in enumerate(monomials)}
    col = {ij: c for c, ij in enumerate(vech_index(k))}
    data, ri, ci = [], [], []
    for m, plist in pairs.items():
        for i, j in plist:
            if i <= j:
                ri.append(rows[m])
                ci.append(col[(i, j)])
                data.append(1.0 if i == j else 2.0)
    A = sp.csr_matrix((data, (ri, ci)), shape=(len(monomials), k * (k + 1) // 2))
    return CoefficientMap(basis, monomials, pairs, A)


@dataclass(frozen=True)
class GramForm:
    basis: MonomialBasis
    Q: np.ndarray = field(repr=False)

    def __post_init__(self):
        Q = np.array(self.Q, dtype=float)
        k = len(self.basis)
        if Q.shape != (k, k):
            raise ValueError(f"Gram matrix shape {Q.shape} does not match basis size {k}")
        # stored from the upper triangle so Q == Q.T exactly
        upper = np.triu(Q)
        Q = upper + np.triu(upper, 1).T
        Q.setflags(write=False)
        object.__setattr__(self, "Q", Q)

    def expand(self, vars: VariableSet | None = None) -> Polynomial:
        return expand(self, vars)

    def trace(self) -> float:
        return trace(self)

    def min_eigenvalue(self) -> float:
        return float(np.linalg.eigvalsh(self.Q)[0]) if len(self.basis) else 0.0

    def is_psd(self, tol: float = 1e-8) -> bool:
        return self.min_eigenvalue() >= -tol


def expand(g: GramForm, vars: VariableSet | None = None) -> Polynomial:
    vars = vars or VariableSet.standard(g.basis.n)
    return Polynomial(g.basis.coefficient_map.apply(g.Q), vars)


def trace(g: GramForm) -> float:
    return float(np.trace(g.Q))


def square_index(basis: MonomialBasis) -> dict[Monomial, int]:
    """Monomials that are squares of a basis entry, mapped to that entry's index."""
    return {tuple(2 * e for e in m): i for i, m in enumerate(basis.entries)}


def canonical_gram(p: Polynomial, basis: MonomialBasis) -> GramForm:
    """A Gram matrix for ``p`` that puts every square monomial on the diagonal.

    Coefficients of non-square monomials are split evenly over their
    off-diagonal pairs. Its trace is the sum of the coefficients of square
    monomials, which is linear in ``p`` (see :func:`trace_weights`).
    """
    cmap = basis.coefficient_map
    squares = square_index(basis)
    k = len(basis)
    Q = np.zeros((k, k))
    for mono, coef in p.items():
        if mono in squares:
            i = squares[mono]
            Q[i, i] += coef
            continue
        plist = [ij for ij in cmap.pairs.get(mono, []) if ij[0] != ij[1]]
        if not plist:
            raise ValueError(f"monomial {mono} is not representable on this basis")
        share = coef / len(plist)
        for i, j in plist:
            Q[i, j] += share
    return GramForm(basis, Q)


def trace_weights(basis: MonomialBasis) -> dict[Monomial, float]:
    """Weights ``w`` with ``trace(canonical_gram(p)) = sum_m w[m] * coef_m(p)``."""
    return {m: 1.0 for m in square_index(basis)}


def representable_monomials(basis: MonomialBasis) -> list[Monomial]:
    return list(basis.coefficient_map.monomials)


def basis_size(n: int, d: int) -> int:
    return math.comb(n + d, d)
