import numpy as np
import pytest

from pbcert.polynomial import VariableSet, parse
from pbcert.smr import (
    GramForm,
    MonomialBasis,
    basis_size,
    canonical_gram,
    expand,
    standard_basis,
    trace,
    unvech,
    vech,
)

X1 = VariableSet(("x1",))
X12 = VariableSet(("x1", "x2"))
X123 = VariableSet(("x1", "x2", "x3"))


def test_standard_basis_small_cases():
    assert standard_basis(1, 1).entries == ((0,), (1,))
    assert standard_basis(2, 1).entries == ((0, 0), (1, 0), (0, 1))
    b = standard_basis(2, 2)
    assert b.entries == ((0, 0), (1, 0), (0, 1), (2, 0), (1, 1), (0, 2))


@pytest.mark.parametrize("n,d", [(1, 0), (1, 3), (2, 2), (3, 2), (3, 3)])
def test_basis_size_is_binomial(n, d):
    b = standard_basis(n, d)
    assert len(b) == basis_size(n, d)
    assert (0,) * n in b.entries


def test_expand_identity():
    g = GramForm(standard_basis(1, 1), np.eye(2))
    assert expand(g, X1) == parse("1 + x1^2", X1)


def test_expand_rank_one_square():
    g = GramForm(standard_basis(1, 1), np.ones((2, 2)))
    assert expand(g, X1) == parse("(1 + x1)^2", X1)


def test_expand_three_state_certificate():
    Q = np.diag([7.9999, -0.2850, -0.5652, -1.2828])
    Q[1, 2] = Q[2, 1] = -0.33425
    h = expand(GramForm(standard_basis(3, 1), Q), X123)
    expected = parse("7.9999 - 1.2828*x3^2 - 0.2850*x1^2 - 0.5652*x2^2 - 0.6685*x1*x2", X123)
    assert h.allclose(expected, atol=1e-12)


def test_coefficient_map_pairs():
    cmap = standard_basis(1, 1).coefficient_map
    assert cmap.pairs[(2,)] == [(1, 1)]
    assert sorted(cmap.pairs[(1,)]) == [(0, 1), (1, 0)]
    cmap2 = standard_basis(2, 1).coefficient_map
    assert sorted(cmap2.pairs[(1, 1)]) == [(1, 2), (2, 1)]


def test_coefficient_map_matches_direct_expansion(rng):
    basis = standard_basis(2, 2)
    M = rng.normal(size=(6, 6))
    Q = M + M.T
    coefs = basis.coefficient_map.apply(Q)
    # direct expansion: sum_ij Q_ij z_i z_j evaluated at random points
    Z = basis.evaluate(rng.normal(size=(50, 2)))
    X = rng.normal(size=(50, 2))
    Z = basis.evaluate(X)
    direct = np.einsum("ki,ij,kj->k", Z, Q, Z)
    from pbcert.polynomial import Polynomial

    via_map = Polynomial(coefs, X12).evaluate(X)
    np.testing.assert_allclose(via_map, direct, rtol=1e-12, atol=1e-12)


def test_trace_examples():
    assert trace(GramForm(standard_basis(2, 1), np.eye(3))) == 3.0
    assert trace(GramForm(standard_basis(2, 1), np.zeros((3, 3)))) == 0.0
    Q = np.diag([7.9999, -0.2850, -0.5652, -1.2828])
    Q[1, 2] = Q[2, 1] = -0.33425
    assert trace(GramForm(standard_basis(3, 1), Q)) == pytest.approx(5.8669, abs=1e-12)


def test_gram_is_symmetrized_from_upper_triangle():
    Q = np.array([[1.0, 2.0], [5.0, 3.0]])
    g = GramForm(standard_basis(1, 1), Q)
    assert np.array_equal(g.Q, g.Q.T)
    assert g.Q[1, 0] == 2.0


def test_gram_shape_mismatch():
    with pytest.raises(ValueError):
        GramForm(standard_basis(1, 1), np.eye(3))


def test_expand_is_linear(rng):
    basis = standard_basis(2, 2)
    A, B = rng.normal(size=(2, 6, 6))
    A, B = A + A.T, B + B.T
    lhs = expand(GramForm(basis, A + B), X12)
    rhs = expand(GramForm(basis, A), X12) + expand(GramForm(basis, B), X12)
    assert lhs.allclose(rhs, atol=1e-12)


def test_gram_non_uniqueness(rng):
    basis = standard_basis(1, 2)  # [1, x, x^2]
    M = rng.normal(size=(3, 3))
    Q = M + M.T
    base = expand(GramForm(basis, Q), X1)
    for lam in rng.normal(size=5):
        R = Q.copy()
        R[0, 2] += lam
        R[2, 0] += lam
        R[1, 1] -= 2 * lam
        assert expand(GramForm(basis, R), X1).allclose(base, atol=1e-12)


def test_psd_gram_expands_to_nonnegative(rng):
    basis = standard_basis(2, 2)
    for _ in range(10):
        M = rng.normal(size=(6, 3))
        p = expand(GramForm(basis, M @ M.T), X12)
        assert p.evaluate(rng.uniform(-5, 5, size=(1000, 2))).min() >= -1e-9


def test_canonical_gram_round_trip_and_trace():
    h = parse("1 + 2*x1 - 3*x1*x2 + 4*x2^2 - x1^2", X12)
    g = canonical_gram(h, standard_basis(2, 1))
    assert expand(g, X12).allclose(h, atol=1e-14)
    assert g.trace() == pytest.approx(1 + 4 - 1)


def test_canonical_gram_rejects_unrepresentable():
    with pytest.raises(ValueError):
        canonical_gram(parse("x1^3", X12), standard_basis(2, 1))


def test_vech_round_trip(rng):
    M = rng.normal(size=(4, 4))
    S = M + M.T
    np.testing.assert_array_equal(unvech(vech(S), 4), S)


def test_basis_rejects_duplicates():
    with pytest.raises(ValueError):
        MonomialBasis(((0,), (0,)), 1, 0)
