from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devgrad.tensor_core import (
    TensorError,
    as_array,
    cartan_decompose,
    dev_dyad,
    frobenius_inner,
    matrix_from_json,
    matrix_to_json,
    sym_dyad,
    symbol_A,
    symbol_Ed,
    symbol_SV,
)

E = np.eye(3)
small = st.fractions(min_value=-5, max_value=5, max_denominator=7)


def fvec(n):
    return st.lists(small, min_size=n, max_size=n).map(lambda v: as_array(v, exact=True))


def test_cartan_identity():
    p = cartan_decompose(np.eye(3))
    assert np.all(p.dev_sym == 0) and np.all(p.skew == 0) and p.dilation == 1


def test_cartan_rank_one():
    T = np.outer(E[0], E[1])
    p = cartan_decompose(T)
    assert np.allclose(p.dev_sym, sym_dyad(E[0], E[1]))
    assert np.allclose(p.skew, (np.outer(E[0], E[1]) - np.outer(E[1], E[0])) / 2)
    assert p.dilation == 0


@settings(max_examples=40, deadline=None)
@given(st.lists(small, min_size=16, max_size=16))
def test_cartan_exact_reconstruction(vals):
    T = as_array(vals, exact=True).reshape(4, 4)
    p = cartan_decompose(T)
    assert np.all(p.reconstruct() == T)
    I = as_array([[Fraction(int(i == j)) for j in range(4)] for i in range(4)], exact=True)
    assert frobenius_inner(p.dev_sym, p.skew) == 0
    assert frobenius_inner(p.dev_sym, I) == 0
    assert frobenius_inner(p.skew, I) == 0


def test_cartan_rejects_non_square():
    with pytest.raises(TensorError):
        cartan_decompose(np.zeros((2, 3)))


def test_sym_dyad_examples():
    S = sym_dyad(E[0], E[1])
    expected = np.zeros((3, 3))
    expected[0, 1] = expected[1, 0] = 0.5
    assert np.array_equal(S, expected)
    assert np.array_equal(sym_dyad(E[0], E[0]), np.outer(E[0], E[0]))
    lam = np.sort(np.linalg.eigvalsh(sym_dyad([1.0, 1.0, 0.0], E[0])))
    r = np.sqrt(2)
    assert np.allclose(lam, sorted([(1 + r) / 2, (1 - r) / 2, 0.0]), atol=1e-14)


def test_sym_dyad_dimension_mismatch():
    with pytest.raises(TensorError):
        sym_dyad([1.0, 0.0], [1.0, 0.0, 0.0])


def test_dev_dyad_examples():
    assert np.array_equal(dev_dyad(E[0], E[1]), sym_dyad(E[0], E[1]))
    D = dev_dyad(as_array([1, 0, 0], exact=True), as_array([1, 0, 0], exact=True))
    assert D[0, 0] == Fraction(2, 3) and D[1, 1] == Fraction(-1, 3) and D[2, 2] == Fraction(-1, 3)
    assert all(D[i, j] == 0 for i in range(3) for j in range(3) if i != j)


@settings(max_examples=40, deadline=None)
@given(fvec(4), fvec(4))
def test_dev_dyad_properties(a, b):
    D = dev_dyad(a, b)
    assert np.all(D == D.T)
    assert np.trace(D) == 0
    assert np.all(dev_dyad(2 * a, b) == 2 * D)
    assert np.trace(sym_dyad(a, b)) == a @ b


def test_symbol_SV_hand_value():
    # (Mξ)⊗ξ + ξ⊗(Mξ) − tr(M) ξ⊗ξ − |ξ|² M with Mξ = 0, tr M = 1
    M = np.outer(E[1], E[1])
    expected = -np.outer(E[0], E[0]) - M
    assert np.array_equal(symbol_SV(E[0], M), expected)


@settings(max_examples=40, deadline=None)
@given(fvec(3), fvec(3))
def test_symbol_SV_kills_sym_dyad(v, xi):
    if all(x == 0 for x in xi):
        return
    assert np.all(symbol_SV(xi, sym_dyad(v, xi)) == 0)


def test_symbol_SV_homogeneity_and_zero_frequency():
    rng = np.random.default_rng(1)
    M = rng.standard_normal((3, 3))
    M = M + M.T
    xi = rng.standard_normal(3)
    assert np.allclose(symbol_SV(2 * xi, M), 4 * symbol_SV(xi, M))
    with pytest.raises(TensorError):
        symbol_SV(np.zeros(3), M)


@pytest.mark.parametrize("n", [3, 4, 5])
def test_symbol_A_kills_cone_exact(n):
    rng = np.random.default_rng(n)
    for _ in range(20):
        v = as_array([Fraction(int(x), 3) for x in rng.integers(-6, 7, n)], exact=True)
        xi = as_array([Fraction(int(x), 2) for x in rng.integers(-6, 7, n)], exact=True)
        if all(x == 0 for x in xi):
            continue
        assert np.all(symbol_A(xi, dev_dyad(v, xi)) == 0)


def test_symbol_A_hand_value():
    # ξ = e1: Mξ = 0 and ξᵗMξ = 0 for M = e2⊙e3, so the symbol is −M
    M = dev_dyad(E[1], E[2])
    out = symbol_A(E[0], M)
    assert np.array_equal(out, -M)
    assert np.any(out != 0)


def test_symbol_A_homogeneity_and_trace_free():
    rng = np.random.default_rng(2)
    M = dev_dyad(rng.standard_normal(4), rng.standard_normal(4)) + dev_dyad(rng.standard_normal(4),
                                                                               rng.standard_normal(4))
    xi = rng.standard_normal(4)
    out = symbol_A(xi, M)
    assert np.allclose(symbol_A(1.7 * xi, M), 1.7**4 * out)
    assert abs(np.trace(out)) < 1e-12 and np.allclose(out, out.T)


def test_symbol_A_rejects_bad_input():
    with pytest.raises(TensorError):
        symbol_A(E[0], np.eye(3))
    with pytest.raises(TensorError):
        symbol_A(E[0], np.outer(E[0], E[1]) - np.outer(E[1], E[0]) * 0.5)
    with pytest.raises(TensorError):
        symbol_A(np.zeros(3), dev_dyad(E[0], E[1]))


def test_symbol_Ed_matches_dev_dyad():
    assert np.array_equal(symbol_Ed(E[2], E[0]), dev_dyad(E[0], E[2]))


def test_matrix_json_roundtrip():
    M = as_array([[Fraction(1, 3), 2], [Fraction(-5, 7), 0]], exact=True)
    obj = matrix_to_json(M)
    assert obj["n"] == 2
    assert np.all(matrix_from_json(obj) == M)
    F = np.array([[0.25, -1.5], [3.0, 2.0]])
    assert np.array_equal(np.asarray(matrix_from_json(matrix_to_json(F)), dtype=float), F)
