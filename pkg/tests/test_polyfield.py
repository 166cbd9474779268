from __future__ import annotations

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devgrad.kernel_space import kernel_dimension, random_killing
from devgrad.polyfield import (
    PolyError,
    PolyMatrixField,
    PolyVectorField,
    RationalPoly,
    divergence_adjoint,
    ed_kernel_nullity,
    gradient,
    identity_suite,
    leibniz_residual,
    op_A,
    op_A_remark,
    op_E,
    op_Ed,
    op_SV,
    op_W,
    random_poly,
    random_sym_trace_free_field,
    random_vector_field,
    skew_gradient_residual,
)
from devgrad.tensor_core import dev_dyad

X = [RationalPoly.variable(3, i) for i in range(3)]
ZERO3 = RationalPoly.zero(3)
seeds = st.integers(min_value=0, max_value=2**31 - 1)


def const_matrix(M, n=3):
    return PolyMatrixField.constant(np.asarray(M, dtype=object), n)


def assert_zero(F):
    assert F.is_zero()


def test_arithmetic_and_evaluation():
    p = X[0] * X[0] * Fraction(3, 2) - X[1] + 4
    assert p.degree() == 2
    assert p([Fraction(2), Fraction(1), Fraction(0)]) == 9
    assert np.allclose(p.evaluate(np.array([[2.0, 1.0, 0.0], [0.0, 0.0, 5.0]])), [9.0, 4.0])
    assert p.diff(0).diff(0) == RationalPoly.constant(3, 3)
    assert p.laplacian() == RationalPoly.constant(3, 3)


def test_poly_json_roundtrip():
    rng = np.random.default_rng(0)
    u = random_vector_field(3, 3, rng)
    assert PolyVectorField.from_json(u.to_json()).components == u.components
    with pytest.raises(PolyError):
        RationalPoly.from_json(3, [{"exps": [1, 0, 0]}])


def test_gradient_examples():
    A = [[0, 2, -1], [-2, 0, 3], [1, -3, 0]]
    u = PolyVectorField([sum((X[j] * A[i][j] for j in range(3)), ZERO3) for i in range(3)])
    assert_zero(op_E(u))
    x = PolyVectorField(X)
    assert op_E(x).entries == const_matrix(np.eye(3, dtype=int)).entries
    u2 = PolyVectorField([X[0] * X[0], ZERO3, ZERO3])
    G = gradient(u2)
    assert G[0, 0] == X[0] * 2
    assert all(G[i, j].is_zero() for i in range(3) for j in range(3) if (i, j) != (0, 0))


def test_op_Ed_examples():
    rng = np.random.default_rng(3)
    L = random_killing(3, rng, exact=True)
    assert_zero(op_Ed(L.to_polyfield()))
    assert_zero(op_Ed(PolyVectorField(X)))
    u = PolyVectorField([X[1], ZERO3, ZERO3])
    D = dev_dyad(np.array([Fraction(1), 0, 0], dtype=object), np.array([0, Fraction(1), 0], dtype=object))
    assert op_Ed(u).entries == const_matrix(D).entries


def test_op_W_examples():
    A = [[0, 2, -1], [-2, 0, 3], [1, -3, 0]]
    u = PolyVectorField([sum((X[j] * A[i][j] for j in range(3)), ZERO3) for i in range(3)])
    W = op_W(u)
    # (Wu)_ij = (∂_j u_i − ∂_i u_j)/2 = A_ij for skew A
    assert W.entries == const_matrix(np.array(A, dtype=object)).entries
    phi = X[0] * X[1] * X[2] + X[0] * X[0] * X[0]
    assert_zero(op_W(phi.gradient()))


def test_op_SV_examples():
    rng = np.random.default_rng(4)
    assert_zero(op_SV(op_E(random_vector_field(3, 5, rng))))
    e22 = np.zeros((3, 3), dtype=object)
    e22[1, 1] = Fraction(1)
    # a second-order operator annihilates the linear density x1, so the degree is raised
    assert_zero(op_SV(PolyMatrixField.scalar_times(X[0], e22)))
    assert not op_SV(PolyMatrixField.scalar_times(X[0] * X[0], e22)).is_zero()
    assert_zero(op_SV(const_matrix(e22)))


def test_op_SV_hand_value():
    # SV(M)_ij = ∂_ik M_kj + ∂_jk M_ki − ∂_ij tr M − ΔM_ij; M = x1² e2⊗e2 gives
    # −∂_11 tr M in the (1,1) slot and −ΔM = −2 in the (2,2) slot
    e22 = np.zeros((3, 3), dtype=object)
    e22[1, 1] = Fraction(1)
    S = op_SV(PolyMatrixField.scalar_times(X[0] * X[0], e22))
    assert S[0, 0] == RationalPoly.constant(3, -2)
    assert S[1, 1] == RationalPoly.constant(3, -2)
    assert all(S[i, j].is_zero() for i in range(3) for j in range(3) if (i, j) not in ((0, 0), (1, 1)))


def test_op_A_examples():
    e1 = np.array([Fraction(1), 0, 0], dtype=object)
    e2 = np.array([0, Fraction(1), 0], dtype=object)
    e3 = np.array([0, 0, Fraction(1)], dtype=object)
    # fourth order: x1² is annihilated, x1⁴ is not
    assert_zero(op_A(PolyMatrixField.scalar_times(X[0] * X[0], dev_dyad(e2, e3))))
    F = PolyMatrixField.scalar_times(X[0] * X[0] * X[0] * X[0], dev_dyad(e2, e3))
    out = op_A(F)
    assert not out.is_zero()
    # M ξ and ξᵗMξ only see ∂₂, ∂₃, which kill φ(x1); what is left is −Δ²φ M = −24 M
    assert out.entries == const_matrix(-24 * dev_dyad(e2, e3)).entries
    assert out.entries == op_A_remark(F).entries
    assert_zero(op_A(const_matrix(dev_dyad(e1, e2))))


def test_op_A_rejects_non_trace_free():
    with pytest.raises(PolyError):
        op_A(const_matrix(np.eye(3, dtype=int)))


@settings(max_examples=15, deadline=None)
@given(seeds, st.integers(min_value=3, max_value=4))
def test_annihilator_identity_property(seed, n):
    rng = np.random.default_rng(seed)
    u = random_vector_field(n, 4, rng, density=0.6)
    assert_zero(op_A(op_Ed(u)))
    assert_zero(op_SV(op_E(u)))


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_two_annihilator_forms_agree(seed):
    rng = np.random.default_rng(seed)
    F = random_sym_trace_free_field(3, 4, rng, density=0.5)
    assert op_A(F).entries == op_A_remark(F).entries


def test_leibniz_examples():
    rng = np.random.default_rng(5)
    u = random_vector_field(3, 2, rng)
    assert_zero(leibniz_residual(RationalPoly.constant(3, 1), u))
    e2 = PolyVectorField([ZERO3, RationalPoly.constant(3, 1), ZERO3])
    assert_zero(leibniz_residual(X[0], e2))
    assert_zero(op_Ed(e2))
    assert not op_Ed(e2.map(lambda c: X[0] * c)).is_zero()


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_leibniz_property(seed):
    rng = np.random.default_rng(seed)
    phi = random_poly(4, 3, rng, density=0.5)
    u = random_vector_field(4, 3, rng, density=0.5)
    assert_zero(leibniz_residual(phi, u))


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_skew_gradient_identity(seed):
    rng = np.random.default_rng(seed)
    u = random_vector_field(3, 3, rng)
    for row in skew_gradient_residual(u):
        for r in row:
            assert r.is_zero()


def test_divergence_adjoint_examples():
    e1 = np.array([Fraction(1), 0, 0], dtype=object)
    F = PolyMatrixField.scalar_times(X[0], dev_dyad(e1, e1))
    out = divergence_adjoint(F)
    assert out[0] == RationalPoly.constant(3, Fraction(2, 3))
    assert out[1].is_zero() and out[2].is_zero()
    assert divergence_adjoint(const_matrix(dev_dyad(e1, e1))).is_zero()


@pytest.mark.parametrize("n", [3, 4, 5])
def test_kernel_nullity_matches_parameter_count(n):
    assert ed_kernel_nullity(n) == kernel_dimension(n)


def test_identity_suite_and_n2():
    out = identity_suite(3, 3, 5, seed=1)
    assert out["pass"] and out["nonzero_fields"] == 0
    assert identity_suite(3, 3, 5, seed=1, operator="SV")["pass"]
    with pytest.raises(PolyError, match="C-elliptic"):
        identity_suite(2, 3, 5)


def test_ed_nullity_n2_is_larger():
    # without C-ellipticity the kernel already outgrows the n = 2 parameter count at degree 3
    assert ed_kernel_nullity(2, 3) > ed_kernel_nullity(2, 2)
