from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devgrad.convex_projection import (
    BodyError,
    ConvexBody,
    Shifted,
    UnsupportedField,
    boundary_quadrature,
    coeff_A,
    coeff_b,
    coeff_gamma,
    coeff_s,
    coefficient_report,
    coefficients,
    poincare_ratio,
    project,
    scaling_check,
    sphere_rule,
    tau,
    tau_sobol_oracle,
    unit_ball_volume,
    volume_quadrature,
)
from devgrad.kernel_space import KillingField, random_killing
from devgrad.polyfield import random_vector_field

seeds = st.integers(min_value=0, max_value=2**31 - 1)
BALL = ConvexBody.ball(3)
CUBE = ConvexBody.cube(3)


class Field:
    """Float field with an analytic Jacobian."""

    def __init__(self, f, jac):
        self.f, self.jac = f, jac

    def evaluate(self, y):
        return self.f(np.asarray(y, dtype=float))

    def jacobian(self, y):
        return self.jac(np.asarray(y, dtype=float))


def linear(M):
    M = np.asarray(M, dtype=float)
    return Field(lambda y: y @ M.T, lambda y: np.broadcast_to(M, y.shape[:-1] + M.shape))


def constant(c):
    c = np.asarray(c, dtype=float)
    return Field(lambda y: np.broadcast_to(c, y.shape).copy(),
                 lambda y: np.zeros(y.shape[:-1] + (len(c), len(c))))


def conformal(s):
    return KillingField(np.zeros((len(s), len(s))), 0.0, np.asarray(s, dtype=float), np.zeros(len(s)))


def skew(seed, n=3):
    B = np.random.default_rng(seed).standard_normal((n, n))
    return B - B.T


def test_body_metrics():
    assert math.isclose(BALL.volume, 4 * math.pi / 3)
    assert math.isclose(CUBE.volume, 8.0) and math.isclose(CUBE.perimeter, 24.0)
    assert math.isclose(CUBE.diameter, 2 * math.sqrt(3)) and math.isclose(BALL.diameter, 2.0)
    assert math.isclose(unit_ball_volume(4), math.pi**2 / 2)
    with pytest.raises(BodyError):
        ConvexBody.ball(3, -1.0)
    K = ConvexBody.from_json({"kind": "box", "center": [0, 0, 1], "half_widths": [1, 2, 3]})
    assert ConvexBody.from_json(K.to_json()) == K


@pytest.mark.parametrize("n,order", [(3, 8), (4, 6), (5, 5)])
def test_sphere_rule_moments(n, order):
    pts, w = sphere_rule(n, order)
    area = n * unit_ball_volume(n)
    assert math.isclose(w.sum(), area, rel_tol=1e-12)
    # ∫ x_1² = area/n and ∫ x_1⁴ = 3 area/(n(n+2))
    assert math.isclose(w @ pts[:, 0] ** 2, area / n, rel_tol=1e-12)
    assert math.isclose(w @ pts[:, 0] ** 4, 3 * area / (n * (n + 2)), rel_tol=1e-12)
    assert abs(w @ pts[:, 1] ** 3) < 1e-12


@pytest.mark.parametrize("K", [BALL, CUBE, ConvexBody.box([1.0, 0.5, 2.0], [0.3, 0, -1]),
                               ConvexBody.ball(4, 0.7)])
def test_divergence_theorem_sanity(K):
    chk = boundary_quadrature(K).check()
    assert chk["perimeter_rel_err"] < 1e-12
    assert chk["divergence_rel_err"] < 1e-12


@pytest.mark.parametrize("n,rho", [(3, 1.0), (3, 0.5), (4, 2.0), (5, 1.0)])
def test_tau_ball(n, rho):
    T = tau(ConvexBody.ball(n, rho))
    assert np.max(np.abs(T - rho**2 * (n - 2) / (2 * n) * np.eye(n))) < 1e-10


def test_tau_cube_and_sobol_oracle():
    # per face ∫|y|² = 4 + 8/3 + ... gives trace (40/2)/24 so τ = 5/18 Id
    T = tau(CUBE)
    assert np.max(np.abs(T - 5 / 18 * np.eye(3))) < 1e-10
    S = tau_sobol_oracle(CUBE, points_per_face=2**14)
    assert np.max(np.abs(S - T)) < 1e-4
    with pytest.raises(BodyError):
        tau_sobol_oracle(BALL)


def test_tau_ball_exact_once_resolved():
    for order in (2, 3, 6):
        assert np.max(np.abs(tau(BALL, order) - np.eye(3) / 6)) < 1e-14


def test_sphere_rule_convergence_order():
    # ∫_{S²} exp(x1) = 4π sinh 1; the error must fall faster than (node count)⁻²
    exact = 4 * math.pi * math.sinh(1.0)
    counts, errs = [], []
    for order in (2, 3, 4):
        pts, w = sphere_rule(3, order)
        counts.append(len(w))
        errs.append(abs(w @ np.exp(pts[:, 0]) - exact))
    rates = -np.diff(np.log(errs)) / np.diff(np.log(counts))
    assert np.all(rates >= 2)


@pytest.mark.parametrize("K", [BALL, CUBE])
def test_coefficient_examples(K):
    A = skew(0)
    assert np.allclose(coeff_A(K, linear(A)), A, atol=1e-8)
    c = constant([1.0, -2.0, 0.5])
    assert np.allclose(coeff_A(K, c), 0, atol=1e-12)
    assert abs(coeff_gamma(K, c)) < 1e-12
    assert abs(coeff_gamma(K, linear(np.eye(3))) - 1) < 1e-12
    assert abs(coeff_gamma(K, linear(A))) < 1e-12
    B = conformal([0.4, -1.0, 2.0])
    assert np.allclose(coeff_A(K, B), 0, atol=1e-12)
    assert np.allclose(coeff_s(K, B), [0.4, -1.0, 2.0], atol=1e-10)
    M = A + 0.7 * np.eye(3)
    aff = Field(lambda y: y @ M.T + 1.0, lambda y: np.broadcast_to(M, y.shape[:-1] + (3, 3)))
    assert np.allclose(coeff_s(K, aff), 0, atol=1e-12)
    assert np.allclose(coeff_b(K, c), [1.0, -2.0, 0.5], atol=1e-12)
    assert np.allclose(coeff_b(K, B), 0, atol=1e-10)


def test_s_forms_agree_on_ball():
    rng = np.random.default_rng(3)
    u = random_vector_field(3, 3, rng)
    closed = coeff_s(BALL, u, form="closed")
    smooth = coeff_s(BALL, u, form="smooth")
    assert np.allclose(closed, smooth, atol=1e-10)
    with pytest.raises(UnsupportedField):
        coeff_s(CUBE, u, form="closed")


def test_sampled_field_on_box_unsupported():
    with pytest.raises(UnsupportedField):
        coeff_s(CUBE, lambda y: np.asarray(y) * 2.0)


@settings(max_examples=25, deadline=None)
@given(seeds, st.sampled_from(["ball", "cube", "box"]))
def test_fixed_point(seed, kind):
    rng = np.random.default_rng(seed)
    K = {"ball": BALL, "cube": CUBE, "box": ConvexBody.box([1.0, 0.6, 1.4], [0.2, -0.1, 0.5])}[kind]
    L = random_killing(3, rng)
    R = project(K, L).recentered(np.zeros(3))
    assert np.max(np.abs(R.parameters() - L.parameters())) < 1e-8


def test_fixed_point_n4():
    rng = np.random.default_rng(4)
    for K in (ConvexBody.ball(4), ConvexBody.cube(4, 0.5)):
        L = random_killing(4, rng)
        R = project(K, L).recentered(np.zeros(4))
        assert np.max(np.abs(R.parameters() - L.parameters())) < 1e-8


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_linearity(seed):
    rng = np.random.default_rng(seed)
    u1, u2 = random_vector_field(3, 3, rng), random_vector_field(3, 2, rng)
    p1 = project(BALL, u1).parameters()
    p2 = project(BALL, u2).parameters()
    both = Field(lambda y: u1.evaluate(y) + 2 * u2.evaluate(y), lambda y: u1.jacobian(y) + 2 * u2.jacobian(y))
    assert np.allclose(project(BALL, both).parameters(), p1 + 2 * p2, atol=1e-10)


@settings(max_examples=10, deadline=None)
@given(seeds, st.sampled_from(["ball", "cube"]))
def test_translation_equivariance(seed, kind):
    rng = np.random.default_rng(seed)
    K = BALL if kind == "ball" else CUBE
    u = random_vector_field(3, 3, rng)
    x0 = rng.standard_normal(3)
    R0 = project(K, u)
    R1 = project(K.translated(x0), Shifted(u, x0))
    pts = rng.standard_normal((6, 3))
    assert np.allclose(R1(pts + x0), R0(pts), atol=1e-9)


def test_scaling_law():
    rng = np.random.default_rng(5)
    u = random_vector_field(3, 4, rng)
    out = scaling_check(u, np.array([0.2, -0.1, 0.3]), 0.5, BALL)
    assert out["max_deviation"] <= 1e-8 and out["coefficient_deviation"] <= 1e-8
    ident = scaling_check(u, np.zeros(3), 1.0, BALL)
    assert ident["max_deviation"] == 0.0
    with pytest.raises(ValueError):
        scaling_check(u, np.zeros(3), 0.0, BALL)


def test_poincare_examples():
    rng = np.random.default_rng(6)
    assert poincare_ratio(BALL, random_killing(3, rng)) == 0.0
    r = poincare_ratio(BALL, random_vector_field(3, 3, rng))
    assert 0 < r < math.inf


def test_volume_quadrature_volume_and_moment():
    for K in (BALL, CUBE):
        pts, w = volume_quadrature(K)
        assert math.isclose(w.sum(), K.volume, rel_tol=1e-12)
    pts, w = volume_quadrature(BALL)
    assert math.isclose(w @ np.sum(pts**2, axis=1), 4 * math.pi / 5, rel_tol=1e-12)


def test_coefficient_report_has_metadata():
    rep = coefficient_report(BALL, random_vector_field(3, 2, np.random.default_rng(7)))
    assert rep["quadrature"]["nodes"] > 0
    assert rep["quadrature"]["estimated_error"] < 1e-10
    assert set(("s", "A", "gamma", "b", "tau")) <= set(rep)
    c = coefficients(BALL, random_killing(3, np.random.default_rng(8)))
    assert set(c.to_json()) == {"s", "A", "gamma", "b", "tau"}
