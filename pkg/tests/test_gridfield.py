from __future__ import annotations

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from devgrad.convex_projection import ConvexBody, project
from devgrad.gridfield import (
    GridError,
    GridField,
    JumpSpec,
    annulus_rule,
    blowup,
    blowup_study,
    body_mask,
    bump_kernel,
    commutation_residual,
    decay_check,
    density_ratio,
    fd_Ed,
    geometric_median,
    jump_tv_study,
    kernel_bounds,
    kernel_second_moment,
    mollify,
    nonlocal_identity_check,
    poincare_ratio_grid,
    quasi_continuity,
    scaling_mass_check,
    slab_excess_mass,
    smooth_bump_field,
    synthesize_jump,
)
from devgrad.kernel_space import random_killing
from devgrad.tensor_core import dev_dyad

LO, HI = (-1.0,) * 3, (1.0,) * 3
seeds = st.integers(min_value=0, max_value=2**31 - 1)
JUMP = JumpSpec((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), 0.0)


def killing_grid(seed, res=24):
    return GridField.from_function(random_killing(3, np.random.default_rng(seed)), LO, HI, res)


def test_grid_validation():
    with pytest.raises(GridError):
        GridField(np.zeros((4, 4, 4, 3)), LO, HI)
    with pytest.raises(GridError):
        GridField(np.zeros((8, 8, 8, 3)), LO, (1.0, -1.0, 1.0))
    with pytest.raises(GridError):
        JumpSpec((1.0, 1.0, 0.0), (0.0, 1.0, 0.0))


def test_save_load_roundtrip(tmp_path):
    g = GridField.from_function(smooth_bump_field(3), LO, HI, 10)
    g.save(tmp_path / "f.json")
    back = GridField.load(tmp_path / "f.json")
    assert np.array_equal(back.values, g.values) and back.lo == g.lo and back.hi == g.hi
    (tmp_path / "f.bin").write_bytes(b"\0" * 16)
    with pytest.raises(GridError):
        GridField.load(tmp_path / "f.json")


def test_fd_exact_on_quadratics():
    L = random_killing(3, np.random.default_rng(1))
    mu = fd_Ed(GridField.from_function(L, LO, HI, 16))
    assert mu.total_variation() <= 1e-10 * np.abs(L(np.zeros((1, 3)))).max() + 1e-12


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_killing_has_no_variation(seed):
    g = killing_grid(seed, 16)
    scale = float(np.mean(np.linalg.norm(g.values, axis=-1)))
    assert fd_Ed(g).total_variation() <= 1e-10 * scale


def test_constant_density_mass():
    g = GridField.from_function(lambda p: np.stack([p[..., 0], 0 * p[..., 0], 0 * p[..., 0]], -1), LO, HI, 16)
    # |dev_dyad(e1, e1)| = |diag(2/3, −1/3, −1/3)| = √(2/3), volume 8
    assert math.isclose(fd_Ed(g).total_variation(), math.sqrt(2 / 3) * 8, rel_tol=1e-12)


def test_jump_mass_is_exact_on_faces():
    assert math.isclose(JUMP.polar_norm(), 1 / math.sqrt(2), rel_tol=1e-15)
    for res in (16, 32):
        tv = fd_Ed(synthesize_jump(JUMP, LO, HI, res)).total_variation()
        assert abs(tv - 4 / math.sqrt(2)) < 1e-12


def test_jump_tv_study_small():
    out = jump_tv_study(JUMP, LO, HI, 16, 1)
    assert out["relative_error"] < 0.03
    assert out["observed_rate"] is None  # the grid mass is already exact


def test_slab_excess_mass_on_jump():
    g = synthesize_jump(JUMP, LO, HI, 32)
    h = g.spacing[0]
    out = slab_excess_mass(fd_Ed(g), (1, 0, 0), 0.0, 2 * h)
    assert math.isclose(out["excess"], 4 / math.sqrt(2), rel_tol=1e-12)
    assert out["background"] == 0.0


def test_mollify_killing_shift():
    L = random_killing(3, np.random.default_rng(2))
    g = GridField.from_function(L, LO, HI, 32)
    eps = 0.2
    m = mollify(g, eps)
    # ρ_ε * q = q + ½ m₂ Δq for quadratic q; Δ of the conformal part is (2 − n)s
    shift = 0.5 * kernel_second_moment(eps, g.spacing) * (2 - 3) * np.asarray(L.s, dtype=float)
    r = int(math.ceil(eps / g.spacing[0])) + 1
    sl = (slice(r, -r),) * 3
    assert np.max(np.abs(m.values[sl] - g.values[sl] - shift)) < 1e-12
    with pytest.raises(GridError):
        mollify(g, g.spacing[0])


def test_bump_kernel_normalised_and_symmetric():
    k = bump_kernel(0.3, np.array([0.1, 0.1, 0.1]))
    assert math.isclose(k.sum(), 1.0)
    assert np.allclose(k, k[::-1, ::-1, ::-1])


def test_commutation():
    g = GridField.from_function(smooth_bump_field(3), LO, HI, 24)
    out = commutation_residual(g, 0.2)
    assert out["l1"] <= 1e-12 * out["reference_l1"]


def test_density_ratio():
    g = synthesize_jump(JUMP, LO, HI, 64)
    target = JUMP.polar_norm() * math.pi
    assert abs(density_ratio(g, np.zeros(3), 0.5) - target) <= 0.02 * target
    smooth = GridField.from_function(smooth_bump_field(3), LO, HI, 32)
    r = [density_ratio(smooth, np.array([0.1, 0, 0]), s) for s in (0.4, 0.2, 0.1)]
    slope = np.polyfit(np.log([0.4, 0.2, 0.1]), np.log(r), 1)[0]
    assert 0.8 < slope < 1.2
    assert density_ratio(killing_grid(3), np.zeros(3), 0.3) < 1e-12


def test_blowup_of_jump():
    out = blowup_study(JUMP, np.zeros(3), ConvexBody.ball(3), resolution=32, eps=(0.4, 0.2), blow_resolution=16)
    assert out["relative_l1_to_limit"][0] < 0.05
    assert out["blowup_of_blowup"] < 0.05


def test_blowup_smooth_is_affine():
    # limit: y ↦ (Ey − ℛ_K[Ey])/|E| with E = ℰ_d u(x), reached at rate ~ε
    f = smooth_bump_field(3)
    x = np.array([0.1, 0.0, 0.0])
    h = 1e-5
    J = np.stack([(f(x + h * e) - f(x - h * e)) / (2 * h) for e in np.eye(3)], axis=-1)
    E = 0.5 * (J + J.T) - np.trace(J) / 3 * np.eye(3)

    class Linear:
        def evaluate(self, y):
            return np.asarray(y) @ E.T

        def jacobian(self, y):
            return np.broadcast_to(E, np.shape(y)[:-1] + (3, 3))

    K = ConvexBody.ball(3)
    R = project(K, Linear())
    g = GridField.from_function(f, LO, HI, 64)
    errs = []
    for eps in (0.2, 0.1):
        b = blowup(g, K, x, eps, resolution=16)
        lim = (Linear().evaluate(b.coords()) - R.evaluate(b.coords())) / np.linalg.norm(E)
        m = body_mask(b, K)
        errs.append(float(np.abs(b.values - lim)[m].max()))
    assert errs[1] < 0.6 * errs[0]
    assert errs[1] < 0.1


def test_annulus_rule_volume():
    pts, w = annulus_rule(3, 0.2, 0.8)
    assert math.isclose(w.sum(), 4 * math.pi / 3 * (0.8**3 - 0.2**3), rel_tol=1e-12)
    r = np.linalg.norm(pts, axis=1)
    assert r.min() >= 0.2 and r.max() <= 0.8


def test_nonlocal_killing_both_sides_zero():
    g = killing_grid(4, 32)
    out = nonlocal_identity_check(g, 0.2, 0.8, np.zeros(3))
    for v in out.values():
        assert v["integral_norm"] < 1e-12
        assert v["relative"] < 1e-4  # spline interpolation error of the sampled quadratic


def test_nonlocal_bump_coarse():
    g = GridField.from_function(smooth_bump_field(3), LO, HI, 32)
    out = nonlocal_identity_check(g, 0.2, 0.8, np.zeros(3))
    for v in out.values():
        assert v["relative"] < 5e-3


def test_nonlocal_rejects_bad_annulus():
    g = killing_grid(5, 16)
    with pytest.raises(GridError):
        nonlocal_identity_check(g, 0.5, 0.3, np.zeros(3))
    with pytest.raises(GridError):
        nonlocal_identity_check(g, 0.2, 1.5, np.zeros(3))


def test_kernel_bounds_scale_free():
    out = kernel_bounds(3, samples=2000)
    for sups in out.values():
        assert np.all(np.isfinite(sups))
        assert max(sups) - min(sups) < 1e-12 * max(sups)


def test_decay_smooth():
    g = GridField.from_function(smooth_bump_field(3), LO, HI, 32)
    out = decay_check(g, np.array([0.1, -0.05, 0.2]))
    assert all(s >= 0.9 for s in out["slopes"].values())
    assert out["quasi_continuity_decreasing"]


def test_decay_killing_vanishes():
    L = random_killing(3, np.random.default_rng(6))
    x = np.array([0.1, -0.05, 0.2])
    out = decay_check(L, x, subtract_kernel=True)
    assert all(s is None for s in out["slopes"].values())
    g = GridField.from_function(L, LO, HI, 32)
    out = decay_check(g, x, subtract_kernel=True)
    assert max(max(v) for v in out["quantities"].values()) < 1e-7


def test_quasi_continuity_and_median():
    X = np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0], [10.0, 10.0]])
    m = geometric_median(X, np.ones(4))
    assert np.linalg.norm(m - [1 / 3, 1 / 3]) < 0.5
    f = smooth_bump_field(3)
    q = [quasi_continuity(f, np.zeros(3), r) for r in (0.2, 0.1, 0.05)]
    assert q[0] > q[1] > q[2] > 0
    c = np.array([1.0, -2.0, 0.5])
    assert quasi_continuity(lambda p: np.broadcast_to(c, p.shape), np.zeros(3), 0.3) < 1e-12


def test_poincare_grid():
    K = ConvexBody.ball(3, 0.8)
    assert poincare_ratio_grid(K, killing_grid(7, 24)) == 0.0
    r = poincare_ratio_grid(K, GridField.from_function(smooth_bump_field(3), LO, HI, 24))
    assert 0 < r < math.inf


def test_scaling_mass_identity():
    g = GridField.from_function(smooth_bump_field(3), LO, HI, 32)
    out = scaling_mass_check(g, np.array([0.1, 0.0, 0.0]), 0.5, ConvexBody.ball(3), 32)
    assert out["relative"] < 0.01


def test_jump_polar_matches_dev_dyad():
    spec = JumpSpec((0.0, 0.0, 1.0), (1.0, 2.0, 0.0))
    assert math.isclose(spec.polar_norm(), np.linalg.norm(dev_dyad(np.array([1.0, 2, 0]), np.array([0.0, 0, 1]))))
