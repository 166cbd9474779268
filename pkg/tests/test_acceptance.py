from __future__ import annotations

import json
import math
import os
import subprocess
import sys
import time
from fractions import Fraction

import numpy as np

from devgrad.cli import main, random_nonparallel
from devgrad.convex_projection import ConvexBody, poincare_ratio, project, scaling_check, tau, tau_sobol_oracle
from devgrad.gridfield import (
    GridField,
    JumpSpec,
    decay_check,
    jump_tv_study,
    nonlocal_identity_check,
    scaling_mass_check,
    smooth_bump_field,
)
from devgrad.kernel_space import kernel_dimension, random_killing
from devgrad.polyfield import ed_kernel_nullity, identity_suite, random_vector_field
from devgrad.rigidity import InfeasibleQ, feasible_criterion, prop_identities, solve_Q
from devgrad.wavecone import dyad_eigenvalues, roundtrip_suite

LO, HI = (-1.0,) * 3, (1.0,) * 3


def cli_json(capsys, *argv):
    code = main(list(argv))
    return code, json.loads(capsys.readouterr().out)


def _identity_criterion(criterion, number, operator):
    t = time.perf_counter()
    bad = sum(identity_suite(n, 5, 100, seed=n, operator=operator)["nonzero_fields"] for n in (3, 4, 5))
    dt = time.perf_counter() - t
    criterion(number, bad == 0 and dt < 60, f"{operator}: {bad} nonzero of 300 fields, {dt:.1f}s")


def test_c01_annihilator(criterion):
    _identity_criterion(criterion, 1, "A")


def test_c02_saint_venant(criterion):
    _identity_criterion(criterion, 2, "SV")


def test_c03_kernel_dimension(criterion):
    got = [ed_kernel_nullity(n, 2) for n in (3, 4, 5)]
    want = [n * (n - 1) // 2 + 2 * n + 1 for n in (3, 4, 5)]
    ok = got == want == [10, 15, 21] and [kernel_dimension(n) for n in (3, 4, 5)] == want
    criterion(3, ok, f"nullity {got}")


def test_c04_wavecone_roundtrip(criterion):
    t = time.perf_counter()
    outs = [roundtrip_suite(n, 1000, seed=n) for n in (3, 4, 5, 6)]
    dt = time.perf_counter() - t
    worst = max(o["max_residual"] for o in outs)
    ok = all(o["pass"] for o in outs) and worst <= 1e-10 and dt < 30
    fails = sum(o["factorization_failures"] + o["perturbations_accepted"] for o in outs)
    criterion(4, ok, f"max residual {worst:.2e}, {fails} failures, {dt:.1f}s")


def test_c05_eigenvalue_lemma(criterion):
    rng = np.random.default_rng(5)
    worst = 0.0
    for k in range(10**4):
        n = int(rng.integers(2, 8))
        xi = rng.standard_normal(n)
        xi /= np.linalg.norm(xi)
        # every tenth pair is exactly parallel
        a = 2.5 * xi if k % 10 == 0 else rng.standard_normal(n)
        worst = max(worst, dyad_eigenvalues(a, xi).max_abs_diff)
    criterion(5, worst <= 1e-12, f"max |closed form − eigvalsh| {worst:.2e}")


def test_c06_projection_fixed_point(criterion):
    rng = np.random.default_rng(6)
    worst = 0.0
    for K in (ConvexBody.ball(3), ConvexBody.cube(3)):
        for _ in range(100):
            L = random_killing(3, rng)
            R = project(K, L).recentered(np.zeros(3))
            worst = max(worst, float(np.max(np.abs(R.parameters() - L.parameters()))))
    tau_ball = max(float(np.max(np.abs(tau(ConvexBody.ball(n, r)) - r**2 * (n - 2) / (2 * n) * np.eye(n))))
                   for n, r in ((3, 1.0), (3, 0.3), (4, 1.5), (5, 1.0)))
    T = tau(ConvexBody.cube(3))
    tau_cube = float(np.max(np.abs(T - 5 / 18 * np.eye(3))))
    mc = float(np.max(np.abs(tau_sobol_oracle(ConvexBody.cube(3)) - T)))
    ok = worst <= 1e-8 and tau_ball <= 1e-10 and tau_cube <= 1e-10 and mc <= 1e-4
    criterion(6, ok, f"params {worst:.1e}, tau ball {tau_ball:.1e}, cube {tau_cube:.1e}, sampled {mc:.1e}")


def test_c07_scaling(criterion):
    rng = np.random.default_rng(7)
    worst = 0.0
    for deg in (1, 2, 3, 4):
        for K in (ConvexBody.ball(3), ConvexBody.cube(3)):
            out = scaling_check(random_vector_field(3, deg, rng), rng.uniform(-0.3, 0.3, 3), 0.5, K)
            worst = max(worst, out["max_deviation"], out["coefficient_deviation"])
    g = GridField.from_function(smooth_bump_field(3), LO, HI, 64)
    mass = scaling_mass_check(g, np.array([0.1, 0.0, 0.0]), 0.5, ConvexBody.ball(3), 64)["relative"]
    criterion(7, worst <= 1e-8 and mass <= 0.01, f"rescaling {worst:.1e}, grid mass {mass:.2%}")


def test_c08_polynomial_remainder(criterion, capsys):
    rng = np.random.default_rng(8)
    bad_ident = mismatch = solved = 0
    for k in range(1000):
        alpha = Fraction(int(rng.integers(-4, 5)), int(rng.integers(1, 4)))
        beta = Fraction(int(rng.integers(1, 5)), int(rng.integers(1, 4)))
        theta = Fraction(int(rng.integers(-4, 5)), int(rng.integers(1, 4)))
        eta = 2 * alpha * theta / beta**2 if k % 2 == 0 else Fraction(int(rng.integers(-4, 5)), 3)
        a = [Fraction(1), Fraction(0), Fraction(0), Fraction(0)]
        b = [alpha, beta, Fraction(0), Fraction(0)]
        predicted = eta * beta**2 == 2 * alpha * theta
        assert feasible_criterion(4, alpha, beta, eta, theta) == predicted
        try:
            Q = solve_Q(a, b, [0] * 4, eta, theta)
        except InfeasibleQ:
            mismatch += predicted
            continue
        solved += 1
        mismatch += not predicted
        bad_ident += not prop_identities(Q, a, b, eta, theta)["ok"]
    for n in (3, 5):
        code, rep = cli_json(capsys, "rigidity", "solve-q", "--n", str(n), "--trials", "50", "--seed", "8")
        bad_ident += code != 0
    ok = mismatch == 0 and bad_ident == 0
    criterion(8, ok, f"n=4: {mismatch} mismatches over 1000 ({solved} feasible), {bad_ident} identity failures")


def test_c09_rigidity_forward(criterion, capsys):
    bad = []
    for n in (3, 4):
        code, rep = cli_json(capsys, "rigidity", "check", "--n", str(n), "--trials", "20", "--seed", "9")
        bad += [c for c in rep["checks"] if not c["pass"]]
    criterion(9, not bad, f"{len(bad)} failing checks over 40 built profiles")


def test_c10_poincare(criterion):
    rng = np.random.default_rng(0)
    K = ConvexBody.ball(3)
    maxima = []
    finite = True
    for deg in range(1, 6):
        r = [poincare_ratio(K, random_vector_field(3, deg, rng)) for _ in range(40)]
        finite &= all(math.isfinite(x) and x > 0 for x in r)
        maxima.append(max(r))
    mean = float(np.mean(maxima))
    spread = max(abs(m - mean) / mean for m in maxima)
    killing = max(poincare_ratio(K, random_killing(3, rng)) for _ in range(10))
    ok = finite and spread <= 0.10 and killing == 0.0
    criterion(10, ok, f"per-degree maxima {np.round(maxima, 4).tolist()}, spread {spread:.1%}, Killing {killing}")


def test_c11_jump_tv(criterion):
    t = time.perf_counter()
    out = jump_tv_study(JumpSpec((1.0, 0.0, 0.0), (0.0, 1.0, 0.0), 0.0), LO, HI, 64, 1)
    dt = time.perf_counter() - t
    ok = out["relative_error"] <= 0.03 and dt < 120 and math.isclose(out["exact"], 4 / math.sqrt(2))
    criterion(11, ok, f"relative error {out['relative_error']:.1e}, {dt:.1f}s")


def test_c12_nonlocal(criterion):
    f = smooth_bump_field(3)
    res = {}
    for N in (32, 64):
        res[N] = nonlocal_identity_check(GridField.from_function(f, LO, HI, N), 0.2, 0.8, np.zeros(3))
    fine = max(v["relative"] for v in res[64].values())
    decreasing = all(res[64][k]["relative"] < res[32][k]["relative"] for k in res[64])
    criterion(12, fine <= 1e-3 and decreasing,
              f"64³ max relative {fine:.1e}, 32³ {max(v['relative'] for v in res[32].values()):.1e}")


def test_c13_decay(criterion):
    x = np.array([0.1, -0.05, 0.2])
    outs = [decay_check(GridField.from_function(smooth_bump_field(3), LO, HI, 64), x, levels=5),
            decay_check(random_vector_field(3, 4, np.random.default_rng(13)), x, levels=5)]
    slopes = [s for o in outs for s in o["slopes"].values()]
    ok = all(s is not None and s >= 0.9 for s in slopes) and all(o["quasi_continuity_decreasing"] for o in outs)
    criterion(13, ok, f"min slope {min(s for s in slopes if s is not None):.3f}")


def _profile_file(tmp_path):
    p = random_nonparallel(3, np.random.default_rng(14))
    f = tmp_path / "profile.json"
    f.write_text(json.dumps(p.to_json()))
    return f


def test_c14_determinism(criterion, tmp_path):
    prof = _profile_file(tmp_path)
    commands = [
        ["verify-annihilator", "--degree", "3", "--trials", "5"],
        ["wavecone", "--n", "4", "--trials", "50"],
        ["project", "--body", "cube", "--trials", "10"],
        ["rigidity", "build", "--in", str(prof)],
        ["rigidity", "check", "--trials", "4"],
        ["rigidity", "solve-q", "--n", "4", "--trials", "20"],
        ["rigidity", "fit", "--grid", "24"],
        ["grid", "tv", "--grid", "16"],
        ["grid", "blowup", "--grid", "16"],
        ["grid", "nonlocal", "--grid", "16"],
        ["grid", "decay", "--grid", "16"],
        ["grid", "poincare", "--grid", "16"],
    ]
    differing = []
    for argv in commands:
        outs = []
        for threads in ("1", "4", "4"):
            env = dict(os.environ, DEVGRAD_THREADS=threads)
            proc = subprocess.run([sys.executable, "-m", "devgrad", *argv, "--seed", "3"], env=env,
                                  capture_output=True, timeout=300)
            outs.append((proc.returncode, proc.stdout))
        if not outs[0][1] or len(set(outs)) != 1:
            differing.append(" ".join(argv[:2]))
    criterion(14, not differing, f"{len(commands)} commands x 3 runs, differing: {differing or 'none'}")
