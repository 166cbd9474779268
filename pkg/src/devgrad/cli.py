"""Command-line front end: verification suites and computations with JSON or CSV reports.

Every report lists checks as (value, tolerance, relation, pass) and the tool
decides the verdict. Exit codes: 0 all checks pass, 1 a check failed,
2 usage or input error. Floats are written with 10 significant digits so
that reports are byte-identical across runs and thread counts.
"""

from __future__ import annotations

import os

_THREADS = os.environ.get("DEVGRAD_THREADS")
if _THREADS:
    for _var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        os.environ[_var] = _THREADS

import argparse  # noqa: E402
import csv  # noqa: E402
import io  # noqa: E402
import json  # noqa: E402
import math  # noqa: E402
import sys  # noqa: E402
from fractions import Fraction  # noqa: E402
from pathlib import Path  # noqa: E402

import numpy as np  # noqa: E402

from . import convex_projection as cp  # noqa: E402
from . import gridfield as gf  # noqa: E402
from . import rigidity as rg  # noqa: E402
from .kernel_space import KillingField, random_killing  # noqa: E402
from .polyfield import PolyError, PolyVectorField, identity_suite  # noqa: E402
from .tensor_core import TensorError, matrix_from_json  # noqa: E402
from .wavecone import membership, roundtrip_suite  # noqa: E402

N2_MESSAGE = ("n = 2 is refused: ℰ_d is not C-elliptic in two dimensions, its kernel is infinite "
              "dimensional and the fourth-order annihilator degenerates")
N4_GRID_CAP = 24


class UsageError(Exception):
    pass


# reports


def _clean(x):
    if isinstance(x, dict):
        return {str(k): _clean(v) for k, v in x.items()}
    if isinstance(x, (list, tuple)):
        return [_clean(v) for v in x]
    if isinstance(x, np.ndarray):
        return _clean(x.tolist())
    if isinstance(x, (bool, np.bool_)):
        return bool(x)
    if isinstance(x, (int, np.integer)):
        return int(x)
    if isinstance(x, Fraction):
        return f"{x.numerator}/{x.denominator}"
    if isinstance(x, (float, np.floating)):
        x = float(x)
        if math.isnan(x):
            return "nan"
        if math.isinf(x):
            return "inf" if x > 0 else "-inf"
        if x == 0.0:
            return 0.0
        return float(f"{x:.10g}")
    return x


class Report:
    def __init__(self, command: str, config: dict):
        self.command = command
        self.config = config
        self.checks: list = []
        self.result: dict = {}

    def check(self, name: str, value, tolerance, relation: str = "<="):
        if relation == "<=":
            ok = value <= tolerance
        elif relation == ">=":
            ok = value >= tolerance
        elif relation == "==":
            ok = value == tolerance
        elif relation == "<":
            ok = value < tolerance
        else:
            raise ValueError(relation)
        if isinstance(value, float) and math.isnan(value):
            ok = False
        self.checks.append({"name": name, "value": value, "tolerance": tolerance, "relation": relation,
                            "pass": bool(ok)})

    @property
    def passed(self) -> bool:
        return all(c["pass"] for c in self.checks)

    def to_dict(self) -> dict:
        return _clean({"command": self.command, "config": self.config, "checks": self.checks,
                       "result": self.result, "pass": self.passed})

    def render(self, fmt: str) -> str:
        d = self.to_dict()
        if fmt == "json":
            return json.dumps(d, indent=2, sort_keys=True, ensure_ascii=False) + "\n"
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["command", "check", "value", "relation", "tolerance", "pass"])
        for c in d["checks"]:
            w.writerow([d["command"], c["name"], json.dumps(c["value"]), c["relation"],
                        json.dumps(c["tolerance"]), "PASS" if c["pass"] else "FAIL"])
        w.writerow([d["command"], "overall", "", "", "", "PASS" if d["pass"] else "FAIL"])
        return buf.getvalue()


# input helpers


def _read_json(path):
    if path is None:
        raise UsageError("--in is required for this command")
    try:
        return json.loads(Path(path).read_text())
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise UsageError(f"malformed JSON in {path}: {exc}") from exc


def _check_n(n: int):
    if n == 2:
        raise UsageError(N2_MESSAGE)
    if n < 3:
        raise UsageError("n must be at least 3")


def _check_trials(trials: int):
    if trials < 1:
        raise UsageError("--trials must be a positive integer")


def _check_grid(n: int, grid: int):
    if grid < gf.MIN_RESOLUTION:
        raise UsageError(f"--grid must be at least {gf.MIN_RESOLUTION}")
    if n >= 4 and grid > N4_GRID_CAP:
        raise UsageError(f"grids in n >= 4 are capped at {N4_GRID_CAP} cells per axis")


def _vector(text: str, n: int | None = None) -> list:
    try:
        v = [Fraction(t.strip()) for t in text.split(",")]
    except (ValueError, ZeroDivisionError) as exc:
        raise UsageError(f"cannot parse vector {text!r}") from exc
    if n is not None and len(v) != n:
        raise UsageError(f"vector {text!r} must have {n} entries")
    return v


def _body(spec, n: int) -> cp.ConvexBody:
    if spec is None or spec == "ball":
        return cp.ConvexBody.ball(n)
    if spec == "cube":
        return cp.ConvexBody.cube(n)
    obj = _read_json(spec)
    try:
        return cp.ConvexBody.from_json(obj)
    except (cp.BodyError, TypeError, ValueError) as exc:
        raise UsageError(str(exc)) from exc


def _field(path):
    """Polynomial field JSON, Killing JSON, or a grid sidecar (.json next to a .bin)."""
    obj = _read_json(path)
    if not isinstance(obj, dict):
        raise UsageError("field JSON must be an object")
    try:
        if "resolution" in obj:
            return gf.GridField.load(path)
        if "A_upper" in obj:
            return KillingField.from_json(obj)
        return PolyVectorField.from_json(obj)
    except (gf.GridError, TensorError, PolyError, KeyError, TypeError, ValueError) as exc:
        raise UsageError(f"unreadable field: {exc}") from exc


# commands


def cmd_verify_annihilator(args) -> Report:
    _check_n(args.n)
    _check_trials(args.trials)
    if args.degree < 0:
        raise UsageError("--degree must be non-negative")
    rep = Report("verify-annihilator", {"n": args.n, "degree": args.degree, "trials": args.trials,
                                        "seed": args.seed, "operator": args.operator})
    out = identity_suite(args.n, args.degree, args.trials, args.seed, args.operator)
    rep.result = out
    rep.check("nonzero_fields", out["nonzero_fields"], 0, "==")
    return rep


def cmd_wavecone(args) -> Report:
    tol = args.tol if args.tol is not None else 1e-10
    if args.infile is None:
        _check_n(args.n)
        _check_trials(args.trials)
        rep = Report("wavecone", {"n": args.n, "trials": args.trials, "seed": args.seed, "tol": tol})
        out = roundtrip_suite(args.n, args.trials, args.seed, tol)
        rep.result = out
        rep.check("max_residual", out["max_residual"], tol)
        rep.check("factorization_failures", out["factorization_failures"], 0, "==")
        rep.check("perturbations_accepted", out["perturbations_accepted"], 0, "==")
        return rep
    obj = _read_json(args.infile)
    try:
        M = np.asarray(matrix_from_json(obj), dtype=float)
        res = membership(M, tol=tol)
    except (TensorError, ValueError, TypeError) as exc:
        raise UsageError(f"invalid matrix: {exc}") from exc
    rep = Report("wavecone", {"in": Path(args.infile).name, "tol": tol})
    rep.result = res.to_json()
    if res.in_cone:
        rep.check("residual", res.residual, tol)
    else:
        rep.check("certificate_present", int(bool(res.certificate)), 1, "==")
    return rep


def _tau_oracle(K: cp.ConvexBody):
    n = K.n
    if K.kind == "ball":
        return K.radius**2 * (n - 2) / (2 * n) * np.eye(n)
    if n == 3 and np.allclose(K.half_widths, 1.0):
        return 5 / 18 * np.eye(3)
    return None


def cmd_project(args) -> Report:
    n = args.n
    _check_n(n)
    K = _body(args.body, n)
    tol = args.tol if args.tol is not None else 1e-8
    rep = Report("project", {"n": K.n, "body": K.to_json(), "seed": args.seed, "tol": tol,
                             "in": None if args.infile is None else Path(args.infile).name})
    T = cp.tau(K)
    oracle = _tau_oracle(K)
    rep.result["tau"] = T
    if oracle is not None:
        rep.check("tau_error", float(np.max(np.abs(T - oracle))), 1e-10)
    if args.infile is None:
        _check_trials(args.trials)
        rng = np.random.default_rng(args.seed)
        worst = 0.0
        for _ in range(args.trials):
            L = random_killing(K.n, rng)
            R = cp.project(K, L).recentered(np.zeros(K.n))
            worst = max(worst, float(np.max(np.abs(R.parameters() - L.parameters()))))
        rep.result["killing_trials"] = args.trials
        rep.check("killing_parameter_error", worst, tol)
        return rep
    u = _field(args.infile)
    if getattr(u, "n", K.n) != K.n:
        raise UsageError("field and body dimensions differ")
    try:
        c = cp.coefficients(K, u)
    except cp.UnsupportedField as exc:
        raise UsageError(f"unsupported: {exc}") from exc
    rep.result["coefficients"] = c.to_json()
    rep.result["killing"] = c.killing(K.barycenter).to_json()
    if isinstance(u, KillingField):
        R = c.killing(K.barycenter).recentered(np.zeros(K.n))
        rep.check("killing_parameter_error",
                  float(np.max(np.abs(R.parameters() - u.recentered(np.zeros(K.n)).parameters()))), tol)
    return rep


# rigidity


def _rand_frac(rng, lo=-4, hi=5, den=3) -> Fraction:
    return Fraction(int(rng.integers(lo, hi)), int(rng.integers(1, den + 1)))


def _rand_profile1d(rng, degree=4) -> rg.Profile1D:
    return rg.Profile1D.polynomial([_rand_frac(rng) for _ in range(degree + 1)])


def random_nonparallel(n: int, rng) -> rg.NonParallelProfile:
    """Random exact profile in adapted coordinates a = e1, b = αe1 + βe2, admissible (η, ϑ)."""
    alpha = _rand_frac(rng)
    beta = Fraction(int(rng.integers(1, 5)), int(rng.integers(1, 4))) * (1 if rng.random() < 0.5 else -1)
    a = [Fraction(int(i == 0)) for i in range(n)]
    b = [alpha if i == 0 else (beta if i == 1 else Fraction(0)) for i in range(n)]
    v = [Fraction(0), Fraction(0)] + [_rand_frac(rng) for _ in range(n - 2)]
    theta = _rand_frac(rng)
    eta = _rand_frac(rng) if n == 3 else 2 * alpha * theta / beta**2
    L = random_killing(n, rng, exact=True)
    return rg.NonParallelProfile(tuple(a), tuple(b), _rand_profile1d(rng), _rand_profile1d(rng), tuple(v),
                                 eta, theta, L)


def random_parallel(n: int, rng) -> rg.ParallelProfile:
    a = [Fraction(int(i == 0)) for i in range(n)]
    P = tuple(_rand_profile1d(rng, 3) for _ in range(n - 1))
    rho = _rand_frac(rng) if n == 3 else 0
    return rg.ParallelProfile(tuple(a), _rand_profile1d(rng), _rand_profile1d(rng, 3), P, rho,
                              random_killing(n, rng, exact=True))


def _adapted(p) -> tuple | None:
    """(α, β) when the profile sits in adapted coordinates a = k e1, b ∈ span(e1, e2)."""
    a = rg._frvec(p.a)
    b = rg._frvec(p.b) if isinstance(p, rg.NonParallelProfile) else a
    if any(a[1:]) or any(b[2:]) or a[0] == 0:
        return None
    return a[0] * b[0], a[0] * b[1]


def _build(p):
    if isinstance(p, rg.NonParallelProfile):
        u = rg.build_nonparallel(p)
        g = rg.nonparallel_g(p)
        M = p.polar()
    else:
        u = rg.build_parallel(p)
        g = rg.parallel_g(p)
        A = np.array(rg._frvec(p.a), dtype=object)
        M = rg.dev_dyad(A, A)
    return u, g, M


def _check_profile(p) -> dict:
    u, g, M = _build(p)
    chk = rg.check_build(u, M, g)
    out = {"ed_residual_zero": chk["exact_zero"], "nonzero_entries": chk["nonzero_entries"]}
    ab = _adapted(p)
    if ab is None:
        out["lemma"] = "skipped: coordinates not adapted"
    else:
        lem = rg.lemma_pde_residuals(u, ab[0], ab[1], g)
        out["lemma"] = {"hypothesis_ok": lem["hypothesis_ok"], "count": lem.get("count", 0),
                        "nonzero": lem.get("nonzero", []), "all_zero": lem["all_zero"]}
    return out


def _load_profile(path):
    obj = _read_json(path)
    try:
        p = rg.profile_from_json(obj)
    except (rg.RigidityError, TensorError, TypeError, ValueError, KeyError) as exc:
        raise UsageError(f"invalid profile: {exc}") from exc
    if not p.is_polynomial:
        raise UsageError("exact build needs polynomial profiles")
    return p


def cmd_rigidity_build(args) -> Report:
    p = _load_profile(args.infile)
    try:
        u, g, M = _build(p)
    except rg.RigidityError as exc:
        raise UsageError(str(exc)) from exc
    chk = rg.check_build(u, M, g)
    rep = Report("rigidity build", {"in": Path(args.infile).name})
    rep.result = {"field": u.to_json(), "g": g.to_json(), "nonzero_entries": chk["nonzero_entries"]}
    rep.check("ed_residual_nonzero_entries", len(chk["nonzero_entries"]), 0, "==")
    return rep


def cmd_rigidity_check(args) -> Report:
    if args.infile is not None:
        p = _load_profile(args.infile)
        try:
            out = _check_profile(p)
        except rg.RigidityError as exc:
            raise UsageError(str(exc)) from exc
        rep = Report("rigidity check", {"in": Path(args.infile).name})
        rep.result = out
        rep.check("ed_residual_zero", int(out["ed_residual_zero"]), 1, "==")
        if isinstance(out["lemma"], dict):
            rep.check("lemma_nonzero_residuals", len(out["lemma"]["nonzero"]), 0, "==")
            rep.check("lemma_hypothesis_ok", int(out["lemma"]["hypothesis_ok"]), 1, "==")
        return rep
    _check_n(args.n)
    _check_trials(args.trials)
    rng = np.random.default_rng(args.seed)
    bad_ed = bad_lemma = 0
    for k in range(args.trials):
        p = random_nonparallel(args.n, rng) if k % 2 == 0 else random_parallel(args.n, rng)
        out = _check_profile(p)
        bad_ed += not out["ed_residual_zero"]
        bad_lemma += not out["lemma"]["all_zero"]
    rep = Report("rigidity check", {"n": args.n, "trials": args.trials, "seed": args.seed})
    rep.result = {"profiles": args.trials}
    rep.check("ed_residual_failures", bad_ed, 0, "==")
    rep.check("lemma_failures", bad_lemma, 0, "==")
    return rep


def _solve_q_case(a, b, v, eta, theta) -> dict:
    n = len(a)
    alpha, beta2 = rg.adapted_invariants(a, b)
    predicted = n == 3 or Fraction(eta) * beta2 == 2 * alpha * Fraction(theta)
    try:
        Q = rg.solve_Q(a, b, v, eta, theta)
    except rg.InfeasibleQ as exc:
        return {"feasible": False, "predicted_feasible": predicted, "agrees": not predicted,
                "certificate": exc.certificate}
    M = rg.dev_dyad(np.array(a, dtype=object), np.array(b, dtype=object))
    chk = rg.check_build(Q, M, rg.remainder_rhs(a, b, v, eta, theta))
    ident = rg.prop_identities(Q, a, b, eta, theta)
    return {"feasible": True, "predicted_feasible": predicted, "agrees": predicted, "Q": Q.to_json(),
            "residual_zero": chk["exact_zero"], "identities_ok": bool(ident["ok"])}


def cmd_rigidity_solve_q(args) -> Report:
    if args.infile is not None:
        obj = _read_json(args.infile)
        try:
            a = [Fraction(x) for x in obj["a"]]
            b = [Fraction(x) for x in obj["b"]]
            v = [Fraction(x) for x in obj.get("v", [0] * len(a))]
            eta, theta = Fraction(obj.get("eta", 0)), Fraction(obj.get("theta", 0))
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise UsageError(f"invalid solve-q input: {exc}") from exc
        if len(a) == 2:
            raise UsageError(N2_MESSAGE)
        try:
            out = _solve_q_case(a, b, v, eta, theta)
        except (rg.RigidityError, TensorError) as exc:
            raise UsageError(str(exc)) from exc
        rep = Report("rigidity solve-q", {"in": Path(args.infile).name})
        rep.result = out
        rep.check("criterion_agrees", int(out["agrees"]), 1, "==")
        if out["feasible"]:
            rep.check("residual_zero", int(out["residual_zero"]), 1, "==")
            rep.check("identities_ok", int(out["identities_ok"]), 1, "==")
        return rep
    _check_n(args.n)
    _check_trials(args.trials)
    rng = np.random.default_rng(args.seed)
    mismatch = bad = feasible = 0
    n = args.n
    for _ in range(args.trials):
        alpha = _rand_frac(rng)
        beta = Fraction(int(rng.integers(1, 4)), int(rng.integers(1, 3)))
        a = [Fraction(int(i == 0)) for i in range(n)]
        b = [alpha if i == 0 else (beta if i == 1 else Fraction(0)) for i in range(n)]
        theta = _rand_frac(rng)
        eta = 2 * alpha * theta / beta**2 if rng.random() < 0.5 else _rand_frac(rng)
        out = _solve_q_case(a, b, [0] * n, eta, theta)
        mismatch += not out["agrees"]
        feasible += out["feasible"]
        if out["feasible"]:
            bad += not (out["residual_zero"] and out["identities_ok"])
    rep = Report("rigidity solve-q", {"n": n, "trials": args.trials, "seed": args.seed})
    rep.result = {"feasible": feasible, "infeasible": args.trials - feasible}
    rep.check("criterion_mismatches", mismatch, 0, "==")
    rep.check("bad_solutions", bad, 0, "==")
    return rep


def _synthetic_fit_profile(n: int) -> rg.NonParallelProfile:
    a = [Fraction(int(i == 0)) for i in range(n)]
    b = [Fraction(int(i == 1)) for i in range(n)]
    v = [Fraction(0)] * (n - 1) + [Fraction(1, 3)]
    theta = Fraction(-1, 4)
    eta = Fraction(1, 2) if n == 3 else Fraction(0)
    L = KillingField.from_parameters(n, 0.1 * np.arange(1, n * (n - 1) // 2 + 2 * n + 2) / n)
    return rg.NonParallelProfile(tuple(a), tuple(b), rg.Profile1D.ramp(-0.3, 0.4, 0.5, -1, 1),
                                 rg.Profile1D.step(0.1, 0.7, -1, 1), tuple(v), eta, theta if n == 3 else 0, L)


def cmd_rigidity_fit(args) -> Report:
    tol = args.tol if args.tol is not None else 0.02
    if args.infile is not None:
        u = _field(args.infile)
        if not isinstance(u, gf.GridField):
            raise UsageError("fit needs a grid field (.json sidecar with a .bin payload)")
        if args.a is None or args.b is None:
            raise UsageError("fit on an input grid needs --a and --b")
        a, b = _vector(args.a, u.n), _vector(args.b, u.n)
        config = {"in": Path(args.infile).name, "a": args.a, "b": args.b, "tol": tol}
    else:
        _check_n(args.n)
        _check_grid(args.n, args.grid)
        p = _synthetic_fit_profile(args.n)
        u = gf.GridField.from_function(lambda X: rg.evaluate_nonparallel(p, X), (-1.0,) * args.n,
                                       (1.0,) * args.n, args.grid)
        a, b = list(p.a), list(p.b)
        config = {"n": args.n, "grid": args.grid, "tol": tol, "synthetic": "ramp/step"}
    try:
        prof, out = rg.fit_profile(u, a, b)
    except rg.RigidityError as exc:
        rep = Report("rigidity fit", config)
        rep.result = {"error": str(exc)}
        rep.check("fit_possible", 0, 1, "==")
        return rep
    rep = Report("rigidity fit", config)
    rep.result = {"report": out, "profile": prof.to_json()}
    rep.check("relative_l1", out["relative_l1"], tol)
    return rep


# grids


def cmd_grid_tv(args) -> Report:
    n = args.n
    _check_n(n)
    _check_grid(n, args.grid)
    tol = args.tol if args.tol is not None else 0.03
    nu = tuple(float(i == 0) for i in range(n))
    c = tuple(float(i == 1) for i in range(n))
    spec = gf.JumpSpec(nu, c, 0.0)
    refinements = 1 if n == 3 else 0
    out = gf.jump_tv_study(spec, (-1.0,) * n, (1.0,) * n, args.grid, refinements)
    rep = Report("grid tv", {"n": n, "grid": args.grid, "tol": tol, "refinements": refinements})
    rep.result = out
    rep.check("relative_error", out["relative_error"], tol)
    return rep


def cmd_grid_blowup(args) -> Report:
    n = args.n
    _check_n(n)
    _check_grid(n, args.grid)
    tol = args.tol if args.tol is not None else 0.05
    nu = tuple(float(i == 0) for i in range(n))
    c = tuple(float(i == 1) for i in range(n))
    blow_res = 32 if n == 3 else 12
    out = gf.blowup_study(gf.JumpSpec(nu, c, 0.0), np.zeros(n), cp.ConvexBody.ball(n), args.grid,
                          blow_resolution=blow_res)
    rep = Report("grid blowup", {"n": n, "grid": args.grid, "tol": tol, "blow_resolution": blow_res})
    rep.result = out
    rep.check("largest_eps_l1_to_limit", out["relative_l1_to_limit"][0], tol)
    rep.check("refined_minus_coarse_smallest_eps",
              out["refined_relative_l1"] - out["relative_l1_to_limit"][-1], 0.0, "<")
    rep.check("blowup_of_blowup", out["blowup_of_blowup"], tol)
    return rep


def _grid_input(args, n: int, resolution: int):
    if args.infile is not None:
        u = _field(args.infile)
        if not isinstance(u, gf.GridField):
            raise UsageError("this command needs a grid field")
        return u
    return gf.GridField.from_function(gf.smooth_bump_field(n, seed=args.seed), (-1.0,) * n, (1.0,) * n,
                                      resolution)


def cmd_grid_nonlocal(args) -> Report:
    n = args.n
    _check_n(n)
    _check_grid(n, args.grid)
    tol = args.tol if args.tol is not None else 1e-3
    if not 0 < args.rho < args.tau:
        raise UsageError("need 0 < --rho < --tau")
    x = np.zeros(n)
    rep = Report("grid nonlocal", {"n": n, "grid": args.grid, "rho": args.rho, "tau": args.tau, "tol": tol,
                                   "seed": args.seed,
                                   "in": None if args.infile is None else Path(args.infile).name})
    try:
        out = gf.nonlocal_identity_check(_grid_input(args, n, args.grid), args.rho, args.tau, x)
    except gf.GridError as exc:
        raise UsageError(str(exc)) from exc
    rep.result["fine"] = out
    for k, v in out.items():
        rep.check(f"{k}_relative", v["relative"], tol)
    if args.infile is None and args.grid // 2 >= gf.MIN_RESOLUTION:
        coarse = gf.nonlocal_identity_check(_grid_input(args, n, args.grid // 2), args.rho, args.tau, x)
        rep.result["coarse"] = coarse
        for k in out:
            rep.check(f"{k}_decrease", out[k]["relative"] - coarse[k]["relative"], 0.0, "<")
    return rep


def cmd_grid_decay(args) -> Report:
    n = args.n
    _check_n(n)
    _check_grid(n, args.grid)
    tol = args.tol if args.tol is not None else 0.9
    x = np.array([0.1, -0.05, 0.2] + [0.0] * (n - 3))
    try:
        out = gf.decay_check(_grid_input(args, n, args.grid), x, levels=5)
    except gf.GridError as exc:
        raise UsageError(str(exc)) from exc
    rep = Report("grid decay", {"n": n, "grid": args.grid, "tol": tol, "seed": args.seed, "x": x})
    rep.result = out
    for k, s in out["slopes"].items():
        rep.check(f"slope_{k}", math.inf if s is None else s, tol, ">=")
    rep.check("quasi_continuity_decreasing", int(out["quasi_continuity_decreasing"]), 1, "==")
    return rep


def cmd_grid_poincare(args) -> Report:
    n = args.n
    _check_n(n)
    _check_grid(n, args.grid)
    K = cp.ConvexBody.ball(n, 0.8)
    u = _grid_input(args, n, args.grid)
    r = gf.poincare_ratio_grid(K, u)
    L = random_killing(n, np.random.default_rng(args.seed))
    gk = gf.GridField.from_function(L, u.lo, u.hi, u.resolution)
    rk = gf.poincare_ratio_grid(K, gk)
    rep = Report("grid poincare", {"n": n, "grid": args.grid, "seed": args.seed, "body": K.to_json()})
    rep.result = {"ratio": r, "killing_ratio": rk}
    rep.check("ratio_finite", int(math.isfinite(r)), 1, "==")
    rep.check("killing_ratio", rk, 0.0, "==")
    return rep


# parser


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--format", choices=("json", "csv"), default="json")
    common.add_argument("--out", default=None, help="write the report here instead of stdout")
    common.add_argument("--tol", type=float, default=None, help="override the command's tolerance")
    common.add_argument("--n", type=int, default=3)
    common.add_argument("--trials", type=int, default=100)
    common.add_argument("--in", dest="infile", default=None)

    p = argparse.ArgumentParser(prog="devgrad", description="Deviatoric symmetric gradient toolkit.")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("verify-annihilator", parents=[common], help="exact A(ℰ_d u) = 0 suite")
    s.add_argument("--degree", type=int, default=5)
    s.add_argument("--operator", choices=("A", "SV"), default="A")
    s.set_defaults(func=cmd_verify_annihilator)

    s = sub.add_parser("wavecone", parents=[common], help="cone membership of a matrix, or a round-trip suite")
    s.set_defaults(func=cmd_wavecone)

    s = sub.add_parser("project", parents=[common], help="kernel projection on a convex body")
    s.add_argument("--body", default=None, help="'ball', 'cube' or a body JSON file")
    s.set_defaults(func=cmd_project)

    r = sub.add_parser("rigidity", help="rigid profiles").add_subparsers(dest="sub", required=True)
    s = r.add_parser("build", parents=[common])
    s.set_defaults(func=cmd_rigidity_build)
    s = r.add_parser("check", parents=[common])
    s.set_defaults(func=cmd_rigidity_check)
    s = r.add_parser("solve-q", parents=[common])
    s.set_defaults(func=cmd_rigidity_solve_q)
    s = r.add_parser("fit", parents=[common])
    s.add_argument("--grid", type=int, default=64)
    s.add_argument("--a", default=None, help="comma separated, e.g. 1,0,0")
    s.add_argument("--b", default=None)
    s.set_defaults(func=cmd_rigidity_fit)

    g = sub.add_parser("grid", help="grid studies").add_subparsers(dest="sub", required=True)
    for name, fn in (("tv", cmd_grid_tv), ("blowup", cmd_grid_blowup), ("nonlocal", cmd_grid_nonlocal),
                     ("decay", cmd_grid_decay), ("poincare", cmd_grid_poincare)):
        s = g.add_parser(name, parents=[common])
        s.add_argument("--grid", type=int, default=64)
        if name == "nonlocal":
            s.add_argument("--rho", type=float, default=0.2)
            s.add_argument("--tau", type=float, default=0.8)
        s.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        rep = args.func(args)
    except UsageError as exc:
        print(f"devgrad: error: {exc}", file=sys.stderr)
        return 2
    text = rep.render(args.format)
    if args.out:
        Path(args.out).write_text(text)
    else:
        sys.stdout.write(text)
    return 0 if rep.passed else 1


if __name__ == "__main__":
    sys.exit(main())
