"""Rigid solution forms for fields whose ℰ_d has a constant polar in the wave cone.

Two families are built here. For a ∦ b,

    u = ψ₁(a·x) b + ψ₂(b·x) a + w_v + Q + L,

with ℰ_d u = dev_dyad(a, b)·g. For a parallel pair the profiles F, G, P_j
of a single variable a·x appear instead. All polynomial-mode constructions
are exact over the rationals, so the verifications are equalities.

The linear equation ℰ_d Q = M·q maps homogeneous degree k fields to
homogeneous degree k−1 right-hand sides, so it is solved block by block with
an exact Gauss-Jordan elimination whose row operations are cached per (n, k).
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from .kernel_space import KillingField
from .polyfield import (
    PolyVectorField,
    RationalPoly,
    divergence,
    monomials,
    op_Ed,
)
from .tensor_core import TensorError, dev_dyad, vector_from_json, vector_to_json


class RigidityError(ValueError):
    pass


class InfeasibleQ(RigidityError):
    """The polynomial remainder equation has no solution; ``certificate`` holds the ranks."""

    def __init__(self, message: str, certificate: dict):
        super().__init__(message)
        self.certificate = certificate


def _fr(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, str):
        return Fraction(x)
    if isinstance(x, (int, np.integer)):
        return Fraction(int(x))
    return Fraction(float(x))


def _frvec(v) -> list:
    return [_fr(x) for x in np.asarray(v, dtype=object).ravel()]


def _linear(n: int, c) -> RationalPoly:
    return RationalPoly(n, {tuple(int(i == k) for i in range(n)): ck for k, ck in enumerate(c) if ck}, _trusted=True)


def _quadratic_form(n: int, S) -> RationalPoly:
    terms = {}
    for i in range(n):
        for j in range(n):
            if S[i][j]:
                e = [0] * n
                e[i] += 1
                e[j] += 1
                e = tuple(e)
                terms[e] = terms.get(e, 0) + S[i][j]
    return RationalPoly(n, terms)


def _dot(a, b):
    return sum((x * y for x, y in zip(a, b)), Fraction(0))


def _span_projector(vecs: list) -> list:
    """Exact orthogonal projector onto span(vecs) (vectors assumed independent)."""
    k = len(vecs)
    n = len(vecs[0])
    G = [[_dot(vecs[i], vecs[j]) for j in range(k)] for i in range(k)]
    Ginv = _inverse(G)
    P = [[Fraction(0)] * n for _ in range(n)]
    for p in range(k):
        for q in range(k):
            c = Ginv[p][q]
            if c:
                for i in range(n):
                    for j in range(n):
                        P[i][j] += vecs[p][i] * c * vecs[q][j]
    return P


def _inverse(G: list) -> list:
    k = len(G)
    aug = [list(G[i]) + [Fraction(int(i == j)) for j in range(k)] for i in range(k)]
    for c in range(k):
        piv = next(r for r in range(c, k) if aug[r][c] != 0)
        aug[c], aug[piv] = aug[piv], aug[c]
        p = aug[c][c]
        aug[c] = [x / p for x in aug[c]]
        for r in range(k):
            if r != c and aug[r][c]:
                f = aug[r][c]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[c])]
    return [row[k:] for row in aug]


def orthogonal_complement_basis(vecs: list, n: int) -> list:
    """Rational pairwise-orthogonal (unnormalized) basis of span(vecs)⊥ by exact Gram-Schmidt."""
    basis = []
    for v in vecs:
        w = list(v)
        for q in basis:
            c = _dot(w, q) / _dot(q, q)
            w = [x - c * y for x, y in zip(w, q)]
        if any(w):
            basis.append(w)
    out = []
    for k in range(n):
        e = [Fraction(int(i == k)) for i in range(n)]
        w = list(e)
        for q in basis + out:
            qq = _dot(q, q)
            if qq:
                c = _dot(w, q) / qq
                w = [x - c * y for x, y in zip(w, q)]
        if any(w):
            out.append(w)
        if len(basis) + len(out) == n:
            break
    return out


# one-variable profiles


@dataclass(frozen=True)
class Profile1D:
    """Polynomial (ascending rational coefficients) or piecewise-linear table.

    Tables may repeat a knot to encode a jump; evaluation is right-continuous
    and constant outside the knot range.
    """

    coeffs: tuple | None = None
    knots: np.ndarray | None = None
    values: np.ndarray | None = None

    def __post_init__(self):
        if (self.coeffs is None) == (self.knots is None):
            raise RigidityError("a profile is either polynomial or sampled")
        if self.coeffs is not None:
            c = [_fr(x) for x in self.coeffs]
            while c and c[-1] == 0:
                c.pop()
            object.__setattr__(self, "coeffs", tuple(c))
        else:
            k = np.asarray(self.knots, dtype=float)
            v = np.asarray(self.values, dtype=float)
            if k.ndim != 1 or k.shape != v.shape or k.size < 2:
                raise RigidityError("sampled profile needs matching 1-D knots and values")
            if np.any(np.diff(k) < 0) or not np.all(np.isfinite(v)):
                raise RigidityError("knots must be non-decreasing and values finite")
            object.__setattr__(self, "knots", k)
            object.__setattr__(self, "values", v)

    @classmethod
    def polynomial(cls, coeffs) -> Profile1D:
        return cls(coeffs=tuple(coeffs))

    @classmethod
    def zero(cls) -> Profile1D:
        return cls(coeffs=())

    @classmethod
    def sampled(cls, knots, values) -> Profile1D:
        return cls(knots=np.asarray(knots, dtype=float), values=np.asarray(values, dtype=float))

    @classmethod
    def step(cls, t0: float, height: float, lo: float, hi: float) -> Profile1D:
        return cls.sampled([lo, t0, t0, hi], [0.0, 0.0, height, height])

    @classmethod
    def ramp(cls, t0: float, t1: float, height: float, lo: float, hi: float) -> Profile1D:
        return cls.sampled([lo, t0, t1, hi], [0.0, 0.0, height, height])

    @property
    def is_polynomial(self) -> bool:
        return self.coeffs is not None

    def _need_poly(self):
        if not self.is_polynomial:
            raise RigidityError("operation needs a polynomial profile")

    def derivative(self) -> Profile1D:
        self._need_poly()
        return Profile1D(coeffs=tuple(k * c for k, c in enumerate(self.coeffs) if k))

    def antiderivative(self) -> Profile1D:
        self._need_poly()
        return Profile1D(coeffs=(Fraction(0),) + tuple(c / (k + 1) for k, c in enumerate(self.coeffs)))

    def __sub__(self, other: Profile1D) -> Profile1D:
        self._need_poly()
        other._need_poly()
        m = max(len(self.coeffs), len(other.coeffs))
        a = list(self.coeffs) + [Fraction(0)] * (m - len(self.coeffs))
        b = list(other.coeffs) + [Fraction(0)] * (m - len(other.coeffs))
        return Profile1D(coeffs=tuple(x - y for x, y in zip(a, b)))

    def scale(self, c) -> Profile1D:
        self._need_poly()
        c = _fr(c)
        return Profile1D(coeffs=tuple(c * x for x in self.coeffs))

    def compose(self, ell: RationalPoly) -> RationalPoly:
        """ψ(ℓ(x)) for a polynomial ℓ, by Horner's rule."""
        self._need_poly()
        out = RationalPoly.zero(ell.n)
        for c in reversed(self.coeffs):
            out = out * ell + c
        return out

    def __call__(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.is_polynomial:
            out = np.zeros_like(t)
            for c in reversed(self.coeffs):
                out = out * t + float(c)
            return out
        k, v = self.knots, self.values
        i = np.clip(np.searchsorted(k, t, side="right") - 1, 0, len(k) - 2)
        k0, k1 = k[i], k[i + 1]
        width = k1 - k0
        w = np.where(width > 0, (t - k0) / np.where(width > 0, width, 1.0), 1.0)
        w = np.clip(w, 0.0, 1.0)
        out = v[i] + w * (v[i + 1] - v[i])
        out = np.where(t < k[0], v[0], out)
        return np.where(t >= k[-1], v[-1], out)

    def total_variation(self) -> float:
        """Discrete total variation of a sampled profile."""
        if self.is_polynomial:
            raise RigidityError("total variation is defined here for sampled profiles")
        return float(np.sum(np.abs(np.diff(self.values))))

    def to_json(self) -> dict:
        if self.is_polynomial:
            return {"kind": "poly", "coeffs": [f"{c.numerator}/{c.denominator}" for c in self.coeffs]}
        return {"kind": "sampled", "knots": self.knots.tolist(), "values": self.values.tolist()}

    @classmethod
    def from_json(cls, obj) -> Profile1D:
        try:
            if obj["kind"] == "poly":
                return cls.polynomial([Fraction(c) for c in obj["coeffs"]])
            if obj["kind"] == "sampled":
                return cls.sampled(obj["knots"], obj["values"])
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise RigidityError(f"malformed profile JSON: {exc}") from exc
        raise RigidityError(f"unknown profile kind {obj.get('kind')!r}")


# exact block solver for ℰ_d Q = M q


@dataclass(frozen=True)
class _Block:
    unknowns: tuple
    row_keys: tuple
    pivots: tuple
    rank: int
    consistency: tuple


@lru_cache(maxsize=None)
def _ed_block(n: int, k: int) -> _Block:
    """Gauss-Jordan reduction of ℰ_d restricted to homogeneous degree-k fields.

    Each row's right-hand side is kept as a sparse combination of original
    rows, so any concrete right-hand side can be reduced afterwards.
    """
    unknowns = [(comp, e) for comp in range(n) for e in monomials(n, k, k)]
    entries: dict = {}
    for col, (comp, e) in enumerate(unknowns):
        comps = [RationalPoly.zero(n) for _ in range(n)]
        comps[comp] = RationalPoly(n, {e: Fraction(1)}, _trusted=True)
        Ed = op_Ed(PolyVectorField(comps))
        for i in range(n):
            for j in range(i, n):
                for m, c in Ed[i, j].terms.items():
                    entries.setdefault((i, j, m), {})[col] = c
    row_keys = sorted(entries)
    rows = [(dict(entries[key]), {r: Fraction(1)}) for r, key in enumerate(row_keys)]
    active = list(range(len(rows)))
    pivots = []
    for c in range(len(unknowns)):
        r = next((i for i in active if rows[i][0].get(c)), None)
        if r is None:
            continue
        active.remove(r)
        d, comb = rows[r]
        p = d[c]
        d = {key: x / p for key, x in d.items()}
        comb = {key: x / p for key, x in comb.items()}
        rows[r] = (d, comb)
        for i in range(len(rows)):
            if i == r or c not in rows[i][0]:
                continue
            f = rows[i][0][c]
            di, ci = dict(rows[i][0]), dict(rows[i][1])
            for key, x in d.items():
                y = di.get(key, 0) - f * x
                if y:
                    di[key] = y
                else:
                    di.pop(key, None)
            for key, x in comb.items():
                y = ci.get(key, 0) - f * x
                if y:
                    ci[key] = y
                else:
                    ci.pop(key, None)
            rows[i] = (di, ci)
        pivots.append((c, r))
    # combinations are read only now, after later pivots have reduced each row
    pivots = [(c, rows[r][1]) for c, r in pivots]
    consistency = tuple(rows[i][1] for i in active if rows[i][1])
    # reduced pivot rows keep free-column entries; free variables are set to zero
    return _Block(tuple(unknowns), tuple(row_keys), tuple(pivots), len(pivots), consistency)


def ed_block_nullity(n: int, k: int) -> int:
    """Dimension of homogeneous degree-k fields annihilated by ℰ_d."""
    b = _ed_block(n, k)
    return len(b.unknowns) - b.rank


def solve_polar(M, q: RationalPoly) -> PolyVectorField:
    """Exact polynomial P with ℰ_d P = M·q, homogeneous degree by degree.

    Raises InfeasibleQ with rank data when some degree block is inconsistent.
    """
    n = q.n
    M = [[_fr(x) for x in row] for row in np.asarray(M, dtype=object)]
    if len(M) != n or any(len(r) != n for r in M):
        raise TensorError("matrix and polynomial dimensions differ")
    if any(M[i][j] != M[j][i] for i in range(n) for j in range(n)) or sum(M[i][i] for i in range(n)) != 0:
        raise TensorError("polar matrix must be symmetric and trace-free")
    by_degree: dict = {}
    for e, c in q.terms.items():
        by_degree.setdefault(sum(e), {})[e] = c
    out = PolyVectorField.zero(n)
    for d in sorted(by_degree):
        blk = _ed_block(n, d + 1)
        index = {key: r for r, key in enumerate(blk.row_keys)}
        rhs = [Fraction(0)] * len(blk.row_keys)
        for m, c in by_degree[d].items():
            for i in range(n):
                for j in range(i, n):
                    if M[i][j]:
                        key = (i, j, m)
                        if key not in index:
                            raise InfeasibleQ("right-hand side outside the range of ℰ_d",
                                              {"degree": d + 1, "reason": "monomial not reachable"})
                        rhs[index[key]] += M[i][j] * c
        bad = [comb for comb in blk.consistency if sum(v * rhs[r] for r, v in comb.items()) != 0]
        if bad:
            raise InfeasibleQ(
                f"no polynomial solution in homogeneous degree {d + 1}",
                {"degree": d + 1, "rank_A": blk.rank, "rank_Ab": blk.rank + 1,
                 "violated_conditions": len(bad), "unknowns": len(blk.unknowns)},
            )
        comps = [dict() for _ in range(n)]
        for col, comb in blk.pivots:
            val = sum((v * rhs[r] for r, v in comb.items()), Fraction(0))
            if val:
                comp, e = blk.unknowns[col]
                comps[comp][e] = val
        out = out + PolyVectorField([RationalPoly(n, t, _trusted=True) for t in comps])
    return out


def _check_nonparallel(a: list, b: list) -> Fraction:
    cross = _dot(a, a) * _dot(b, b) - _dot(a, b) ** 2
    if cross == 0:
        raise RigidityError("a and b are parallel")
    return cross


def complement_square_sum(a, b) -> RationalPoly:
    """Σ_j (w_j·x)² over an orthonormal basis of span(a, b)⊥, i.e. |x|² − xᵗPx."""
    a, b = _frvec(a), _frvec(b)
    n = len(a)
    _check_nonparallel(a, b)
    P = _span_projector([a, b])
    S = [[Fraction(int(i == j)) - P[i][j] for j in range(n)] for i in range(n)]
    return _quadratic_form(n, S)


def remainder_rhs(a, b, v, eta, theta) -> RationalPoly:
    """(v·x) + η(a·x)(b·x) − ϑ Σ_j (w_j·x)²."""
    a, b, v = _frvec(a), _frvec(b), _frvec(v)
    n = len(a)
    return (_linear(n, v) + _linear(n, a) * _linear(n, b) * _fr(eta)
            - complement_square_sum(a, b) * _fr(theta))


def solve_Q(a, b, v, eta, theta) -> PolyVectorField:
    """Polynomial Q of degree ≤ 3 with ℰ_d Q = dev_dyad(a, b)·[(v·x) + η(a·x)(b·x) − ϑΣ(w_j·x)²].

    The cubic part is homogeneous; for n ≥ 4 it exists iff ηβ² = 2αϑ.
    """
    fa, fb = _frvec(a), _frvec(b)
    if len(fa) < 3 or len(fb) != len(fa) or len(_frvec(v)) != len(fa):
        raise TensorError("a, b, v must share a dimension n >= 3")
    _check_nonparallel(fa, fb)
    M = dev_dyad(np.array(fa, dtype=object), np.array(fb, dtype=object))
    return solve_polar(M, remainder_rhs(fa, fb, v, eta, theta))


def adapted_invariants(a, b) -> tuple:
    """(α, β²) of the adapted frame a = |a|e1, |a|b = αe1 + βe2; both rational."""
    a, b = _frvec(a), _frvec(b)
    return _dot(a, b), _dot(a, a) * _dot(b, b) - _dot(a, b) ** 2


def feasible_criterion(n: int, alpha, beta, eta, theta) -> bool:
    """Exact solvability test for the cubic remainder in adapted coordinates."""
    if n == 3:
        return True
    return _fr(eta) * _fr(beta) ** 2 == 2 * _fr(alpha) * _fr(theta)


def adapted_frame(a, b) -> np.ndarray:
    """Orthogonal R (rows f1..fn) with f1 = a/|a| and b ∈ span(f1, f2), (f2·b) > 0.

    Built from a Householder reflection taking a/|a| to e1 followed by a
    reflection within e1⊥ taking the remaining part of b to e2.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    n = a.shape[0]

    def householder(x, k):
        y = np.zeros(n)
        y[k] = np.linalg.norm(x)
        w = x - y
        nw = np.linalg.norm(w)
        if nw < 1e-15 * max(1.0, np.linalg.norm(x)):
            return np.eye(n)
        w /= nw
        return np.eye(n) - 2 * np.outer(w, w)

    H1 = householder(a, 0)
    bb = H1 @ b
    tail = bb.copy()
    tail[0] = 0.0
    H2 = householder(tail, 1)
    R = H2 @ H1
    return R


def prop_identities(Q: PolyVectorField, a, b, eta, theta) -> dict:
    """Third derivatives ∂₁₂₃Q₃ and ∂₂₂₃Q₃ in the adapted frame against ϑβ and −(2αϑ − ηβ²)/2.

    Exact when a = e1 and b = αe1 + βe2 already; otherwise evaluated in floats
    through adapted_frame with |a|b playing the role of b.
    """
    fa, fb = _frvec(a), _frvec(b)
    n = len(fa)
    adapted = fa == [Fraction(int(i == 0)) for i in range(n)] and all(x == 0 for x in fb[2:])
    eta, theta = _fr(eta), _fr(theta)
    if adapted:
        alpha, beta = fb[0], fb[1]
        d123 = Q[2].partial(0, 1, 2)
        d223 = Q[2].partial(1, 1, 2)
        got = (d123.terms.get((0,) * n, Fraction(0)), d223.terms.get((0,) * n, Fraction(0)))
        if d123.degree() > 0 or d223.degree() > 0:
            raise RigidityError("third derivatives of Q are not constant")
        want = (theta * beta, -(2 * alpha * theta - eta * beta**2) / 2)
        return {"exact": True, "d123": got[0], "d223": got[1], "expected_d123": want[0],
                "expected_d223": want[1], "ok": got == want}
    R = adapted_frame([float(x) for x in fa], [float(x) for x in fb])
    f = R
    alpha = float(_dot(fa, fb))
    beta2 = float(_dot(fa, fa) * _dot(fb, fb) - _dot(fa, fb) ** 2)
    beta = np.sqrt(beta2)

    def d3(comp_vec, dirs):
        total = 0.0
        for l in range(n):
            if comp_vec[l] == 0:
                continue
            for i in range(n):
                for j in range(n):
                    for k in range(n):
                        c = dirs[0][i] * dirs[1][j] * dirs[2][k]
                        if c:
                            p = Q[l].partial(i, j, k)
                            total += comp_vec[l] * c * float(p.terms.get((0,) * n, 0))
        return total

    got = (d3(f[2], (f[0], f[1], f[2])), d3(f[2], (f[1], f[1], f[2])))
    want = (float(theta) * beta, -(2 * alpha * float(theta) - float(eta) * beta2) / 2)
    err = max(abs(got[0] - want[0]), abs(got[1] - want[1]))
    scale = max(1.0, abs(want[0]), abs(want[1]))
    return {"exact": False, "d123": got[0], "d223": got[1], "expected_d123": want[0],
            "expected_d223": want[1], "ok": err <= 1e-9 * scale}


# profiles


@dataclass(frozen=True)
class NonParallelProfile:
    a: tuple
    b: tuple
    psi1: Profile1D
    psi2: Profile1D
    v: tuple
    eta: object = 0
    theta: object = 0
    L: KillingField | None = None

    def __post_init__(self):
        a = np.asarray(self.a, dtype=object)
        b = np.asarray(self.b, dtype=object)
        v = np.asarray(self.v, dtype=object)
        n = a.shape[0]
        if n < 3 or b.shape != (n,) or v.shape != (n,):
            raise TensorError("a, b, v must be vectors of a common dimension n >= 3")
        if self.L is not None and self.L.n != n:
            raise TensorError("Killing part has the wrong dimension")
        fa, fb, fv = _frvec(a), _frvec(b), _frvec(v)
        _check_nonparallel(fa, fb)
        scale = float(np.linalg.norm([float(x) for x in fv])) or 1.0
        for w in (fa, fb):
            if abs(float(_dot(fv, w))) > 1e-12 * scale * float(np.linalg.norm([float(x) for x in w])):
                raise RigidityError("v must be orthogonal to a and b")
        object.__setattr__(self, "a", tuple(self.a))
        object.__setattr__(self, "b", tuple(self.b))
        object.__setattr__(self, "v", tuple(self.v))

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def is_polynomial(self) -> bool:
        return self.psi1.is_polynomial and self.psi2.is_polynomial

    def polar(self) -> np.ndarray:
        return dev_dyad(np.array(_frvec(self.a), dtype=object), np.array(_frvec(self.b), dtype=object))

    def to_json(self) -> dict:
        return {
            "type": "nonparallel",
            "a": vector_to_json(np.array(_frvec(self.a), dtype=object)),
            "b": vector_to_json(np.array(_frvec(self.b), dtype=object)),
            "psi1": self.psi1.to_json(),
            "psi2": self.psi2.to_json(),
            "v": vector_to_json(np.array(_frvec(self.v), dtype=object)),
            "eta": _enc(self.eta),
            "theta": _enc(self.theta),
            "L": None if self.L is None else self.L.to_json(),
        }

    @classmethod
    def from_json(cls, obj) -> NonParallelProfile:
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            return cls(
                tuple(vector_from_json(obj["a"])), tuple(vector_from_json(obj["b"])),
                Profile1D.from_json(obj["psi1"]), Profile1D.from_json(obj["psi2"]),
                tuple(vector_from_json(obj["v"])), _dec(obj.get("eta", 0)), _dec(obj.get("theta", 0)),
                None if obj.get("L") is None else KillingField.from_json(obj["L"]),
            )
        except (KeyError, TypeError) as exc:
            raise RigidityError(f"malformed profile JSON: {exc}") from exc


@dataclass(frozen=True)
class ParallelProfile:
    """u = F(t)a + [Σ P_j′(t)(w_j·x) + G′(t) xᵗΠx/2] a − Σ P_j(t) w_j − G(t) Πx + ϱQ + L.

    Here t = a·x, Π is the projector onto a⊥ and w_j is the rational
    orthogonal basis of a⊥ returned by orthogonal_complement_basis.
    """

    a: tuple
    F: Profile1D
    G: Profile1D
    P: tuple
    rho: object = 0
    L: KillingField | None = None

    def __post_init__(self):
        n = len(self.a)
        if n < 3:
            raise TensorError("n must be at least 3")
        if len(self.P) != n - 1:
            raise RigidityError(f"need {n - 1} profiles P_j")
        if all(x == 0 for x in _frvec(self.a)):
            raise RigidityError("a must be nonzero")
        if n >= 4 and _fr(self.rho) != 0:
            raise RigidityError("rho must vanish when n >= 4")
        if self.L is not None and self.L.n != n:
            raise TensorError("Killing part has the wrong dimension")
        object.__setattr__(self, "a", tuple(self.a))
        object.__setattr__(self, "P", tuple(self.P))

    @property
    def n(self) -> int:
        return len(self.a)

    @property
    def is_polynomial(self) -> bool:
        return self.F.is_polynomial and self.G.is_polynomial and all(p.is_polynomial for p in self.P)

    @classmethod
    def from_lemma(cls, a, h: Profile1D, p: list, psi: Profile1D, rho=0, L=None) -> ParallelProfile:
        """Profiles from the g-data h, p_j, ψ: H′ = h, P_j″ = p_j, Ψ‴ = ψ, F = H − Ψ/|a|², G = Ψ′."""
        fa = _frvec(a)
        H = h.antiderivative()
        Psi = psi.antiderivative().antiderivative().antiderivative()
        F = H - Psi.scale(1 / _dot(fa, fa))
        G = Psi.derivative()
        P = [pj.antiderivative().antiderivative() for pj in p]
        return cls(tuple(a), F, G, tuple(P), rho, L)

    def to_json(self) -> dict:
        return {
            "type": "parallel",
            "a": vector_to_json(np.array(_frvec(self.a), dtype=object)),
            "F": self.F.to_json(),
            "G": self.G.to_json(),
            "P": [p.to_json() for p in self.P],
            "rho": _enc(self.rho),
            "L": None if self.L is None else self.L.to_json(),
        }

    @classmethod
    def from_json(cls, obj) -> ParallelProfile:
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            return cls(
                tuple(vector_from_json(obj["a"])), Profile1D.from_json(obj["F"]), Profile1D.from_json(obj["G"]),
                tuple(Profile1D.from_json(p) for p in obj["P"]), _dec(obj.get("rho", 0)),
                None if obj.get("L") is None else KillingField.from_json(obj["L"]),
            )
        except (KeyError, TypeError) as exc:
            raise RigidityError(f"malformed profile JSON: {exc}") from exc


@dataclass(frozen=True)
class PolarData:
    """Constant polar M, density g and f = (div u − (a·b) g)/n."""

    M: np.ndarray
    g: RationalPoly
    f: RationalPoly


def _enc(x):
    x = _fr(x)
    return f"{x.numerator}/{x.denominator}"


def _dec(x):
    return Fraction(x) if isinstance(x, (str, int)) else float(x)


def profile_from_json(obj):
    if isinstance(obj, str):
        obj = json.loads(obj)
    kind = obj.get("type") if isinstance(obj, dict) else None
    if kind == "nonparallel":
        return NonParallelProfile.from_json(obj)
    if kind == "parallel":
        return ParallelProfile.from_json(obj)
    raise RigidityError("profile JSON needs type 'nonparallel' or 'parallel'")


# builders


def v_part(a, b, v) -> PolyVectorField:
    """w = (v·x)[a(b·x) + b(a·x)] − v(a·x)(b·x), whose ℰ_d is dev_dyad(a, b)·2(v·x)."""
    a, b, v = _frvec(a), _frvec(b), _frvec(v)
    n = len(a)
    la, lb, lv = _linear(n, a), _linear(n, b), _linear(n, v)
    return PolyVectorField([lv * (lb * a[i] + la * b[i]) - la * lb * v[i] for i in range(n)])


def nonparallel_g(p: NonParallelProfile) -> RationalPoly:
    """g = ψ₁′(a·x) + ψ₂′(b·x) + 2(v·x) + η(a·x)(b·x) − ϑΣ(w_j·x)²."""
    if not p.is_polynomial:
        raise RigidityError("exact g needs polynomial profiles")
    a, b, v = _frvec(p.a), _frvec(p.b), _frvec(p.v)
    n = p.n
    la, lb = _linear(n, a), _linear(n, b)
    return (p.psi1.derivative().compose(la) + p.psi2.derivative().compose(lb) + _linear(n, v).scale(2)
            + remainder_rhs(a, b, [0] * n, p.eta, p.theta))


def build_nonparallel(p: NonParallelProfile) -> PolyVectorField:
    """ψ₁(a·x)b + ψ₂(b·x)a + w_v + Q + L, exact; Q solves the η, ϑ remainder."""
    if not p.is_polynomial:
        raise RigidityError("exact build needs polynomial profiles; use evaluate_nonparallel for tables")
    a, b = _frvec(p.a), _frvec(p.b)
    n = p.n
    la, lb = _linear(n, a), _linear(n, b)
    u = PolyVectorField([p.psi1.compose(la).scale(b[i]) + p.psi2.compose(lb).scale(a[i]) for i in range(n)])
    u = u + v_part(a, b, p.v)
    if _fr(p.eta) or _fr(p.theta):
        u = u + solve_Q(a, b, [0] * n, p.eta, p.theta)
    if p.L is not None:
        u = u + p.L.to_polyfield()
    return u


def evaluate_nonparallel(p: NonParallelProfile, points) -> np.ndarray:
    """Float values at points (..., n); tables are interpolated piecewise linearly."""
    points = np.asarray(points, dtype=float)
    a = np.array([float(x) for x in _frvec(p.a)])
    b = np.array([float(x) for x in _frvec(p.b)])
    n = p.n
    out = p.psi1(points @ a)[..., None] * b + p.psi2(points @ b)[..., None] * a
    poly = v_part(p.a, p.b, p.v)
    if _fr(p.eta) or _fr(p.theta):
        poly = poly + solve_Q(p.a, p.b, [0] * n, p.eta, p.theta)
    out = out + poly.evaluate(points)
    if p.L is not None:
        out = out + p.L.evaluate(points)
    return out


def parallel_rho_rhs(a) -> RationalPoly:
    """(w₂·x)² − (w₃·x)² for orthonormal w₂, w₃ spanning a⊥ (n = 3)."""
    fa = _frvec(a)
    n = len(fa)
    if n != 3:
        raise RigidityError("the rho remainder exists only for n = 3")
    w = orthogonal_complement_basis([fa], n)
    S = [[w[0][i] * w[0][j] / _dot(w[0], w[0]) - w[1][i] * w[1][j] / _dot(w[1], w[1]) for j in range(n)]
         for i in range(n)]
    return _quadratic_form(n, S)


def solve_Q_parallel(a, n: int | None = None) -> PolyVectorField:
    """Cubic Q with ℰ_d Q = dev_dyad(a, a)·((w₂·x)² − (w₃·x)²); n = 3 only."""
    fa = _frvec(a)
    if n is not None and n != len(fa):
        raise TensorError("n does not match a")
    if len(fa) != 3:
        raise RigidityError("solve_Q_parallel is defined for n = 3")
    if not any(fa):
        raise RigidityError("a must be nonzero")
    A = np.array(fa, dtype=object)
    return solve_polar(dev_dyad(A, A), parallel_rho_rhs(fa))


def _projector_perp(a: list) -> list:
    n = len(a)
    aa = _dot(a, a)
    return [[Fraction(int(i == j)) - a[i] * a[j] / aa for j in range(n)] for i in range(n)]


def parallel_g(p: ParallelProfile) -> RationalPoly:
    """g = F′(t) + G(t)/|a|² + Σ P_j″(t)(w_j·x) + G″(t) xᵗΠx/2 + ϱ((w₂·x)² − (w₃·x)²)."""
    if not p.is_polynomial:
        raise RigidityError("exact g needs polynomial profiles")
    a = _frvec(p.a)
    n = p.n
    t = _linear(n, a)
    Pi = _projector_perp(a)
    W = orthogonal_complement_basis([a], n)
    g = p.F.derivative().compose(t) + p.G.compose(t).scale(1 / _dot(a, a))
    for Pj, w in zip(p.P, W):
        g = g + Pj.derivative().derivative().compose(t) * _linear(n, w)
    g = g + p.G.derivative().derivative().compose(t) * _quadratic_form(n, Pi).scale(Fraction(1, 2))
    if _fr(p.rho):
        g = g + parallel_rho_rhs(a).scale(_fr(p.rho))
    return g


def build_parallel(p: ParallelProfile) -> PolyVectorField:
    if not p.is_polynomial:
        raise RigidityError("exact build needs polynomial profiles")
    a = _frvec(p.a)
    n = p.n
    t = _linear(n, a)
    Pi = _projector_perp(a)
    W = orthogonal_complement_basis([a], n)
    half_quad = _quadratic_form(n, Pi).scale(Fraction(1, 2))
    scalar = p.F.compose(t) + p.G.derivative().compose(t) * half_quad
    for Pj, w in zip(p.P, W):
        scalar = scalar + Pj.derivative().compose(t) * _linear(n, w)
    Gt = p.G.compose(t)
    comps = []
    for i in range(n):
        c = scalar.scale(a[i]) - Gt * _linear(n, Pi[i])
        for Pj, w in zip(p.P, W):
            if w[i]:
                c = c - Pj.compose(t).scale(w[i])
        comps.append(c)
    u = PolyVectorField(comps)
    if _fr(p.rho):
        u = u + solve_Q_parallel(a) * _fr(p.rho)
    if p.L is not None:
        u = u + p.L.to_polyfield()
    return u


def check_build(u: PolyVectorField, M, g: RationalPoly) -> dict:
    n = u.n
    E = op_Ed(u)
    M = [[_fr(x) for x in row] for row in np.asarray(M, dtype=object)]
    nonzero = [(i, j) for i in range(n) for j in range(n) if not (E[i, j] - g.scale(M[i][j])).is_zero()]
    return {"exact_zero": not nonzero, "nonzero_entries": nonzero}


def polar_data(u: PolyVectorField, a, b, g: RationalPoly) -> PolarData:
    a, b = _frvec(a), _frvec(b)
    M = dev_dyad(np.array(a, dtype=object), np.array(b, dtype=object))
    f = (divergence(u) - g.scale(_dot(a, b))).scale(Fraction(1, u.n))
    return PolarData(M, g, f)


# the second-order system satisfied by g and f in adapted coordinates


def lemma_pde_residuals(u: PolyVectorField, alpha, beta, g: RationalPoly) -> dict:
    """Residuals of the second-order system on (g, f) for a = e1, b = αe1 + βe2.

    The constant-polar hypothesis is checked first; when it fails the report
    carries ``hypothesis_ok = False`` and no residuals.
    """
    n = u.n
    if n < 3:
        raise TensorError("n must be at least 3")
    alpha, beta = _fr(alpha), _fr(beta)
    a = [Fraction(int(i == 0)) for i in range(n)]
    b = [alpha if i == 0 else (beta if i == 1 else Fraction(0)) for i in range(n)]
    M = dev_dyad(np.array(a, dtype=object), np.array(b, dtype=object))
    hyp = check_build(u, M, g)
    if not hyp["exact_zero"]:
        return {"hypothesis_ok": False, "nonzero_polar_entries": hyp["nonzero_entries"], "residuals": {},
                "all_zero": False}
    f = polar_data(u, a, b, g).f
    G = lambda i, j: g.partial(i, j)  # noqa: E731
    Fd = lambda i, j: f.partial(i, j)  # noqa: E731
    half = Fraction(1, 2)
    res: dict = {}

    def put(name, p):
        res[name] = p

    # indices below are zero-based: 0 ↔ x1, 1 ↔ x2, j ≥ 2 ↔ x_{j+1}
    put("zero_one", G(1, 0).scale(beta) - G(1, 1).scale(alpha) - Fd(1, 1) - Fd(0, 0))
    rest = range(2, n)
    for j in rest:
        put(f"one_one[{j + 1}]", G(j, j).scale(beta * half) + Fd(1, 0))
        put(f"one_two[{j + 1}]", Fd(0, 0) + Fd(j, j) + G(j, j).scale(alpha))
        put(f"one_three[{j + 1}]", G(0, j).scale(beta * half) - G(1, j).scale(alpha) - Fd(1, j))
        put(f"two_one[{j + 1}]", Fd(1, 1) + Fd(j, j))
        put(f"two_two[{j + 1}]", G(1, j).scale(beta * half) - Fd(0, j))
        for k in rest:
            if k != j:
                put(f"two_three[{k + 1},{j + 1}]", G(k, j))
                put(f"three_two[{k + 1},{j + 1}]", Fd(k, k) + Fd(j, j))
        for k in range(n):
            if k != j:
                put(f"three_one[{k + 1},{j + 1}]", Fd(k, j))
    if beta != 0:
        for j in rest:
            put(f"g_2j[{j + 1}]", G(1, j))
            put(f"g_1j[{j + 1}]", G(0, j))
            # ∂_j g = −(2 ∂₁₂f / β) x_j + v_j
            put(f"constancy[{j + 1}]", G(j, j) + Fd(0, 1).scale(2 / beta))
        for i in range(n):
            for j in range(i, n):
                put(f"hess_f_const[{i + 1},{j + 1}]", RationalPoly(n, {e: c for e, c in Fd(i, j).terms.items()
                                                                       if sum(e) > 0}, _trusted=True))
    nonzero = sorted(k for k, p in res.items() if not p.is_zero())
    return {"hypothesis_ok": True, "residuals": {k: p.is_zero() for k, p in res.items()},
            "nonzero": nonzero, "count": len(res), "all_zero": not nonzero, "beta_extras": beta != 0}


def g_structure(g: RationalPoly, alpha, beta) -> dict:
    """Decompose g as H₁(s) + H₂(t) + c·s·t + κΣ_{j≥3}x_j² + Σ v_j x_j with s = x1, t = αx1 + βx2.

    The change of variables x2 = (t − αs)/β is applied exactly; any monomial
    outside the allowed pattern is reported.
    """
    n = g.n
    alpha, beta = _fr(alpha), _fr(beta)
    if beta == 0:
        raise RigidityError("g_structure needs beta != 0")
    s = RationalPoly.variable(n, 0)
    t = RationalPoly.variable(n, 1)
    x2 = (t - s.scale(alpha)).scale(1 / beta)
    out = RationalPoly.zero(n)
    for e, c in g.terms.items():
        term = RationalPoly.constant(n, c)
        for i, p in enumerate(e):
            base = x2 if i == 1 else RationalPoly.variable(n, i)
            for _ in range(p):
                term = term * base
        out = out + term
    st = quad = None
    bad = []
    quads = {}
    for e, c in out.terms.items():
        head, tail = e[:2], e[2:]
        if sum(tail) == 0:
            if head[0] and head[1]:
                if head == (1, 1):
                    st = c
                else:
                    bad.append(e)
        elif sum(head) == 0 and sum(tail) == 1:
            continue
        elif sum(head) == 0 and sum(tail) == 2 and max(tail) == 2:
            quads[tail.index(2) + 2] = c
        else:
            bad.append(e)
    if quads:
        vals = set(quads.values())
        if len(vals) > 1 or len(quads) != n - 2:
            bad.append(("unequal x_j^2 coefficients", {k + 1: str(v) for k, v in quads.items()}))
        quad = next(iter(vals))
    return {"ok": not bad, "st_coefficient": st or Fraction(0), "square_coefficient": quad or Fraction(0),
            "violations": [str(x) for x in bad]}


# inverse problem on grids


def _hat_matrix(knots: np.ndarray, t: np.ndarray) -> np.ndarray:
    """Piecewise-linear interpolation weights, shape (len(t), len(knots))."""
    m = len(knots)
    i = np.clip(np.searchsorted(knots, t, side="right") - 1, 0, m - 2)
    w = np.clip((t - knots[i]) / (knots[i + 1] - knots[i]), 0.0, 1.0)
    H = np.zeros((len(t), m))
    rows = np.arange(len(t))
    H[rows, i] = 1 - w
    H[rows, i + 1] += w
    return H


def polar_residual(u, a, b, mu=None) -> float:
    """Mass-weighted distance of the cell polars of fd ℰ_d u from the line through dev_dyad(a, b)."""
    from .gridfield import fd_Ed

    mu = fd_Ed(u) if mu is None else mu
    M = dev_dyad(np.asarray(a, dtype=float), np.asarray(b, dtype=float))
    M = M / np.linalg.norm(M)
    D = mu.density.reshape(-1, u.n, u.n)
    proj = np.einsum("kij,ij->k", D, M)
    perp = np.linalg.norm(D - proj[:, None, None] * M, axis=(1, 2))
    total = float(np.sum(np.linalg.norm(D, axis=(1, 2))))
    scale = float(np.mean(np.linalg.norm(u.values, axis=-1))) / float(np.max(np.array(u.hi) - np.array(u.lo)))
    if total <= 1e-10 * max(scale, 1e-300) * len(D):
        return 0.0  # no measure to speak of: the polar condition is vacuous
    return float(np.sum(perp)) / total


def fit_profile(u, a, b, K=None, knots: int | None = None, polar_tol: float = 0.05,
                chunk: int = 8192) -> tuple:
    """Least-squares non-parallel profile for a sampled field with polar near dev_dyad(a, b).

    The unknowns are the nodal values of ψ₁ on a·x and ψ₂ on b·x (piecewise
    linear), v ∈ span(a, b)⊥, the admissible (η, ϑ) sector and the Killing
    parameters, all fitted jointly to the node values inside K (default: all
    nodes). Gauge: ψ₁ and ψ₂ vanish at their first knot and ψ₂ also at the
    second, which removes the constants and the skew combination
    ψ₁ += λt, ψ₂ −= λt. Returns (profile, report).
    """
    from .gridfield import _signed_distance
    from .kernel_space import design_matrix, kernel_dimension

    n = u.n
    fa, fb = _frvec(a), _frvec(b)
    if len(fa) != n or len(fb) != n:
        raise TensorError("a and b must match the grid dimension")
    _check_nonparallel(fa, fb)
    af = np.array([float(x) for x in fa])
    bf = np.array([float(x) for x in fb])
    pres = polar_residual(u, af, bf)
    if pres > polar_tol:
        raise RigidityError(f"polar is not constant: relative orthogonal residual {pres:.3g} > {polar_tol}")
    X = u.coords().reshape(-1, n)
    Y = u.values.reshape(-1, n)
    if K is not None:
        keep = _signed_distance(K, X) <= 0
        X, Y = X[keep], Y[keep]
    m = knots or max(u.resolution)
    ta, tb = X @ af, X @ bf
    k1 = np.linspace(ta.min(), ta.max(), m)
    k2 = np.linspace(tb.min(), tb.max(), m)
    for kn, t in ((k1, ta), (k2, tb)):
        # nodes sitting on a knot may round to either side of it
        nudge = 1e-9 * (kn[-1] - kn[0])
        counts = np.bincount(np.clip(np.searchsorted(kn, t + nudge, side="right") - 1, 0, m - 2), minlength=m - 1)
        if np.any(counts == 0) or kn[-1] <= kn[0]:
            raise RigidityError("degenerate line coverage: a knot interval holds no grid nodes")
    comp = orthogonal_complement_basis([fa, fb], n)
    polys = [v_part(fa, fb, w) for w in comp]
    if n == 3:
        sector = [(1, 0), (0, 1)]
    else:
        al, be2 = adapted_invariants(fa, fb)
        sector = [(2 * al, be2)]
    polys += [solve_Q(fa, fb, [0] * n, e, t) for e, t in sector]
    kd = kernel_dimension(n)
    free1 = np.arange(1, m)
    free2 = np.arange(2, m)
    p = len(free1) + len(free2) + len(polys) + kd
    GtG = np.zeros((p, p))
    Gty = np.zeros(p)
    for s in range(0, len(X), chunk):
        x = X[s:s + chunk]
        k = len(x)
        H1 = _hat_matrix(k1, ta[s:s + chunk])[:, free1]
        H2 = _hat_matrix(k2, tb[s:s + chunk])[:, free2]
        cols = [H1[:, None, :] * bf[None, :, None], H2[:, None, :] * af[None, :, None]]
        cols.append(np.stack([q.evaluate(x) for q in polys], axis=-1).astype(float))
        cols.append(design_matrix(x))
        G = np.concatenate(cols, axis=-1).reshape(k * n, p)
        GtG += G.T @ G
        Gty += G.T @ Y[s:s + chunk].reshape(-1)
    coef, _, rank, _ = np.linalg.lstsq(GtG, Gty, rcond=1e-13)
    i = 0
    psi1 = np.zeros(m)
    psi1[free1] = coef[i:i + len(free1)]
    i += len(free1)
    psi2 = np.zeros(m)
    psi2[free2] = coef[i:i + len(free2)]
    i += len(free2)
    pc = coef[i:i + len(polys)]
    i += len(polys)
    v = sum((float(c) * np.array([float(x) for x in w]) for c, w in zip(pc, comp)), np.zeros(n))
    eta = sum(float(c) * float(e) for c, (e, _) in zip(pc[len(comp):], sector))
    theta = sum(float(c) * float(t) for c, (_, t) in zip(pc[len(comp):], sector))
    L = KillingField.from_parameters(n, coef[i:])
    prof = NonParallelProfile(tuple(af), tuple(bf), Profile1D.sampled(k1, psi1), Profile1D.sampled(k2, psi2),
                              tuple(v), eta, theta, L)
    R = evaluate_nonparallel(prof, X)
    err = float(np.sum(np.linalg.norm(R - Y, axis=1)))
    ref = float(np.sum(np.linalg.norm(Y, axis=1)))
    rel = err / ref if ref > 0 else err
    report = {
        "polar_residual": pres,
        "relative_l1": rel,
        "rank": int(rank),
        "parameters": p,
        "nodes": int(len(X)),
        "knots": m,
        "v": v.tolist(),
        "eta": eta,
        "theta": theta,
        "psi1_tv": prof.psi1.total_variation(),
        "psi2_tv": prof.psi2.total_variation(),
    }
    return prof, report


def profile_jump(psi: Profile1D, t0: float, halfwidth: float) -> float:
    """Size of the jump of a sampled profile at t0, net of its linear trend.

    The increment over [t0 − w, t0 + w] is compared with half the increment
    over the two adjacent windows [t0 − 3w, t0 − w] and [t0 + w, t0 + 3w].
    """
    if psi.is_polynomial:
        raise RigidityError("jumps are measured on sampled profiles")
    w = halfwidth
    p = psi(np.array([t0 - 3 * w, t0 - w, t0 + w, t0 + 3 * w]))
    core = p[2] - p[1]
    ring = (p[3] - p[2]) + (p[1] - p[0])
    return float(abs(core - ring / 2))
