"""Exact polynomial scalar, vector and matrix fields over the rationals.

Differential operators act term by term, so every identity checked here is
an equality of rational coefficients rather than a floating-point estimate.
"""

from __future__ import annotations

import json
from fractions import Fraction
from itertools import combinations_with_replacement
from math import comb

import numpy as np

MAX_DEGREE = 16


class PolyError(ValueError):
    pass


def _falling(b: int, a: int) -> int:
    out = 1
    for t in range(a):
        out *= b - t
    return out


class RationalPoly:
    """Sparse polynomial in n variables with Fraction coefficients.

    ``terms`` maps exponent tuples to nonzero coefficients.
    """

    __slots__ = ("n", "terms")

    def __init__(self, n: int, terms: dict | None = None, _trusted: bool = False):
        self.n = n
        if _trusted:
            self.terms = terms
            return
        clean = {}
        for exps, c in (terms or {}).items():
            exps = tuple(int(e) for e in exps)
            if len(exps) != n or any(e < 0 for e in exps):
                raise PolyError(f"bad exponent {exps} for n={n}")
            if sum(exps) > MAX_DEGREE:
                raise PolyError(f"total degree {sum(exps)} exceeds {MAX_DEGREE}")
            c = Fraction(c)
            if c:
                clean[exps] = clean.get(exps, 0) + c
        self.terms = {k: v for k, v in clean.items() if v}

    @classmethod
    def zero(cls, n: int) -> RationalPoly:
        return cls(n, {}, _trusted=True)

    @classmethod
    def constant(cls, n: int, c) -> RationalPoly:
        c = Fraction(c)
        return cls(n, {(0,) * n: c} if c else {}, _trusted=True)

    @classmethod
    def variable(cls, n: int, i: int) -> RationalPoly:
        e = [0] * n
        e[i] = 1
        return cls(n, {tuple(e): Fraction(1)}, _trusted=True)

    def degree(self) -> int:
        return max((sum(e) for e in self.terms), default=-1)

    def is_zero(self) -> bool:
        return not self.terms

    def sorted_terms(self) -> list:
        return sorted(self.terms.items(), key=lambda kv: (sum(kv[0]), kv[0]))

    def _coerce(self, other) -> RationalPoly:
        if isinstance(other, RationalPoly):
            if other.n != self.n:
                raise PolyError("variable count mismatch")
            return other
        return RationalPoly.constant(self.n, other)

    def __add__(self, other):
        other = self._coerce(other)
        out = dict(self.terms)
        for k, v in other.terms.items():
            s = out.get(k, 0) + v
            if s:
                out[k] = s
            else:
                out.pop(k, None)
        return RationalPoly(self.n, out, _trusted=True)

    __radd__ = __add__

    def __neg__(self):
        return RationalPoly(self.n, {k: -v for k, v in self.terms.items()}, _trusted=True)

    def __sub__(self, other):
        return self + (-self._coerce(other))

    def __rsub__(self, other):
        return self._coerce(other) - self

    def scale(self, c) -> RationalPoly:
        c = Fraction(c)
        if not c:
            return RationalPoly.zero(self.n)
        return RationalPoly(self.n, {k: v * c for k, v in self.terms.items()}, _trusted=True)

    def __mul__(self, other):
        if not isinstance(other, RationalPoly):
            return self.scale(other)
        other = self._coerce(other)
        out: dict = {}
        for k1, v1 in self.terms.items():
            for k2, v2 in other.terms.items():
                k = tuple(a + b for a, b in zip(k1, k2))
                out[k] = out.get(k, 0) + v1 * v2
        if any(sum(k) > MAX_DEGREE for k in out):
            raise PolyError(f"product exceeds degree {MAX_DEGREE}")
        return RationalPoly(self.n, {k: v for k, v in out.items() if v}, _trusted=True)

    __rmul__ = __mul__

    def __eq__(self, other):
        if isinstance(other, RationalPoly):
            return self.n == other.n and self.terms == other.terms
        return self == RationalPoly.constant(self.n, other)

    def __hash__(self):
        return hash((self.n, frozenset(self.terms.items())))

    def __repr__(self):
        if not self.terms:
            return "0"
        parts = []
        for e, c in self.sorted_terms():
            mono = "*".join(f"x{i + 1}^{p}" if p > 1 else f"x{i + 1}" for i, p in enumerate(e) if p)
            parts.append(f"{c}" + (f"*{mono}" if mono else ""))
        return " + ".join(parts)

    def diff(self, i: int, order: int = 1) -> RationalPoly:
        alpha = [0] * self.n
        alpha[i] = order
        return self.derivative(tuple(alpha))

    def derivative(self, alpha: tuple) -> RationalPoly:
        """∂^alpha with alpha an exponent tuple."""
        out = {}
        for e, c in self.terms.items():
            if any(ei < ai for ei, ai in zip(e, alpha)):
                continue
            f = 1
            for ei, ai in zip(e, alpha):
                if ai:
                    f *= _falling(ei, ai)
            out[tuple(ei - ai for ei, ai in zip(e, alpha))] = c * f
        return RationalPoly(self.n, out, _trusted=True)

    def partial(self, *idx: int) -> RationalPoly:
        """Mixed partial ∂_{idx[0]} ∂_{idx[1]} ..."""
        alpha = [0] * self.n
        for i in idx:
            alpha[i] += 1
        return self.derivative(tuple(alpha))

    def gradient(self) -> PolyVectorField:
        return PolyVectorField([self.diff(i) for i in range(self.n)])

    def laplacian(self) -> RationalPoly:
        out = RationalPoly.zero(self.n)
        for i in range(self.n):
            out = out + self.diff(i, 2)
        return out

    def __call__(self, x):
        """Exact evaluation at a single point."""
        total = Fraction(0) if all(isinstance(v, (int, Fraction)) for v in x) else 0.0
        for e, c in self.terms.items():
            t = c
            for xi, p in zip(x, e):
                if p:
                    t = t * xi**p
            total = total + t
        return total

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Float evaluation at an array of points with shape (..., n)."""
        points = np.asarray(points, dtype=float)
        out = np.zeros(points.shape[:-1])
        if not self.terms:
            return out
        top = max(max(e) for e in self.terms)
        # powers[i][p] = x_i**p, built once and reused by every monomial
        powers = []
        for i in range(self.n):
            col = [np.ones(points.shape[:-1]), points[..., i]]
            for _ in range(2, top + 1):
                col.append(col[-1] * points[..., i])
            powers.append(col)
        for e, c in self.terms.items():
            t = None
            for i, p in enumerate(e):
                if p:
                    t = powers[i][p] if t is None else t * powers[i][p]
            if t is None:
                out += float(c)
            else:
                out += float(c) * t
        return out

    def to_json(self) -> list:
        return [{"exps": list(e), "coef": f"{c.numerator}/{c.denominator}"} for e, c in self.sorted_terms()]

    @classmethod
    def from_json(cls, n: int, items: list) -> RationalPoly:
        try:
            return cls(n, {tuple(t["exps"]): Fraction(t["coef"]) for t in items})
        except (KeyError, TypeError, ValueError, ZeroDivisionError) as exc:
            raise PolyError(f"malformed polynomial JSON: {exc}") from exc


class PolyVectorField:
    __slots__ = ("n", "components")

    def __init__(self, components):
        components = tuple(components)
        if not components:
            raise PolyError("empty vector field")
        n = components[0].n
        if any(c.n != n for c in components):
            raise PolyError("components disagree on n")
        self.n = n
        self.components = components

    @classmethod
    def zero(cls, n: int, length: int | None = None) -> PolyVectorField:
        return cls([RationalPoly.zero(n) for _ in range(length or n)])

    def __getitem__(self, i):
        return self.components[i]

    def __len__(self):
        return len(self.components)

    def __add__(self, other):
        return PolyVectorField([a + b for a, b in zip(self.components, other.components)])

    def __sub__(self, other):
        return PolyVectorField([a - b for a, b in zip(self.components, other.components)])

    def __neg__(self):
        return PolyVectorField([-a for a in self.components])

    def __mul__(self, c):
        return PolyVectorField([a * c for a in self.components])

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, PolyVectorField) and self.components == other.components

    def __hash__(self):
        return hash(self.components)

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def degree(self) -> int:
        return max(c.degree() for c in self.components)

    def map(self, fn) -> PolyVectorField:
        return PolyVectorField([fn(c) for c in self.components])

    def __call__(self, x):
        return [c(x) for c in self.components]

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        return np.stack([c.evaluate(points) for c in self.components], axis=-1)

    def jacobian(self, points: np.ndarray) -> np.ndarray:
        """Float ∇u at points, shape (..., n, n) with [..., i, j] = ∂_j u_i."""
        g = gradient(self)
        return g.evaluate(points)

    def to_json(self) -> dict:
        return {"n": self.n, "components": [c.to_json() for c in self.components]}

    @classmethod
    def from_json(cls, obj) -> PolyVectorField:
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            n = int(obj["n"])
            comps = obj["components"]
        except (KeyError, TypeError, ValueError) as exc:
            raise PolyError(f"malformed vector field JSON: {exc}") from exc
        if len(comps) != n:
            raise PolyError("vector field needs n components")
        return cls([RationalPoly.from_json(n, c) for c in comps])


class PolyMatrixField:
    """n x n matrix of polynomials; ``symmetric``/``trace_free`` are checked when requested."""

    __slots__ = ("n", "entries")

    def __init__(self, entries, symmetric: bool = False, trace_free: bool = False):
        entries = tuple(tuple(row) for row in entries)
        n = len(entries)
        if n == 0 or any(len(r) != n for r in entries):
            raise PolyError("matrix field must be square")
        if any(p.n != n for r in entries for p in r):
            raise PolyError("entries disagree on n")
        self.n = n
        self.entries = entries
        if symmetric and not self.is_symmetric():
            raise PolyError("matrix field is not symmetric")
        if trace_free and not self.trace().is_zero():
            raise PolyError("matrix field is not trace-free")

    @classmethod
    def zero(cls, n: int) -> PolyMatrixField:
        z = RationalPoly.zero(n)
        return cls([[z] * n for _ in range(n)])

    @classmethod
    def constant(cls, M, n: int | None = None) -> PolyMatrixField:
        M = np.asarray(M, dtype=object)
        n = n or M.shape[0]
        return cls([[RationalPoly.constant(n, Fraction(M[i, j])) for j in range(n)] for i in range(n)])

    @classmethod
    def scalar_times(cls, phi: RationalPoly, M) -> PolyMatrixField:
        """φ(x) M for a constant matrix M."""
        M = np.asarray(M, dtype=object)
        n = phi.n
        return cls([[phi.scale(Fraction(M[i, j])) for j in range(n)] for i in range(n)])

    def __getitem__(self, ij):
        i, j = ij
        return self.entries[i][j]

    def _zip(self, other, fn):
        return PolyMatrixField([[fn(a, b) for a, b in zip(r1, r2)] for r1, r2 in zip(self.entries, other.entries)])

    def __add__(self, other):
        return self._zip(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._zip(other, lambda a, b: a - b)

    def __neg__(self):
        return PolyMatrixField([[-a for a in r] for r in self.entries])

    def __mul__(self, c):
        return PolyMatrixField([[a * c for a in r] for r in self.entries])

    __rmul__ = __mul__

    def __eq__(self, other):
        return isinstance(other, PolyMatrixField) and self.entries == other.entries

    def __hash__(self):
        return hash(self.entries)

    def transpose(self) -> PolyMatrixField:
        return PolyMatrixField([[self.entries[j][i] for j in range(self.n)] for i in range(self.n)])

    def is_symmetric(self) -> bool:
        return all(self.entries[i][j] == self.entries[j][i] for i in range(self.n) for j in range(i))

    def trace(self) -> RationalPoly:
        out = RationalPoly.zero(self.n)
        for i in range(self.n):
            out = out + self.entries[i][i]
        return out

    def is_zero(self) -> bool:
        return all(p.is_zero() for r in self.entries for p in r)

    def degree(self) -> int:
        return max(p.degree() for r in self.entries for p in r)

    def __call__(self, x):
        return np.array([[p(x) for p in r] for r in self.entries], dtype=object)

    def evaluate(self, points: np.ndarray) -> np.ndarray:
        """Float values with shape (..., n, n)."""
        rows = [np.stack([p.evaluate(points) for p in r], axis=-1) for r in self.entries]
        return np.stack(rows, axis=-2)

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "components": [p.to_json() for r in self.entries for p in r],
        }

    @classmethod
    def from_json(cls, obj) -> PolyMatrixField:
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            n = int(obj["n"])
            comps = obj["components"]
        except (KeyError, TypeError, ValueError) as exc:
            raise PolyError(f"malformed matrix field JSON: {exc}") from exc
        if len(comps) != n * n:
            raise PolyError("matrix field needs n*n components")
        polys = [RationalPoly.from_json(n, c) for c in comps]
        return cls([polys[i * n:(i + 1) * n] for i in range(n)])


def _check_field_n(u, minimum: int = 2):
    if u.n < minimum:
        raise PolyError(f"need n >= {minimum}")


# first-order operators


def gradient(u: PolyVectorField) -> PolyMatrixField:
    """∇u with entry (i, j) = ∂_j u_i."""
    n = u.n
    return PolyMatrixField([[u[i].diff(j) for j in range(n)] for i in range(n)])


def divergence(u: PolyVectorField) -> RationalPoly:
    out = RationalPoly.zero(u.n)
    for i in range(u.n):
        out = out + u[i].diff(i)
    return out


def op_E(u: PolyVectorField) -> PolyMatrixField:
    """Symmetric gradient (∇u + ∇uᵗ)/2."""
    n = u.n
    half = Fraction(1, 2)
    rows = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            p = (u[i].diff(j) + u[j].diff(i)).scale(half)
            rows[i][j] = rows[j][i] = p
    return PolyMatrixField(rows)


def op_Ed(u: PolyVectorField) -> PolyMatrixField:
    """Deviatoric symmetric gradient ℰu − (div u / n) Id."""
    _check_field_n(u)
    n = u.n
    E = op_E(u)
    d = divergence(u).scale(Fraction(1, n))
    rows = [list(r) for r in E.entries]
    for i in range(n):
        rows[i][i] = rows[i][i] - d
    return PolyMatrixField(rows)


def op_W(u: PolyVectorField) -> PolyMatrixField:
    """Skew part (∇u − ∇uᵗ)/2 with ∇u_ij = ∂_j u_i."""
    n = u.n
    half = Fraction(1, 2)
    return PolyMatrixField([[(u[i].diff(j) - u[j].diff(i)).scale(half) for j in range(n)] for i in range(n)])


def divergence_adjoint(F: PolyMatrixField) -> PolyVectorField:
    """Row divergence (div F)_i = Σ_j ∂_j F_ij."""
    n = F.n
    out = []
    for i in range(n):
        acc = RationalPoly.zero(n)
        for j in range(n):
            acc = acc + F[i, j].diff(j)
        out.append(acc)
    return PolyVectorField(out)


def _require_sym_trace_free(F: PolyMatrixField):
    if not F.is_symmetric():
        raise PolyError("field must be symmetric")
    if not F.trace().is_zero():
        raise PolyError("field must be trace-free")


# second-order operators


def op_SV(M: PolyMatrixField) -> PolyMatrixField:
    """Saint-Venant operator Σ_i ∂_ik M_ij + ∂_ij M_ik − ∂_jk M_ii − ∂_ii M_jk."""
    if not M.is_symmetric():
        raise PolyError("Saint-Venant operator needs a symmetric field")
    n = M.n
    tr = M.trace()
    rows = [[None] * n for _ in range(n)]
    for j in range(n):
        for k in range(j, n):
            acc = RationalPoly.zero(n)
            for i in range(n):
                acc = acc + M[i, j].partial(i, k) + M[i, k].partial(i, j) - M[j, k].partial(i, i)
            acc = acc - tr.partial(j, k)
            rows[j][k] = rows[k][j] = acc
    return PolyMatrixField(rows)


# fourth-order annihilator


class _DerivCache:
    """Memoized mixed partials of the entries of a matrix field."""

    def __init__(self, F: PolyMatrixField):
        self.F = F
        self.cache: dict = {}

    def __call__(self, a: int, b: int, *idx: int) -> RationalPoly:
        if a > b:
            a, b = b, a
        key = (a, b, tuple(sorted(idx)))
        hit = self.cache.get(key)
        if hit is None:
            hit = self.F[a, b].partial(*idx)
            self.cache[key] = hit
        return hit


def _sum(n: int, polys) -> RationalPoly:
    acc: dict = {}
    for p in polys:
        for k, v in p.terms.items():
            acc[k] = acc.get(k, 0) + v
    return RationalPoly(n, {k: v for k, v in acc.items() if v}, _trusted=True)


def op_A(F: PolyMatrixField) -> PolyMatrixField:
    """Fourth-order annihilator of ℰ_d, evaluated in index form.

    A(F)_jk = Σ_{i,l} ∂_iijl F_kl + ∂_iikl F_lj − Σ_{i,l} ∂_iill F_jk
              − (n−2)/(n−1) Σ_{i,l} ∂_iljk F_il − δ_jk/(n−1) Σ_{i,l,m} ∂_iilm F_lm
    """
    _require_sym_trace_free(F)
    n = F.n
    D = _DerivCache(F)
    c1 = Fraction(n - 2, n - 1)
    c2 = Fraction(1, n - 1)
    diag_term = _sum(n, (D(l, m, i, i, l, m) for i in range(n) for l in range(n) for m in range(n)))
    rows = [[None] * n for _ in range(n)]
    for j in range(n):
        for k in range(j, n):
            pos = _sum(
                n,
                (D(k, l, i, i, j, l) for i in range(n) for l in range(n)),
            ) + _sum(n, (D(l, j, i, i, k, l) for i in range(n) for l in range(n)))
            neg = _sum(n, (D(j, k, i, i, l, l) for i in range(n) for l in range(n)))
            mixed = _sum(n, (D(i, l, i, l, j, k) for i in range(n) for l in range(n)))
            val = pos - neg - mixed.scale(c1)
            if j == k:
                val = val - diag_term.scale(c2)
            rows[j][k] = rows[k][j] = val
    return PolyMatrixField(rows)


def op_A_remark(F: PolyMatrixField) -> PolyMatrixField:
    """Same annihilator written through div, Δ and div div.

    A(F)_jk = Δ(∂_j divF_k + ∂_k divF_j) − Δ²F_jk − (n−2)/(n−1) ∂_jk(div div F)
              − δ_jk/(n−1) Δ(div div F)
    """
    _require_sym_trace_free(F)
    n = F.n
    dF = divergence_adjoint(F)
    ddF = divergence(dF)
    lap_dd = ddF.laplacian()
    c1 = Fraction(n - 2, n - 1)
    c2 = Fraction(1, n - 1)
    rows = [[None] * n for _ in range(n)]
    for j in range(n):
        for k in range(j, n):
            val = (dF[k].diff(j) + dF[j].diff(k)).laplacian()
            val = val - F[j, k].laplacian().laplacian()
            val = val - ddF.partial(j, k).scale(c1)
            if j == k:
                val = val - lap_dd.scale(c2)
            rows[j][k] = rows[k][j] = val
    return PolyMatrixField(rows)


# identity residuals


def leibniz_residual(phi: RationalPoly, u: PolyVectorField) -> PolyMatrixField:
    """ℰ_d(φu) − φ ℰ_d u − 𝔼_d[∇φ]u, identically zero."""
    if phi.n != u.n:
        raise PolyError("variable count mismatch")
    n = u.n
    lhs = op_Ed(u.map(lambda c: phi * c))
    rhs = op_Ed(u).entries
    grad = [phi.diff(i) for i in range(n)]
    dot = _sum(n, (grad[i] * u[i] for i in range(n))).scale(Fraction(1, n))
    half = Fraction(1, 2)
    rows = []
    for i in range(n):
        row = []
        for j in range(n):
            sym = (u[i] * grad[j] + u[j] * grad[i]).scale(half)
            if i == j:
                sym = sym - dot
            row.append(lhs[i, j] - phi * rhs[i][j] - sym)
        rows.append(row)
    return PolyMatrixField(rows)


def skew_gradient_residual(u: PolyVectorField) -> list:
    """Residual of the identity expressing ∇(Wu) through ℰ_d u and div u.

    With (Wu)_ij = (∂_i u_j − ∂_j u_i)/2 the k-th component of ∂(Wu)_ij equals
    ∂_i (ℰ_d u)_kj − ∂_j (ℰ_d u)_ki + ∂_i(div u/n) δ_jk − ∂_j(div u/n) δ_ik.
    Returns a nested list [i][j] of PolyVectorField residuals over k.
    """
    n = u.n
    Ed = op_Ed(u)
    W = op_W(u).transpose()
    d = divergence(u).scale(Fraction(1, n))
    out = []
    for i in range(n):
        row = []
        for j in range(n):
            comps = []
            for k in range(n):
                r = W[i, j].diff(k) - Ed[k, j].diff(i) + Ed[k, i].diff(j)
                if j == k:
                    r = r - d.diff(i)
                if i == k:
                    r = r + d.diff(j)
                comps.append(r)
            row.append(PolyVectorField(comps))
        out.append(row)
    return out


# coefficient-space linear algebra


def monomials(n: int, max_degree: int, min_degree: int = 0) -> list:
    """Exponent tuples with min_degree <= total degree <= max_degree, graded order."""
    out = []
    for d in range(min_degree, max_degree + 1):
        for combo in combinations_with_replacement(range(n), d):
            e = [0] * n
            for i in combo:
                e[i] += 1
            out.append(tuple(e))
    return out


def count_monomials(n: int, degree: int) -> int:
    return comb(n + degree, degree)


def exact_rank(rows: list) -> int:
    """Rank of a matrix of Fractions by fraction-exact Gaussian elimination."""
    m = [list(r) for r in rows]
    rank = 0
    ncols = len(m[0]) if m else 0
    for c in range(ncols):
        piv = next((r for r in range(rank, len(m)) if m[r][c] != 0), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        p = m[rank][c]
        for r in range(rank + 1, len(m)):
            if m[r][c] != 0:
                f = m[r][c] / p
                m[r] = [x - f * y for x, y in zip(m[r], m[rank])]
        rank += 1
    return rank


def ed_kernel_nullity(n: int, degree: int = 2) -> int:
    """Nullity of ℰ_d restricted to vector fields of degree <= ``degree``, computed exactly."""
    monos = monomials(n, degree)
    columns = []
    for comp in range(n):
        for e in monos:
            comps = [RationalPoly.zero(n)] * n
            comps = list(comps)
            comps[comp] = RationalPoly(n, {e: Fraction(1)}, _trusted=True)
            Ed = op_Ed(PolyVectorField(comps))
            col = {}
            for i in range(n):
                for j in range(i, n):
                    for k, v in Ed[i, j].terms.items():
                        col[(i, j, k)] = v
            columns.append(col)
    keys = sorted({k for col in columns for k in col})
    rows = [[col.get(k, Fraction(0)) for col in columns] for k in keys]
    return len(columns) - exact_rank(rows)


# random generation


def random_poly(n: int, degree: int, rng: np.random.Generator, density: float = 1.0,
                coef_range: int = 5, min_degree: int = 0) -> RationalPoly:
    """Random polynomial with small integer-over-small-integer coefficients."""
    terms = {}
    for e in monomials(n, degree, min_degree):
        if density < 1.0 and rng.random() > density:
            continue
        num = int(rng.integers(-coef_range, coef_range + 1))
        den = int(rng.integers(1, 4))
        if num:
            terms[e] = Fraction(num, den)
    return RationalPoly(n, terms)


def random_vector_field(n: int, degree: int, rng: np.random.Generator, density: float = 1.0) -> PolyVectorField:
    return PolyVectorField([random_poly(n, degree, rng, density) for _ in range(n)])


def random_sym_trace_free_field(n: int, degree: int, rng: np.random.Generator, density: float = 1.0) -> PolyMatrixField:
    rows = [[None] * n for _ in range(n)]
    for i in range(n):
        for j in range(i, n):
            rows[i][j] = rows[j][i] = random_poly(n, degree, rng, density)
    tr = RationalPoly.zero(n)
    for i in range(n - 1):
        tr = tr + rows[i][i]
    rows[n - 1][n - 1] = -tr
    return PolyMatrixField(rows)


# identity suites


def identity_suite(n: int, degree: int, trials: int, seed: int = 0, operator: str = "A") -> dict:
    """Count random fields u of degree ≤ ``degree`` whose A(ℰ_d u) (or SV(ℰu)) is not identically zero."""
    if n < 3:
        raise PolyError("n = 2 is excluded: ℰ_d is not C-elliptic there and the annihilator degenerates")
    if degree < 0:
        raise PolyError("degree must be non-negative")
    if trials < 1:
        raise PolyError("trials must be positive")
    if operator not in ("A", "SV"):
        raise PolyError(f"unknown operator {operator!r}")
    rng = np.random.default_rng(seed)
    failures = 0
    terms = 0
    for _ in range(trials):
        u = random_vector_field(n, degree, rng)
        R = op_A(op_Ed(u)) if operator == "A" else op_SV(op_E(u))
        nz = sum(len(R[i, j].terms) for i in range(n) for j in range(n))
        terms += nz
        failures += nz > 0
    return {"n": n, "degree": degree, "trials": trials, "seed": seed, "operator": operator,
            "nonzero_fields": failures, "nonzero_terms": terms, "pass": failures == 0}
