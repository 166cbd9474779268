"""The kernel of ℰ_d: fields (A + γId)y + (s·y)y − s|y|²/2 + b with A skew."""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .polyfield import PolyVectorField, RationalPoly
from .tensor_core import TensorError, as_array, is_exact


def kernel_dimension(n: int) -> int:
    """n(n−1)/2 skew + 1 dilation + n conformal + n translation parameters."""
    if n < 3:
        raise ValueError("n must be at least 3: for n = 2 the operator is not C-elliptic and its kernel is infinite dimensional")
    return n * (n - 1) // 2 + 2 * n + 1


@dataclass(frozen=True)
class KillingField:
    """Kernel element, optionally written around a centre c: L(y) = L0(y − c)."""

    A: np.ndarray
    gamma: object
    s: np.ndarray
    b: np.ndarray
    center: np.ndarray | None = None

    def __post_init__(self):
        A = as_array(self.A)
        n = A.shape[0]
        if A.shape != (n, n) or np.shape(self.s) != (n,) or np.shape(self.b) != (n,):
            raise TensorError("Killing field parameter shapes disagree")
        if is_exact(A):
            if any(v != 0 for v in (A + A.T).flat):
                raise TensorError("A must be antisymmetric")
        else:
            if np.max(np.abs(A + A.T), initial=0.0) > 1e-12 * max(1.0, float(np.max(np.abs(A)))):
                raise TensorError("A must be antisymmetric")
            # roundoff-level asymmetry only; store an exactly skew representative
            A = (A - A.T) / 2
        object.__setattr__(self, "A", A)
        object.__setattr__(self, "s", as_array(self.s))
        object.__setattr__(self, "b", as_array(self.b))

    @property
    def n(self) -> int:
        return self.A.shape[0]

    def _shift(self, y):
        y = np.asarray(y)
        if y.shape[-1] != self.n:
            raise TensorError("point dimension does not match the field")
        if self.center is None:
            return y
        return y - np.asarray(self.center)

    def evaluate(self, y) -> np.ndarray:
        """Value at points y with shape (..., n)."""
        z = self._shift(y)
        if z.dtype != object:
            A, s, b, g = (np.asarray(v, dtype=float) for v in (self.A, self.s, self.b, self.gamma))
            half = 0.5
        else:
            A, s, b, g = self.A, self.s, self.b, self.gamma
            half = Fraction(1, 2)
        sz = np.asarray(z @ s)
        zz = np.asarray(np.sum(z * z, axis=-1))
        return z @ A.T + g * z + sz[..., None] * z - half * zz[..., None] * s + b

    __call__ = evaluate

    def jacobian(self, y) -> np.ndarray:
        """∇L with [..., i, j] = ∂_j L_i."""
        z = np.asarray(self._shift(y), dtype=float)
        A, s = np.asarray(self.A, dtype=float), np.asarray(self.s, dtype=float)
        n = self.n
        sz = z @ s
        eye = np.eye(n)
        return (A + float(self.gamma) * eye + z[..., :, None] * s[None, :]
                + sz[..., None, None] * eye - s[:, None] * z[..., None, :])

    def to_polyfield(self) -> PolyVectorField:
        """Exact polynomial form; float parameters are converted exactly."""
        n = self.n
        c = [Fraction(0)] * n if self.center is None else [Fraction(v) for v in self.center]
        z = [RationalPoly.variable(n, i) - c[i] for i in range(n)]
        A = [[Fraction(self.A[i, j]) for j in range(n)] for i in range(n)]
        s = [Fraction(v) for v in self.s]
        b = [Fraction(v) for v in self.b]
        g = Fraction(self.gamma)
        sz = RationalPoly.zero(n)
        zz = RationalPoly.zero(n)
        for i in range(n):
            sz = sz + z[i] * s[i]
            zz = zz + z[i] * z[i]
        comps = []
        for i in range(n):
            p = z[i] * g + sz * z[i] - zz * (s[i] / 2) + b[i]
            for j in range(n):
                if A[i][j]:
                    p = p + z[j] * A[i][j]
            comps.append(p)
        return PolyVectorField(comps)

    def recentered(self, new_center) -> KillingField:
        """The same field written around ``new_center``."""
        n = self.n
        c_old = np.zeros(n) if self.center is None else np.asarray(self.center, dtype=float)
        c_new = np.asarray(new_center, dtype=float)
        d = c_new - c_old
        A, s = np.asarray(self.A, dtype=float), np.asarray(self.s, dtype=float)
        A2 = A + (np.outer(d, s) - np.outer(s, d))
        g2 = float(self.gamma) + float(s @ d)
        b2 = self.evaluate(c_new).astype(float)
        return KillingField(A2, g2, s.copy(), b2, c_new)

    def parameters(self) -> np.ndarray:
        """Flat vector (A upper triangle row-major, γ, s, b)."""
        n = self.n
        up = [self.A[i, j] for i in range(n) for j in range(i + 1, n)]
        return np.array(up + [self.gamma] + list(self.s) + list(self.b), dtype=self.A.dtype)

    @classmethod
    def from_parameters(cls, n: int, p, center=None) -> KillingField:
        p = as_array(list(p)) if not isinstance(p, np.ndarray) else p
        if len(p) != kernel_dimension(n):
            raise TensorError(f"expected {kernel_dimension(n)} parameters, got {len(p)}")
        exact = is_exact(p)
        A = np.full((n, n), Fraction(0), dtype=object) if exact else np.zeros((n, n))
        k = 0
        for i in range(n):
            for j in range(i + 1, n):
                A[i, j] = p[k]
                A[j, i] = -p[k]
                k += 1
        gamma = p[k]
        s = p[k + 1:k + 1 + n]
        b = p[k + 1 + n:k + 1 + 2 * n]
        return cls(A, gamma, np.array(s), np.array(b), center)

    def to_json(self) -> dict:
        def enc(v):
            return f"{v.numerator}/{v.denominator}" if isinstance(v, Fraction) else float(v)

        n = self.n
        out = {
            "A_upper": [enc(self.A[i, j]) for i in range(n) for j in range(i + 1, n)],
            "gamma": enc(self.gamma),
            "s": [enc(v) for v in self.s],
            "b": [enc(v) for v in self.b],
        }
        if self.center is not None:
            out["center"] = [float(v) for v in self.center]
        return out

    @classmethod
    def from_json(cls, obj) -> KillingField:
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            s = obj["s"]
            n = len(s)
            vals = list(obj["A_upper"]) + [obj["gamma"]] + list(s) + list(obj["b"])
        except (KeyError, TypeError) as exc:
            raise TensorError(f"malformed Killing field JSON: {exc}") from exc
        dec = [Fraction(v) if isinstance(v, (str, int)) else float(v) for v in vals]
        exact = all(isinstance(v, Fraction) for v in dec)
        p = as_array(dec, exact=exact)
        return cls.from_parameters(n, p, obj.get("center"))


def random_killing(n: int, rng: np.random.Generator, exact: bool = False, scale: float = 1.0) -> KillingField:
    d = kernel_dimension(n)
    if exact:
        p = as_array([Fraction(int(rng.integers(-9, 10)), int(rng.integers(1, 5))) for _ in range(d)], exact=True)
    else:
        p = scale * rng.standard_normal(d)
    return KillingField.from_parameters(n, p)


def design_rows(y) -> list:
    """Rows of the linear map parameters -> L(y) at one point (n rows)."""
    n = len(y)
    exact = all(isinstance(v, (int, Fraction)) for v in y)
    one = Fraction(1) if exact else 1.0
    zero = Fraction(0) if exact else 0.0
    half = Fraction(1, 2) if exact else 0.5
    yy = sum(v * v for v in y)
    rows = []
    for i in range(n):
        row = []
        for p in range(n):
            for q in range(p + 1, n):
                # A[p,q] = a, A[q,p] = −a
                row.append(y[q] if i == p else (-y[p] if i == q else zero))
        row.append(y[i])
        for k in range(n):
            row.append(y[k] * y[i] - (half * yy if k == i else zero))
        for k in range(n):
            row.append(one if k == i else zero)
        rows.append(row)
    return rows


def design_matrix(points) -> np.ndarray:
    """Float version of design_rows for many points at once, shape (k, n, d)."""
    y = np.asarray(points, dtype=float)
    k, n = y.shape
    cols = []
    eye = np.eye(n)
    for p in range(n):
        for q in range(p + 1, n):
            c = np.zeros((k, n))
            c[:, p] = y[:, q]
            c[:, q] = -y[:, p]
            cols.append(c)
    cols.append(y)
    yy = np.sum(y * y, axis=1)
    for j in range(n):
        cols.append(y[:, j:j + 1] * y - 0.5 * yy[:, None] * eye[j])
    for j in range(n):
        cols.append(np.broadcast_to(eye[j], (k, n)))
    return np.stack(cols, axis=-1)


def _solve_exact(M: list, rhs: list) -> list:
    """Gauss-Jordan solve of a square Fraction system; raises on singularity."""
    m = len(M)
    aug = [list(r) + [v] for r, v in zip(M, rhs)]
    for c in range(m):
        piv = next((r for r in range(c, m) if aug[r][c] != 0), None)
        if piv is None:
            raise np.linalg.LinAlgError("sample set is rank deficient")
        aug[c], aug[piv] = aug[piv], aug[c]
        p = aug[c][c]
        aug[c] = [v / p for v in aug[c]]
        for r in range(m):
            if r != c and aug[r][c] != 0:
                f = aug[r][c]
                aug[r] = [x - f * y for x, y in zip(aug[r], aug[c])]
    return [aug[r][m] for r in range(m)]


def fit_killing(points, values) -> tuple:
    """Least-squares kernel element through samples; returns (field, sum of squared residuals).

    Exact normal equations are used when every input is rational.
    """
    points = list(points)
    values = list(values)
    if len(points) != len(values) or not points:
        raise ValueError("points and values must be non-empty and of equal length")
    n = len(points[0])
    d = kernel_dimension(n)
    if len(points) < d:
        raise ValueError(f"need at least {d} samples in dimension {n}, got {len(points)}")
    flat = [v for p in points for v in p] + [v for w in values for v in w]
    exact = all(isinstance(v, (int, Fraction)) for v in flat)
    rows, rhs = [], []
    for y, w in zip(points, values):
        y = [Fraction(v) for v in y] if exact else [float(v) for v in y]
        rows.extend(design_rows(y))
        rhs.extend(Fraction(v) if exact else float(v) for v in w)
    if exact:
        AtA = [[sum(r[i] * r[j] for r in rows) for j in range(d)] for i in range(d)]
        Atb = [sum(r[i] * v for r, v in zip(rows, rhs)) for i in range(d)]
        p = _solve_exact(AtA, Atb)
        res2 = sum((sum(c * x for c, x in zip(r, p)) - v) ** 2 for r, v in zip(rows, rhs))
        field = KillingField.from_parameters(n, as_array(p, exact=True))
        return field, res2
    G = np.array(rows, dtype=float)
    r = np.array(rhs, dtype=float)
    p, _, rank, _ = np.linalg.lstsq(G, r, rcond=None)
    if rank < d:
        raise np.linalg.LinAlgError("sample set is rank deficient")
    return KillingField.from_parameters(n, p), float(np.sum((G @ p - r) ** 2))
