"""Dense n x n tensor algebra for the deviatoric symmetric gradient.

Every function accepts either float64 arrays or object arrays holding
``fractions.Fraction`` entries. Object arrays are treated as exact: symmetry
and trace checks are equalities. Float arrays are checked against a relative
tolerance of 1e-12 and violations raise instead of being projected away.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

FLOAT_TOL = 1e-12


class TensorError(ValueError):
    """Raised on dimension mismatches and invalid matrix classes."""


def is_exact(x) -> bool:
    return isinstance(x, np.ndarray) and x.dtype == object


def as_array(x, exact: bool | None = None) -> np.ndarray:
    """Coerce ``x`` to an array. Fractions and ints stay exact unless ``exact`` is False."""
    if isinstance(x, np.ndarray) and exact is None:
        return x
    arr = np.asarray(x, dtype=object)
    if exact is None:
        exact = all(isinstance(v, (int, Fraction)) for v in arr.flat)
    if exact:
        out = np.empty(arr.shape, dtype=object)
        for idx, v in np.ndenumerate(arr):
            out[idx] = Fraction(v)
        return out
    return np.asarray(arr, dtype=float)


def identity(n: int, exact: bool = False) -> np.ndarray:
    if exact:
        out = np.full((n, n), Fraction(0), dtype=object)
        for i in range(n):
            out[i, i] = Fraction(1)
        return out
    return np.eye(n)


def unify(*arrays):
    """Bring arrays to a common backend: exact only if all are exact."""
    arrays = [as_array(x) for x in arrays]
    if all(is_exact(x) for x in arrays):
        return arrays
    return [x.astype(float) for x in arrays]


def _scale(x: np.ndarray) -> float:
    m = float(np.max(np.abs(x.astype(float)))) if x.size else 0.0
    return max(m, 1.0)


def _check_square(T: np.ndarray) -> int:
    if T.ndim != 2 or T.shape[0] != T.shape[1]:
        raise TensorError(f"expected a square matrix, got shape {T.shape}")
    return T.shape[0]


def _check_vectors(a: np.ndarray, b: np.ndarray) -> int:
    if a.ndim != 1 or b.ndim != 1 or a.shape != b.shape:
        raise TensorError(f"vector dimension mismatch: {a.shape} vs {b.shape}")
    return a.shape[0]


def check_symmetric(M: np.ndarray) -> None:
    _check_square(M)
    diff = M - M.T
    if is_exact(M):
        if any(v != 0 for v in diff.flat):
            raise TensorError("matrix is not symmetric")
    elif np.max(np.abs(diff), initial=0.0) > FLOAT_TOL * _scale(M):
        raise TensorError("matrix is not symmetric to 1e-12 relative")


def check_trace_free(M: np.ndarray) -> None:
    tr = np.trace(M)
    if is_exact(M):
        if tr != 0:
            raise TensorError("matrix is not trace-free")
    elif abs(tr) > FLOAT_TOL * _scale(M) * M.shape[0]:
        raise TensorError("matrix is not trace-free to 1e-12 relative")


def check_sym_trace_free(M: np.ndarray) -> None:
    check_symmetric(M)
    check_trace_free(M)


def frobenius_inner(X: np.ndarray, Y: np.ndarray):
    return np.sum(X * Y)


@dataclass(frozen=True)
class CartanParts:
    dev_sym: np.ndarray
    skew: np.ndarray
    dilation: object

    def reconstruct(self) -> np.ndarray:
        n = self.skew.shape[0]
        return self.dev_sym + self.skew + self.dilation * identity(n, is_exact(self.skew))


def cartan_decompose(T) -> CartanParts:
    """Split T into trace-free symmetric, skew and dilation parts."""
    T = as_array(T)
    n = _check_square(T)
    exact = is_exact(T)
    dil = np.trace(T) / (Fraction(n) if exact else n)
    half = Fraction(1, 2) if exact else 0.5
    sym = (T + T.T) * half
    skew = (T - T.T) * half
    return CartanParts(sym - dil * identity(n, exact), skew, dil)


def sym_dyad(a, b) -> np.ndarray:
    """a ⊙ b = (a⊗b + b⊗a)/2."""
    a, b = unify(a, b)
    _check_vectors(a, b)
    half = Fraction(1, 2) if is_exact(a) else 0.5
    return (np.outer(a, b) + np.outer(b, a)) * half


def dev_dyad(a, b) -> np.ndarray:
    """a ⊙ b − (a·b)/n Id, the symbol of ℰ_d at frequency b applied to a."""
    a, b = unify(a, b)
    n = _check_vectors(a, b)
    if n < 2:
        raise TensorError("dev_dyad needs n >= 2")
    exact = is_exact(a)
    return sym_dyad(a, b) - (a @ b) / (Fraction(n) if exact else n) * identity(n, exact)


def _check_frequency(xi: np.ndarray) -> None:
    if all(v == 0 for v in xi.flat):
        raise TensorError("frequency xi must be nonzero")


def symbol_SV(xi, M) -> np.ndarray:
    """Saint-Venant symbol (Mξ)⊗ξ + ξ⊗(Mξ) − tr(M) ξ⊗ξ − |ξ|² M."""
    xi, M = unify(xi, M)
    n = _check_square(M)
    if xi.shape != (n,):
        raise TensorError("frequency and matrix dimensions differ")
    _check_frequency(xi)
    check_symmetric(M)
    Mx = M @ xi
    return np.outer(Mx, xi) + np.outer(xi, Mx) - np.trace(M) * np.outer(xi, xi) - (xi @ xi) * M


def symbol_A(xi, M) -> np.ndarray:
    """Symbol of the fourth-order annihilator of ℰ_d.

    |ξ|²(Mξ⊗ξ + ξ⊗Mξ) − |ξ|⁴M − (ξᵗMξ)/(n−1) [(n−2) ξ⊗ξ + |ξ|² Id]
    """
    xi, M = unify(xi, M)
    n = _check_square(M)
    if xi.shape != (n,):
        raise TensorError("frequency and matrix dimensions differ")
    _check_frequency(xi)
    check_sym_trace_free(M)
    exact = is_exact(M)
    q = xi @ xi
    Mx = M @ xi
    c = (xi @ Mx) / (Fraction(n - 1) if exact else n - 1)
    return (
        q * (np.outer(Mx, xi) + np.outer(xi, Mx))
        - q * q * M
        - c * ((n - 2) * np.outer(xi, xi) + q * identity(n, exact))
    )


def symbol_Ed(xi, w) -> np.ndarray:
    """𝔼_d[ξ]w, identical to dev_dyad(w, ξ)."""
    return dev_dyad(w, xi)


# serialization


def _enc(v):
    if isinstance(v, Fraction):
        return f"{v.numerator}/{v.denominator}"
    return float(v)


def _dec(v):
    if isinstance(v, str):
        return Fraction(v)
    if isinstance(v, int):
        return Fraction(v)
    return float(v)


def matrix_to_json(M: np.ndarray) -> dict:
    n = _check_square(M)
    return {"n": n, "entries": [[_enc(v) for v in row] for row in M]}


def matrix_from_json(obj) -> np.ndarray:
    if isinstance(obj, str):
        obj = json.loads(obj)
    try:
        n = int(obj["n"])
        rows = obj["entries"]
    except (KeyError, TypeError) as exc:
        raise TensorError(f"malformed matrix JSON: {exc}") from exc
    if len(rows) != n or any(len(r) != n for r in rows):
        raise TensorError("matrix JSON rows do not match n")
    vals = [[_dec(v) for v in r] for r in rows]
    exact = all(isinstance(v, Fraction) for r in vals for v in r)
    return as_array(vals, exact=exact)


def vector_to_json(v: np.ndarray) -> list:
    return [_enc(x) for x in v]


def vector_from_json(obj) -> np.ndarray:
    vals = [_dec(v) for v in obj]
    return as_array(vals, exact=all(isinstance(v, Fraction) for v in vals))
