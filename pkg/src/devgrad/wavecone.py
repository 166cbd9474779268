"""Wave cone of the annihilator: membership, factorization and symbol kernels.

A trace-free symmetric M lies in the cone iff M = a⊙b − (a·b)/n Id. Such a
matrix has an eigenvalue −(a·b)/n of multiplicity at least n−2, and removing
it leaves a rank-two indefinite remainder that splits into a and b.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .tensor_core import TensorError, check_sym_trace_free, dev_dyad, symbol_A, sym_dyad

CLUSTER_TOL = 1e-9


@dataclass(frozen=True)
class WaveConeElement:
    a: np.ndarray
    b: np.ndarray
    matrix: np.ndarray
    residual: float
    certificate: dict = field(default_factory=dict)
    in_cone: bool = True

    def to_json(self) -> dict:
        return {
            "in_cone": True,
            "a": [float(x) for x in self.a],
            "b": [float(x) for x in self.b],
            "residual": float(self.residual),
            "certificate": self.certificate,
        }


@dataclass(frozen=True)
class NotInCone:
    certificate: dict
    in_cone: bool = False

    def to_json(self) -> dict:
        return {"in_cone": False, "a": [], "b": [], "residual": None, "certificate": self.certificate}


def _clusters(lam: np.ndarray, tol: float) -> list:
    """Group ascending eigenvalues into runs whose neighbours differ by at most tol."""
    groups = [[0]]
    for i in range(1, len(lam)):
        if lam[i] - lam[i - 1] <= tol:
            groups[-1].append(i)
        else:
            groups.append([i])
    return groups


def membership(M, tol: float = 1e-10, cluster_tol: float = CLUSTER_TOL):
    """Factor M as dev_dyad(a, b) with |b| = 1, or return a NotInCone certificate.

    ``tol`` bounds the relative reconstruction residual; ``cluster_tol`` is the
    relative tolerance used to detect repeated eigenvalues.
    """
    if not tol > 0:
        raise ValueError("tol must be positive")
    M = np.asarray(M, dtype=float)
    check_sym_trace_free(M)
    n = M.shape[0]
    if n < 2:
        raise TensorError("n must be at least 2")
    norm = float(np.linalg.norm(M))
    if norm == 0.0:
        b = np.zeros(n)
        b[0] = 1.0
        return WaveConeElement(np.zeros(n), b, M.copy(), 0.0, {"reason": "zero matrix"})
    M = (M + M.T) / 2
    lam, V = np.linalg.eigh(M)
    ctol = cluster_tol * norm
    groups = _clusters(lam, ctol)
    need = max(n - 2, 1)
    candidates = [g for g in groups if len(g) >= need]
    if not candidates:
        return NotInCone({
            "reason": "multiplicity",
            "eigenvalues": [float(x) for x in lam],
            "largest_cluster": max(len(g) for g in groups),
            "required": need,
            "cluster_tol": ctol,
        })
    if n == 3:
        order = [[i] for i in range(3)]
    else:
        order = sorted(candidates, key=lambda g: (-len(g), lam[g[0]]))
    failures = []
    for g in order:
        lam_star = float(np.mean(lam[g]))
        rest = [i for i in range(n) if i not in g]
        mu = lam[rest] - lam_star
        big = [i for i, m in zip(rest, mu) if abs(m) > ctol]
        if len(big) > 2:
            failures.append({"lambda_star": lam_star, "reason": "rank", "shifted_rank": len(big)})
            continue
        pos = [i for i in big if lam[i] - lam_star > 0]
        neg = [i for i in big if lam[i] - lam_star < 0]
        if len(pos) > 1 or len(neg) > 1:
            failures.append({
                "lambda_star": lam_star,
                "reason": "sign",
                "shifted_eigenvalues": [float(lam[i] - lam_star) for i in big],
            })
            continue
        a = np.zeros(n)
        b = np.zeros(n)
        if pos:
            r = np.sqrt(lam[pos[0]] - lam_star) * V[:, pos[0]]
            a += r
            b += r
        if neg:
            r = np.sqrt(lam_star - lam[neg[0]]) * V[:, neg[0]]
            a += r
            b -= r
        t = -lam_star
        if abs(a @ b - n * t) > tol * norm * n:
            failures.append({"lambda_star": lam_star, "reason": "trace", "a_dot_b": float(a @ b), "n_t": n * t})
            continue
        nb = float(np.linalg.norm(b))
        a, b = a * nb, b / nb
        resid = float(np.linalg.norm(dev_dyad(a, b) - M)) / norm
        if resid > tol:
            failures.append({"lambda_star": lam_star, "reason": "residual", "residual": resid})
            continue
        cert = {"lambda_star": lam_star, "cluster_size": len(g) if n != 3 else 1}
        return WaveConeElement(a, b, M.copy(), resid, cert)
    return NotInCone({"reason": "no admissible shift", "eigenvalues": [float(x) for x in lam],
                      "cluster_tol": ctol, "attempts": failures})


def symbol_kernel_basis(xi) -> list:
    """Frobenius-orthonormal basis of the kernel of symbol_A(ξ, ·)."""
    xi = np.asarray(xi, dtype=float)
    nrm = np.linalg.norm(xi)
    if nrm == 0:
        raise TensorError("xi must be nonzero")
    n = xi.shape[0]
    mats = np.stack([dev_dyad(np.eye(n)[i], xi).ravel() for i in range(n)], axis=1)
    Q, _ = np.linalg.qr(mats)
    return [Q[:, k].reshape(n, n) for k in range(n)]


def symbol_A_matrix(xi) -> np.ndarray:
    """symbol_A(ξ, ·) as a linear map on a basis of trace-free symmetric matrices."""
    xi = np.asarray(xi, dtype=float)
    n = xi.shape[0]
    basis = sym_trace_free_basis(n)
    cols = [symbol_A(xi, B).ravel() for B in basis]
    return np.stack(cols, axis=1)


def sym_trace_free_basis(n: int) -> list:
    out = []
    for i in range(n):
        for j in range(i + 1, n):
            E = np.zeros((n, n))
            E[i, j] = E[j, i] = 1.0
            out.append(E)
    for i in range(n - 1):
        E = np.zeros((n, n))
        E[i, i] = 1.0
        E[n - 1, n - 1] = -1.0
        out.append(E)
    return out


@dataclass(frozen=True)
class EigenReport:
    parallel: bool
    closed_form: np.ndarray
    numeric: np.ndarray
    max_abs_diff: float


def dyad_eigenvalues(a, xi, parallel_tol: float = 1e-12) -> EigenReport:
    """Eigenvalues of a⊙ξ for unit ξ from the closed form, checked against eigvalsh."""
    a = np.asarray(a, dtype=float)
    xi = np.asarray(xi, dtype=float)
    na = float(np.linalg.norm(a))
    if na == 0:
        raise TensorError("a must be nonzero")
    if abs(np.linalg.norm(xi) - 1.0) > 1e-12:
        raise TensorError("xi must be a unit vector")
    n = a.shape[0]
    ax = float(a @ xi)
    cross = np.sqrt(max(na * na - ax * ax, 0.0))
    parallel = cross <= parallel_tol * na
    if parallel:
        vals = [ax] + [0.0] * (n - 1)
    else:
        vals = [(ax + na) / 2, (ax - na) / 2] + [0.0] * (n - 2)
    closed = np.sort(np.array(vals))
    numeric = np.linalg.eigvalsh(sym_dyad(a, xi))
    return EigenReport(parallel, closed, numeric, float(np.max(np.abs(closed - numeric))))


def _dev_dyad_columns(xi: np.ndarray) -> np.ndarray:
    """Matrix of the linear map a -> dev_dyad(a, ξ) acting on flattened matrices."""
    n = xi.shape[0]
    eye = np.eye(n)
    # G[r, c, i] = (δ_ri ξ_c + ξ_r δ_ci)/2 − δ_rc ξ_i/n
    G = 0.5 * (eye[:, None, :] * xi[None, :, None] + xi[:, None, None] * eye[None, :, :])
    G -= eye[:, :, None] * xi[None, None, :] / n
    return G.reshape(n * n, n)


def refactor_residual(M: np.ndarray, v: np.ndarray, restarts: int = 12, seed: int = 0) -> float:
    """min over unit ξ ⊥ v and a of ‖dev_dyad(a, ξ) − M‖.

    For fixed ξ the inner minimum is a linear least-squares problem; the outer
    one runs on the sphere of v⊥ with deterministic restarts.
    """
    n = M.shape[0]
    v = v / np.linalg.norm(v)
    Q, _ = np.linalg.qr(np.column_stack([v, np.eye(n)]))
    B = Q[:, 1:n]
    target = M.ravel()

    def inner(c):
        c = np.asarray(c, dtype=float)
        nc = np.linalg.norm(c)
        if nc < 1e-12:
            return float(np.linalg.norm(target))
        xi = B @ (c / nc)
        G = _dev_dyad_columns(xi)
        coef, *_ = np.linalg.lstsq(G, target, rcond=None)
        return float(np.linalg.norm(G @ coef - target))

    if n == 3:
        th = np.linspace(0.0, np.pi, 721)
        vals = [inner([np.cos(t), np.sin(t)]) for t in th]
        k = int(np.argmin(vals))
        res = minimize(lambda p: inner([np.cos(p[0]), np.sin(p[0])]), [th[k]], method="Nelder-Mead",
                       options={"xatol": 1e-10, "fatol": 1e-14})
        return float(min(res.fun, vals[k]))
    rng = np.random.default_rng(seed)
    best = np.inf
    for _ in range(restarts):
        c0 = rng.standard_normal(n - 1)
        res = minimize(inner, c0, method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-14, "maxiter": 4000})
        best = min(best, float(res.fun))
    return best


def jump_cone_check(M, restarts: int = 12, seed: int = 0) -> dict:
    """Search for a direction v such that M admits no factorization with ξ ⊥ v.

    Candidate directions are the eigenvectors of M.
    """
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    norm = float(np.linalg.norm(M))
    if norm == 0:
        return {"rejected": False, "residual": 0.0, "v": None}
    _, V = np.linalg.eigh(M)
    cands = [V[:, i] for i in range(n)]
    best_r, best_v = -1.0, None
    for v in cands:
        r = refactor_residual(M, v, restarts=restarts, seed=seed)
        if r > best_r:
            best_r, best_v = r, v
    return {"rejected": True, "residual": best_r / norm, "v": [float(x) for x in best_v]}


def jump_cone_triviality_check(trials: int, n: int, seed: int = 0, threshold: float = 1e-3,
                               restarts: int = 6) -> dict:
    """For random nonzero cone elements, exhibit a direction that blocks refactorization."""
    if n < 3:
        raise TensorError("n must be at least 3")
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    worst = np.inf
    rejected = 0
    for _ in range(trials):
        a = rng.standard_normal(n)
        b = rng.standard_normal(n)
        b /= np.linalg.norm(b)
        out = jump_cone_check(dev_dyad(a, b), restarts=restarts, seed=int(rng.integers(2**31)))
        worst = min(worst, out["residual"])
        rejected += out["residual"] > threshold
    zero = jump_cone_check(np.zeros((n, n)))
    return {
        "n": n,
        "trials": trials,
        "rejected": int(rejected),
        "min_relative_residual": float(worst),
        "threshold": threshold,
        "zero_passes": not zero["rejected"],
        "pass": rejected == trials and not zero["rejected"],
    }


def roundtrip_suite(n: int, trials: int, seed: int = 0, tol: float = 1e-10) -> dict:
    """Factor random dev_dyad(a, b); for n ≥ 4 also reject random full-rank trace-free matrices.

    For n = 3 every trace-free symmetric matrix with a middle eigenvalue
    splitting the other two lies in the cone, so no rejection is expected.
    """
    if n < 3:
        raise TensorError("n must be at least 3")
    if trials < 1:
        raise ValueError("trials must be positive")
    rng = np.random.default_rng(seed)
    worst = 0.0
    failed = 0
    accepted_noise = 0
    for _ in range(trials):
        a = rng.standard_normal(n)
        b = rng.standard_normal(n)
        out = membership(dev_dyad(a, b), tol=tol)
        if not out.in_cone:
            failed += 1
            continue
        worst = max(worst, out.residual)
        if n >= 4:
            E = rng.standard_normal((n, n))
            E = (E + E.T) / 2
            E -= np.trace(E) / n * np.eye(n)
            noise = membership(E, tol=tol)
            accepted_noise += noise.in_cone or not noise.certificate
    return {"n": n, "trials": trials, "seed": seed, "max_residual": worst, "tolerance": tol,
            "factorization_failures": failed, "perturbations_accepted": accepted_noise,
            "pass": failed == 0 and worst <= tol and accepted_noise == 0}
