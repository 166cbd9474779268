"""Projection onto the kernel of ℰ_d through boundary integrals on convex bodies.

For a centre-symmetric body K with barycentre c and outer normal ν:

    A_K = (1/2|K|) ∫∂K (u⊗ν − ν⊗u)
    γ_K = (1/n|K|) ∫∂K u·ν
    s_K = (1/((n−1)|K|)) ∫∂K νᵗ∇u (Id − ν⊗ν)
    b_K = (1/P(K)) ∫∂K u + τ_K s_K,   τ_K = (1/P(K)) ∫∂K (|y−c|²/2 Id − (y−c)⊗(y−c))

and ℛ_K[u](y) = (A_K + γ_K Id)(y−c) + (s_K·(y−c))(y−c) − s_K|y−c|²/2 + b_K.
On balls s_K has the derivative-free form (1/((n−1)ω_n ϱ^{n+1})) ∫∂B [n(ν·u)ν − u].
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

from .kernel_space import KillingField


class UnsupportedField(ValueError):
    """Raised when a coefficient needs derivatives the field cannot provide."""


class BodyError(ValueError):
    pass


def unit_ball_volume(n: int) -> float:
    return math.pi ** (n / 2) / math.gamma(n / 2 + 1)


@dataclass(frozen=True)
class ConvexBody:
    kind: str
    center: tuple
    radius: float | None = None
    half_widths: tuple | None = None

    def __post_init__(self):
        c = tuple(float(v) for v in self.center)
        object.__setattr__(self, "center", c)
        if self.kind == "ball":
            if self.radius is None or not self.radius > 0:
                raise BodyError("ball needs a positive radius")
            object.__setattr__(self, "radius", float(self.radius))
        elif self.kind == "box":
            if self.half_widths is None or len(self.half_widths) != len(c):
                raise BodyError("box needs one half width per axis")
            h = tuple(float(v) for v in self.half_widths)
            if any(not v > 0 for v in h):
                raise BodyError("box half widths must be positive")
            object.__setattr__(self, "half_widths", h)
        else:
            raise BodyError(f"unknown body kind {self.kind!r}")
        if len(c) < 2:
            raise BodyError("dimension must be at least 2")

    @classmethod
    def ball(cls, n: int, radius: float = 1.0, center=None) -> ConvexBody:
        return cls("ball", tuple(center) if center is not None else (0.0,) * n, radius=radius)

    @classmethod
    def box(cls, half_widths, center=None) -> ConvexBody:
        n = len(half_widths)
        return cls("box", tuple(center) if center is not None else (0.0,) * n, half_widths=tuple(half_widths))

    @classmethod
    def cube(cls, n: int, half_width: float = 1.0, center=None) -> ConvexBody:
        return cls.box((half_width,) * n, center)

    @property
    def n(self) -> int:
        return len(self.center)

    @property
    def barycenter(self) -> np.ndarray:
        return np.array(self.center)

    @property
    def volume(self) -> float:
        if self.kind == "ball":
            return unit_ball_volume(self.n) * self.radius ** self.n
        return float(np.prod([2 * h for h in self.half_widths]))

    @property
    def perimeter(self) -> float:
        if self.kind == "ball":
            return self.n * unit_ball_volume(self.n) * self.radius ** (self.n - 1)
        w = [2 * h for h in self.half_widths]
        return float(sum(2 * np.prod(w[:i] + w[i + 1:]) for i in range(self.n)))

    @property
    def diameter(self) -> float:
        if self.kind == "ball":
            return 2 * self.radius
        return float(2 * np.linalg.norm(self.half_widths))

    def contains(self, points) -> np.ndarray:
        z = np.asarray(points, dtype=float) - self.barycenter
        if self.kind == "ball":
            return np.sum(z * z, axis=-1) <= self.radius ** 2
        return np.all(np.abs(z) <= np.array(self.half_widths), axis=-1)

    def rescaled(self, x, rho: float) -> ConvexBody:
        """K_ϱ(x) = x + ϱK."""
        x = np.asarray(x, dtype=float)
        c = tuple(x + rho * self.barycenter)
        if self.kind == "ball":
            return ConvexBody("ball", c, radius=rho * self.radius)
        return ConvexBody("box", c, half_widths=tuple(rho * h for h in self.half_widths))

    def translated(self, x0) -> ConvexBody:
        c = tuple(self.barycenter + np.asarray(x0, dtype=float))
        return ConvexBody(self.kind, c, self.radius, self.half_widths)

    def to_json(self) -> dict:
        out = {"kind": self.kind, "center": list(self.center)}
        if self.kind == "ball":
            out["radius"] = self.radius
        else:
            out["half_widths"] = list(self.half_widths)
        return out

    @classmethod
    def from_json(cls, obj) -> ConvexBody:
        if isinstance(obj, str):
            obj = json.loads(obj)
        try:
            kind = obj["kind"]
            center = obj["center"]
            if kind == "ball":
                return cls("ball", tuple(center), radius=obj["radius"])
            if kind == "box":
                return cls("box", tuple(center), half_widths=tuple(obj["half_widths"]))
        except (KeyError, TypeError) as exc:
            raise BodyError(f"malformed body JSON: {exc}") from exc
        raise BodyError(f"unknown body kind {kind!r}")


# quadrature


@dataclass(frozen=True)
class BoundaryQuadrature:
    nodes: np.ndarray
    weights: np.ndarray
    normals: np.ndarray
    body: ConvexBody = field(repr=False)

    def integrate(self, values: np.ndarray) -> np.ndarray:
        """∫∂K f for node values of shape (N, ...)."""
        return np.tensordot(self.weights, values, axes=(0, 0))

    def check(self) -> dict:
        K = self.body
        P = float(self.weights.sum())
        flux = float(self.integrate(np.sum((self.nodes - K.barycenter) * self.normals, axis=1)))
        return {
            "perimeter_rel_err": abs(P - K.perimeter) / K.perimeter,
            "divergence_rel_err": abs(flux - K.n * K.volume) / (K.n * K.volume),
        }


@lru_cache(maxsize=None)
def sphere_rule(n: int, order: int) -> tuple:
    """Product Gauss rule on the unit sphere S^{n−1} ⊂ R^n.

    A point is (t, √(1−t²) ω) with ω on S^{n−2} and t carrying the weight
    (1−t²)^{(n−3)/2}, so t uses Gauss–Jacobi nodes; the circle uses 2·order
    equispaced angles. For n = 3 this is Gauss–Legendre in cos θ times a
    uniform azimuth. Nodes come in antipodal pairs, so odd integrands vanish
    to roundoff. Exact for polynomials of degree < 2·order.
    """
    if n == 2:
        m = 2 * order
        phi = (np.arange(m) + 0.5) * 2 * np.pi / m
        return np.column_stack([np.cos(phi), np.sin(phi)]), np.full(m, 2 * np.pi / m)
    alpha = (n - 3) / 2
    if alpha == 0:
        t, wt = roots_legendre(order)
    else:
        t, wt = roots_jacobi(order, alpha, alpha)
    sub, wsub = sphere_rule(n - 1, order)
    r = np.sqrt(1 - t * t)
    pts = np.concatenate([np.column_stack([np.full(len(sub), ti), ri * sub]) for ti, ri in zip(t, r)])
    w = np.concatenate([wi * wsub for wi in wt])
    return pts, w


@lru_cache(maxsize=None)
def _legendre01(m: int) -> tuple:
    x, w = roots_legendre(m)
    return x, w


def default_order(n: int) -> int:
    return {2: 64, 3: 32, 4: 16}.get(n, 8)


def boundary_quadrature(K: ConvexBody, order: int | None = None) -> BoundaryQuadrature:
    """Quadrature on ∂K: product Gauss sphere rule for balls, Gauss–Legendre per box face."""
    n = K.n
    c = K.barycenter
    if K.kind == "ball":
        order = order or default_order(n)
        u, w = sphere_rule(n, order)
        return BoundaryQuadrature(c + K.radius * u, w * K.radius ** (n - 1), u.copy(), K)
    order = order or 32
    h = np.array(K.half_widths)
    x, wx = _legendre01(order)
    nodes, weights, normals = [], [], []
    for axis in range(n):
        others = [i for i in range(n) if i != axis]
        grids = np.meshgrid(*[x * h[i] for i in others], indexing="ij")
        wgrid = np.ones_like(grids[0]) if grids else np.ones(())
        for k, i in enumerate(others):
            wgrid = wgrid * (wx * h[i]).reshape([-1 if j == k else 1 for j in range(len(others))])
        face = np.column_stack([g.ravel() for g in grids])
        for sign in (1.0, -1.0):
            pts = np.zeros((face.shape[0], n))
            pts[:, others] = face
            pts[:, axis] = sign * h[axis]
            nrm = np.zeros((face.shape[0], n))
            nrm[:, axis] = sign
            nodes.append(c + pts)
            weights.append(wgrid.ravel())
            normals.append(nrm)
    return BoundaryQuadrature(np.concatenate(nodes), np.concatenate(weights), np.concatenate(normals), K)


def volume_quadrature(K: ConvexBody, order: int | None = None) -> tuple:
    """(points, weights) for ∫_K: radial Gauss–Jacobi × sphere rule, or tensor Gauss–Legendre."""
    n = K.n
    c = K.barycenter
    if K.kind == "ball":
        order = order or default_order(n)
        u, wu = sphere_rule(n, order)
        # ∫_0^ϱ r^{n−1} f dr with r = ϱ(1+t)/2, weight (1+t)^{n−1}
        t, wt = roots_jacobi(order, 0.0, n - 1)
        r = K.radius * (1 + t) / 2
        wr = wt * (K.radius / 2) ** n
        pts = (c + r[:, None, None] * u[None, :, :]).reshape(-1, n)
        w = (wr[:, None] * wu[None, :]).ravel()
        return pts, w
    order = order or 16
    h = np.array(K.half_widths)
    x, wx = _legendre01(order)
    grids = np.meshgrid(*[x * hi for hi in h], indexing="ij")
    w = np.ones_like(grids[0])
    for k in range(n):
        w = w * (wx * h[k]).reshape([-1 if j == k else 1 for j in range(n)])
    pts = c + np.column_stack([g.ravel() for g in grids])
    return pts, w.ravel()


# fields


def evaluate_field(u, points: np.ndarray) -> np.ndarray:
    if hasattr(u, "evaluate"):
        return np.asarray(u.evaluate(points), dtype=float)
    return np.asarray(u(points), dtype=float)


def jacobian_field(u, points: np.ndarray) -> np.ndarray:
    if hasattr(u, "jacobian"):
        return np.asarray(u.jacobian(points), dtype=float)
    raise UnsupportedField("field provides no derivatives; s_K needs ∇u on this body")


class Rescaled:
    """v(y) = u(x + ϱy)/ϱ."""

    def __init__(self, u, x, rho: float):
        self.u, self.x, self.rho = u, np.asarray(x, dtype=float), float(rho)

    def evaluate(self, y):
        return evaluate_field(self.u, self.x + self.rho * np.asarray(y, dtype=float)) / self.rho

    def jacobian(self, y):
        return jacobian_field(self.u, self.x + self.rho * np.asarray(y, dtype=float))


class Shifted:
    """v(y) = u(y − x0)."""

    def __init__(self, u, x0):
        self.u, self.x0 = u, np.asarray(x0, dtype=float)

    def evaluate(self, y):
        return evaluate_field(self.u, np.asarray(y, dtype=float) - self.x0)

    def jacobian(self, y):
        return jacobian_field(self.u, np.asarray(y, dtype=float) - self.x0)


# coefficients


def tau(K: ConvexBody, order: int | None = None) -> np.ndarray:
    q = boundary_quadrature(K, order)
    z = q.nodes - K.barycenter
    zz = np.sum(z * z, axis=1)
    n = K.n
    integrand = 0.5 * zz[:, None, None] * np.eye(n) - z[:, :, None] * z[:, None, :]
    return q.integrate(integrand) / q.weights.sum()


def _quad(K, u, quad):
    q = quad or boundary_quadrature(K)
    return q, evaluate_field(u, q.nodes)


def coeff_A(K: ConvexBody, u, quad: BoundaryQuadrature | None = None) -> np.ndarray:
    q, U = _quad(K, u, quad)
    T = q.integrate(U[:, :, None] * q.normals[:, None, :])
    return (T - T.T) / (2 * K.volume)


def coeff_gamma(K: ConvexBody, u, quad: BoundaryQuadrature | None = None) -> float:
    q, U = _quad(K, u, quad)
    return float(q.integrate(np.sum(U * q.normals, axis=1))) / (K.n * K.volume)


def coeff_s(K: ConvexBody, u, quad: BoundaryQuadrature | None = None, form: str = "auto") -> np.ndarray:
    """Conformal coefficient s_K.

    ``form`` is "closed" (balls only, values of u), "smooth" (any body, needs
    ∇u) or "auto" (closed on balls, smooth elsewhere).
    """
    q = quad or boundary_quadrature(K)
    n = K.n
    if form == "auto":
        form = "closed" if K.kind == "ball" else "smooth"
    if form == "closed":
        if K.kind != "ball":
            raise UnsupportedField("the derivative-free form of s_K exists only on balls")
        U = evaluate_field(u, q.nodes)
        nu = q.normals
        integrand = n * np.sum(U * nu, axis=1)[:, None] * nu - U
        return q.integrate(integrand) / ((n - 1) * K.volume * K.radius)
    if form != "smooth":
        raise ValueError(f"unknown form {form!r}")
    J = jacobian_field(u, q.nodes)
    nu = q.normals
    row = np.einsum("ki,kij->kj", nu, J)
    tan = row - np.sum(row * nu, axis=1)[:, None] * nu
    return q.integrate(tan) / ((n - 1) * K.volume)


def coeff_b(K: ConvexBody, u, quad: BoundaryQuadrature | None = None, s=None) -> np.ndarray:
    q, U = _quad(K, u, quad)
    if s is None:
        s = coeff_s(K, u, q)
    return q.integrate(U) / q.weights.sum() + tau(K) @ s


@dataclass(frozen=True)
class ProjectionCoefficients:
    s: np.ndarray
    A: np.ndarray
    gamma: float
    b: np.ndarray
    tau: np.ndarray

    def killing(self, center) -> KillingField:
        return KillingField(self.A, self.gamma, self.s, self.b, np.asarray(center, dtype=float))

    def to_json(self) -> dict:
        return {
            "s": [float(v) for v in self.s],
            "A": [[float(v) for v in r] for r in self.A],
            "gamma": float(self.gamma),
            "b": [float(v) for v in self.b],
            "tau": [[float(v) for v in r] for r in self.tau],
        }


def coefficients(K: ConvexBody, u, order: int | None = None, s_form: str = "auto") -> ProjectionCoefficients:
    q = boundary_quadrature(K, order)
    U = evaluate_field(u, q.nodes)
    T = q.integrate(U[:, :, None] * q.normals[:, None, :])
    A = (T - T.T) / (2 * K.volume)
    gamma = float(np.trace(T)) / (K.n * K.volume)
    s = coeff_s(K, u, q, form=s_form)
    tK = tau(K, order)
    b = q.integrate(U) / q.weights.sum() + tK @ s
    return ProjectionCoefficients(s, A, gamma, b, tK)


def project(K: ConvexBody, u, order: int | None = None, s_form: str = "auto") -> KillingField:
    """ℛ_K[u] as a Killing field centred at the barycentre of K."""
    return coefficients(K, u, order, s_form).killing(K.barycenter)


def coefficient_report(K: ConvexBody, u, order: int | None = None) -> dict:
    """Coefficients with node count and an error estimate from a coarser rule."""
    order = order or (default_order(K.n) if K.kind == "ball" else 32)
    fine = coefficients(K, u, order)
    coarse = coefficients(K, u, max(order // 2, 2))
    est = max(
        float(np.max(np.abs(fine.s - coarse.s))),
        float(np.max(np.abs(fine.A - coarse.A))),
        abs(fine.gamma - coarse.gamma),
        float(np.max(np.abs(fine.b - coarse.b))),
    )
    out = fine.to_json()
    out["quadrature"] = {"nodes": int(boundary_quadrature(K, order).nodes.shape[0]), "estimated_error": est}
    out["body"] = K.to_json()
    return out


# scaling


def scaling_check(u, x, rho: float, K: ConvexBody, points=None, order: int | None = None) -> dict:
    """Compare ℛ_K[v](y) with ℛ_{K_ϱ(x)}[u](x + ϱy)/ϱ where v(y) = u(x + ϱy)/ϱ."""
    if not rho > 0:
        raise ValueError("rho must be positive")
    x = np.asarray(x, dtype=float)
    v = Rescaled(u, x, rho)
    Kr = K.rescaled(x, rho)
    if points is None:
        pts, _ = volume_quadrature(K, 4)
        points = pts
    Rv = project(K, v, order)
    Ru = project(Kr, u, order)
    lhs = Rv.evaluate(points)
    rhs = Ru.evaluate(x + rho * np.asarray(points)) / rho
    cv = coefficients(K, v, order)
    cu = coefficients(Kr, u, order)
    coef_dev = max(
        float(np.max(np.abs(cv.s - rho * cu.s))),
        float(np.max(np.abs(cv.A - cu.A))),
        abs(cv.gamma - cu.gamma),
    )
    return {
        "max_deviation": float(np.max(np.abs(lhs - rhs))),
        "coefficient_deviation": coef_dev,
        "rho": rho,
    }


# Poincaré ratio


def poincare_ratio(K: ConvexBody, u, order: int | None = None, killing_tol: float = 1e-10) -> float:
    """‖u − ℛ_K u‖_{L¹(K)} / (diam K · |ℰ_d u|(K)).

    Smooth fields (with ``evaluate`` and ``jacobian``) are integrated with
    the volume rule; grid fields are delegated to the grid implementation.
    Killing fields give 0; a vanishing variation with nonzero remainder
    gives infinity.
    """
    if hasattr(u, "values") and hasattr(u, "spacing"):
        from .gridfield import poincare_ratio_grid

        return poincare_ratio_grid(K, u, killing_tol=killing_tol)
    R = project(K, u, order)
    pts, w = volume_quadrature(K, order)
    U = evaluate_field(u, pts)
    diff = float(w @ np.linalg.norm(U - R.evaluate(pts), axis=1))
    J = jacobian_field(u, pts)
    n = K.n
    E = 0.5 * (J + np.swapaxes(J, -1, -2))
    E = E - (np.trace(E, axis1=-2, axis2=-1) / n)[:, None, None] * np.eye(n)
    tv = float(w @ np.linalg.norm(E.reshape(len(w), -1), axis=1))
    scale = float(w @ np.linalg.norm(U, axis=1)) + 1.0
    if diff <= killing_tol * scale:
        return 0.0
    if tv == 0.0:
        return math.inf
    return diff / (K.diameter * tv)


def tau_sobol_oracle(K: ConvexBody, points_per_face: int = 2**18, seed: int = 0) -> np.ndarray:
    """Randomised quasi-Monte Carlo estimate of τ for a box, independent of the Gauss rule."""
    from scipy.stats import qmc

    if K.kind != "box":
        raise BodyError("the face-sampling oracle is for boxes")
    n = K.n
    h = np.array(K.half_widths)
    acc = np.zeros((n, n))
    area_total = 0.0
    for axis in range(n):
        others = [i for i in range(n) if i != axis]
        area = float(np.prod(2 * h[others]))
        sampler = qmc.Sobol(d=n - 1, scramble=True, seed=seed + axis)
        x = sampler.random(points_per_face) * 2 - 1
        for sign in (1.0, -1.0):
            z = np.zeros((points_per_face, n))
            z[:, others] = x * h[others]
            z[:, axis] = sign * h[axis]
            zz = np.sum(z * z, axis=1)
            m = 0.5 * zz.mean() * np.eye(n) - (z.T @ z) / points_per_face
            acc += area * m
            area_total += area
    return acc / area_total
