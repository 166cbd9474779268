"""Vector fields sampled on uniform cell-centred grids.

Node i along an axis sits at lo + (i + 1/2)h, so a plane through a cell face
never contains a node. ℰ_d is discretized with central differences in the
interior and second-order one-sided differences on the boundary layer; each
cell then carries a trace-free symmetric density and the measure of a region
is the density integrated over the cells (or sub-cells) it covers.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage
from scipy.special import roots_legendre

from .convex_projection import (
    ConvexBody,
    coefficients,
    project,
    sphere_rule,
    unit_ball_volume,
    volume_quadrature,
)
from .tensor_core import dev_dyad
from .wavecone import sym_trace_free_basis

MIN_RESOLUTION = 8


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class GridField:
    """Samples ``values`` of shape (N_1, ..., N_n, m) on the box [lo, hi]."""

    values: np.ndarray
    lo: tuple
    hi: tuple

    def __post_init__(self):
        vals = np.asarray(self.values, dtype=float)
        lo = tuple(float(v) for v in self.lo)
        hi = tuple(float(v) for v in self.hi)
        n = len(lo)
        if len(hi) != n or vals.ndim != n + 1:
            raise GridError("values must have shape (N_1, ..., N_n, m) matching the box dimension")
        if any(not h > l for l, h in zip(lo, hi)):
            raise GridError("box must have hi > lo on every axis")
        if min(vals.shape[:n]) < MIN_RESOLUTION:
            raise GridError(f"resolution must be at least {MIN_RESOLUTION} cells per axis")
        if not np.all(np.isfinite(vals)):
            raise GridError("grid values must be finite")
        object.__setattr__(self, "values", vals)
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def resolution(self) -> tuple:
        return self.values.shape[: self.n]

    @property
    def spacing(self) -> np.ndarray:
        return (np.array(self.hi) - np.array(self.lo)) / np.array(self.resolution)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axes(self) -> list:
        h = self.spacing
        return [self.lo[i] + (np.arange(N) + 0.5) * h[i] for i, N in enumerate(self.resolution)]

    def coords(self) -> np.ndarray:
        return np.stack(np.meshgrid(*self.axes(), indexing="ij"), axis=-1)

    @classmethod
    def from_function(cls, fn, lo, hi, resolution) -> GridField:
        """Sample fn(points) -> (..., m) at the cell centres."""
        n = len(lo)
        res = (resolution,) * n if np.isscalar(resolution) else tuple(resolution)
        h = (np.array(hi, dtype=float) - np.array(lo, dtype=float)) / np.array(res)
        axes = [lo[i] + (np.arange(res[i]) + 0.5) * h[i] for i in range(n)]
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
        if hasattr(fn, "evaluate"):
            vals = fn.evaluate(pts)
        else:
            vals = fn(pts)
        return cls(np.asarray(vals, dtype=float), tuple(lo), tuple(hi))

    def evaluate(self, points, order: int = 3) -> np.ndarray:
        """Spline interpolation of the samples (constant extension past the outer nodes)."""
        points = np.asarray(points, dtype=float)
        shape = points.shape[:-1]
        flat = points.reshape(-1, self.n)
        idx = ((flat - np.array(self.lo)) / self.spacing - 0.5).T
        out = np.empty((flat.shape[0], self.values.shape[-1]))
        for c in range(self.values.shape[-1]):
            out[:, c] = ndimage.map_coordinates(self.values[..., c], idx, order=order, mode="nearest")
        return out.reshape(shape + (self.values.shape[-1],))

    __call__ = evaluate

    def contains_box(self, lo, hi) -> bool:
        return all(a >= l - 1e-12 and b <= h + 1e-12 for a, b, l, h in zip(lo, hi, self.lo, self.hi))

    def save(self, path) -> None:
        """Flat row-major float64 binary plus a JSON sidecar."""
        path = Path(path)
        np.ascontiguousarray(self.values, dtype="<f8").tofile(path.with_suffix(".bin"))
        meta = {"n": self.n, "lo": list(self.lo), "hi": list(self.hi), "resolution": list(self.resolution),
                "components": int(self.values.shape[-1])}
        path.with_suffix(".json").write_text(json.dumps(meta, indent=2, sort_keys=True))

    @classmethod
    def load(cls, path) -> GridField:
        path = Path(path)
        try:
            meta = json.loads(path.with_suffix(".json").read_text())
            shape = tuple(meta["resolution"]) + (int(meta["components"]),)
            lo, hi = meta["lo"], meta["hi"]
        except (OSError, KeyError, TypeError, ValueError) as exc:
            raise GridError(f"unreadable grid sidecar: {exc}") from exc
        data = np.fromfile(path.with_suffix(".bin"), dtype="<f8")
        if data.size != int(np.prod(shape)):
            raise GridError("binary size does not match the sidecar")
        return cls(data.reshape(shape), tuple(lo), tuple(hi))


# measures


@dataclass(frozen=True)
class GridMeasure:
    """Per-cell trace-free symmetric density of ℰ_d u; the cell mass is |density|·h^n."""

    density: np.ndarray
    lo: tuple
    hi: tuple

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def resolution(self) -> tuple:
        return self.density.shape[: self.n]

    @property
    def spacing(self) -> np.ndarray:
        return (np.array(self.hi) - np.array(self.lo)) / np.array(self.resolution)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def norm(self) -> np.ndarray:
        return np.sqrt(np.sum(self.density**2, axis=(-2, -1)))

    def cell_mass(self) -> np.ndarray:
        return self.norm() * self.cell_volume

    def total_variation(self, mask=None) -> float:
        m = self.cell_mass()
        return float(np.sum(m if mask is None else m[mask]))

    def centres(self) -> np.ndarray:
        h = self.spacing
        axes = [self.lo[i] + (np.arange(N) + 0.5) * h[i] for i, N in enumerate(self.resolution)]
        return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    def restrict(self, lo, hi) -> float:
        """Mass of the cells whose centres lie in the closed box [lo, hi]."""
        c = self.centres()
        mask = np.all((c >= np.array(lo)) & (c <= np.array(hi)), axis=-1)
        return self.total_variation(mask)

    def mass(self, region, sub: int = 4) -> float:
        """|ℰ_d u|(region) by midpoint quadrature with sub-sampled boundary cells."""
        _, idx, w = region_quadrature(self, region, sub)
        return float(np.sum(self.norm().reshape(-1)[idx] * w))


def fd_Ed(u: GridField) -> GridMeasure:
    """Finite-difference ℰ_d u; the density is exactly trace-free in every cell."""
    if min(u.resolution) < MIN_RESOLUTION:
        raise GridError("resolution too low")
    n = u.n
    if u.values.shape[-1] != n:
        raise GridError("ℰ_d needs an n-component field")
    h = u.spacing
    D = np.empty(u.resolution + (n, n))
    grads = [np.gradient(u.values[..., i], *h, edge_order=2) for i in range(n)]
    for i in range(n):
        for j in range(i, n):
            D[..., i, j] = D[..., j, i] = 0.5 * (grads[i][j] + grads[j][i])
    tr = np.trace(D, axis1=-2, axis2=-1) / n
    for i in range(n):
        D[..., i, i] -= tr
    # remove the rounding residue of the trace through the last diagonal entry
    D[..., n - 1, n - 1] = -np.sum(np.stack([D[..., i, i] for i in range(n - 1)]), axis=0)
    return GridMeasure(D, u.lo, u.hi)


# regions and cell quadrature


@dataclass(frozen=True)
class Annulus:
    center: tuple
    inner: float
    outer: float


def _signed_distance(region, pts: np.ndarray) -> np.ndarray:
    if isinstance(region, Annulus):
        d = np.linalg.norm(pts - np.array(region.center), axis=-1)
        return np.maximum(region.inner - d, d - region.outer)
    if region.kind == "ball":
        return np.linalg.norm(pts - np.array(region.center), axis=-1) - region.radius
    q = np.abs(pts - np.array(region.center)) - np.array(region.half_widths)
    outside = np.linalg.norm(np.maximum(q, 0.0), axis=-1)
    return outside + np.minimum(np.max(q, axis=-1), 0.0)


def _region_box(region) -> tuple:
    if isinstance(region, Annulus):
        c = np.array(region.center)
        return c - region.outer, c + region.outer
    c = np.array(region.center)
    r = region.radius if region.kind == "ball" else np.array(region.half_widths)
    return c - r, c + r


def region_quadrature(grid, region, sub: int = 4) -> tuple:
    """(points, flat cell index, weights) covering ``region`` with the grid's cells.

    Cells farther than half a diagonal from the boundary use their centre;
    straddling cells are split into sub^n sub-cells tested individually.
    """
    n = grid.n
    h = grid.spacing
    lo_r, hi_r = _region_box(region)
    if not all(a >= l - 1e-12 and b <= u + 1e-12 for a, b, l, u in zip(lo_r, hi_r, grid.lo, grid.hi)):
        raise GridError("region leaves the grid domain")
    res = np.array(grid.resolution)
    i0 = np.clip(np.floor((lo_r - np.array(grid.lo)) / h).astype(int) - 1, 0, res - 1)
    i1 = np.clip(np.ceil((hi_r - np.array(grid.lo)) / h).astype(int) + 1, 1, res)
    axes = [grid.lo[i] + (np.arange(i0[i], i1[i]) + 0.5) * h[i] for i in range(n)]
    idx_axes = [np.arange(i0[i], i1[i]) for i in range(n)]
    centres = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, n)
    flat = np.ravel_multi_index(tuple(g.ravel() for g in np.meshgrid(*idx_axes, indexing="ij")), tuple(res))
    sd = _signed_distance(region, centres)
    half_diag = 0.5 * float(np.linalg.norm(h))
    vol = float(np.prod(h))
    inside = sd < -half_diag
    straddle = np.abs(sd) <= half_diag
    pts = [centres[inside]]
    idx = [flat[inside]]
    wts = [np.full(int(inside.sum()), vol)]
    if np.any(straddle):
        offs = (np.arange(sub) + 0.5) / sub - 0.5
        grid_offs = np.stack(np.meshgrid(*([offs] * n), indexing="ij"), axis=-1).reshape(-1, n) * h
        sp = centres[straddle][:, None, :] + grid_offs[None, :, :]
        keep = _signed_distance(region, sp) <= 0
        cell = np.repeat(flat[straddle], grid_offs.shape[0]).reshape(keep.shape)
        pts.append(sp[keep])
        idx.append(cell[keep])
        wts.append(np.full(int(keep.sum()), vol / sub**n))
    return np.concatenate(pts), np.concatenate(idx), np.concatenate(wts)


# jump fields


@dataclass(frozen=True)
class JumpSpec:
    """u = c·H(ν·x − offset): a jump [u] = c across the plane ν·x = offset."""

    nu: tuple
    c: tuple
    offset: float = 0.0

    def __post_init__(self):
        nu = np.asarray(self.nu, dtype=float)
        if abs(np.linalg.norm(nu) - 1.0) > 1e-12:
            raise GridError("jump normal must be a unit vector")
        if np.shape(self.c) != nu.shape:
            raise GridError("jump vector and normal differ in dimension")
        object.__setattr__(self, "nu", tuple(float(v) for v in nu))
        object.__setattr__(self, "c", tuple(float(v) for v in self.c))

    def __call__(self, pts: np.ndarray) -> np.ndarray:
        s = (np.asarray(pts) @ np.array(self.nu) >= self.offset).astype(float)
        return s[..., None] * np.array(self.c)

    def polar_norm(self) -> float:
        return float(np.linalg.norm(dev_dyad(np.array(self.c), np.array(self.nu))))

    def analytic_mass(self, lo, hi) -> float:
        """|[u]⊗_{ℰd}ν|·H^{n−1}(plane ∩ box) for an axis-aligned normal."""
        nu = np.array(self.nu)
        axis = int(np.argmax(np.abs(nu)))
        if not np.isclose(abs(nu[axis]), 1.0):
            raise GridError("analytic mass is implemented for axis-aligned normals")
        if not lo[axis] < self.offset * nu[axis] < hi[axis]:
            return 0.0
        area = float(np.prod([hi[i] - lo[i] for i in range(len(lo)) if i != axis]))
        return self.polar_norm() * area


def synthesize_jump(spec: JumpSpec, lo, hi, resolution) -> GridField:
    return GridField.from_function(spec, lo, hi, resolution)


def jump_tv_study(spec: JumpSpec, lo, hi, resolution: int = 64, refinements: int = 1) -> dict:
    """Grid total variation of a jump field at resolution·2^k with Richardson extrapolation."""
    exact = spec.analytic_mass(lo, hi)
    levels = []
    for k in range(refinements + 1):
        N = resolution * 2**k
        u = synthesize_jump(spec, lo, hi, N)
        levels.append({"resolution": N, "tv": fd_Ed(u).total_variation()})
    tvs = [lv["tv"] for lv in levels]
    rich = 2 * tvs[-1] - tvs[-2] if len(tvs) > 1 else tvs[-1]
    errs = [abs(t - exact) for t in tvs]
    rate = None
    if len(errs) > 1 and errs[-1] > 1e-14 * max(exact, 1.0) and errs[-2] > 0:
        rate = math.log2(errs[-2] / errs[-1])
    return {"exact": exact, "levels": levels, "richardson": rich,
            "relative_error": abs(rich - exact) / exact if exact else abs(rich), "observed_rate": rate}


def slab_excess_mass(mu: GridMeasure, nu, t0: float, halfwidth: float, polar=None) -> dict:
    """Mass of the cells with |ν·x − t0| ≤ w, minus the smooth background.

    The background density is the mean over the two neighbouring slabs of
    the same width. With ``polar`` the signed component along the unit
    polar is used instead of the cell norm, so a smooth density that changes
    sign inside the slab does not bias the background.
    """
    nu = np.asarray(nu, dtype=float)
    nu = nu / np.linalg.norm(nu)
    d = mu.centres() @ nu - t0
    if polar is None:
        m = mu.cell_mass()
    else:
        P = np.asarray(polar, dtype=float)
        m = np.einsum("...ij,ij->...", mu.density, P / np.linalg.norm(P)) * mu.cell_volume
    core = np.abs(d) <= halfwidth
    ring = (np.abs(d) > halfwidth) & (np.abs(d) <= 3 * halfwidth)
    if not np.any(core) or not np.any(ring):
        raise GridError("slab does not cover any cells")
    background = float(m[ring].mean()) * int(core.sum())
    total = float(m[core].sum())
    return {"slab_mass": total, "background": background, "excess": total - background}


# mollification


def bump_kernel(eps: float, h: np.ndarray) -> np.ndarray:
    """Discrete normalized bump exp(−1/(1 − |z/ε|²)) sampled at grid offsets."""
    r = [int(math.ceil(eps / hi)) for hi in h]
    axes = [np.arange(-ri, ri + 1) * hi for ri, hi in zip(r, h)]
    Z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    q = np.sum(Z**2, axis=-1) / eps**2
    k = np.where(q < 1, np.exp(-1.0 / np.where(q < 1, 1 - q, 1.0)), 0.0)
    return k / k.sum()


def mollify(u: GridField, eps: float) -> GridField:
    if not eps >= 2 * float(np.max(u.spacing)) - 1e-15:
        raise GridError("mollification radius must be at least two cells")
    k = bump_kernel(eps, u.spacing)
    vals = np.stack([ndimage.convolve(u.values[..., c], k, mode="nearest") for c in range(u.values.shape[-1])],
                    axis=-1)
    return GridField(vals, u.lo, u.hi)


def mollify_measure(mu: GridMeasure, eps: float) -> GridMeasure:
    k = bump_kernel(eps, mu.spacing)
    n = mu.n
    D = np.empty_like(mu.density)
    for i in range(n):
        for j in range(n):
            D[..., i, j] = ndimage.convolve(mu.density[..., i, j], k, mode="nearest")
    return GridMeasure(D, mu.lo, mu.hi)


def kernel_second_moment(eps: float, h) -> float:
    """∫ρ_ε(z) z_1² dz for the discrete kernel (same along every axis on a cubic grid)."""
    h = np.asarray(h, dtype=float)
    k = bump_kernel(eps, h)
    r = (k.shape[0] - 1) // 2
    z = np.arange(-r, r + 1) * h[0]
    shape = [1] * k.ndim
    shape[0] = -1
    return float(np.sum(k * (z.reshape(shape) ** 2)))


def commutation_residual(u: GridField, eps: float) -> dict:
    """fd_Ed(mollify(u)) against the cellwise mollified fd_Ed(u), away from the boundary layer."""
    a = fd_Ed(mollify(u, eps)).density
    b = mollify_measure(fd_Ed(u), eps).density
    margin = [int(math.ceil(eps / h)) + 2 for h in u.spacing]
    sl = tuple(slice(m, N - m) for m, N in zip(margin, u.resolution))
    diff = np.sqrt(np.sum((a[sl] - b[sl]) ** 2, axis=(-2, -1)))
    ref = np.sqrt(np.sum(b[sl] ** 2, axis=(-2, -1)))
    return {"max": float(diff.max()), "l1": float(diff.sum()), "reference_l1": float(ref.sum()),
            "diff_field": diff, "margin": margin}


def l1_distance(u: GridField, v: GridField, mask=None) -> float:
    d = np.linalg.norm(u.values - v.values, axis=-1)
    if mask is not None:
        d = d[mask]
    return float(np.sum(d)) * u.cell_volume


# density ratios and blow-ups


def density_ratio(u: GridField, x, r: float, mu: GridMeasure | None = None) -> float:
    """|ℰ_d u|(B_r(x)) / r^{n−1}."""
    mu = fd_Ed(u) if mu is None else mu
    return mu.mass(ConvexBody.ball(u.n, r, x)) / r ** (u.n - 1)


class _Rescaled:
    def __init__(self, u, x, eps):
        self.u, self.x, self.eps = u, np.asarray(x, dtype=float), float(eps)

    def evaluate(self, y):
        return self.u.evaluate(self.x + self.eps * np.asarray(y, dtype=float), order=self.order)

    order = 3


def blowup(u: GridField, K: ConvexBody, x, eps: float, resolution: int = 32, order: int = 1,
           mu: GridMeasure | None = None) -> GridField:
    """(u(x + εy) − ℛ_K[u(x + ε·)](y)) / (|ℰ_d u|(K_ε(x)) / (|K| ε^{n−1})), resampled on K's box.

    K must be centred at the origin. Linear interpolation is the default so
    that jumps are not smeared into overshoots.
    """
    n = u.n
    x = np.asarray(x, dtype=float)
    if np.any(np.abs(np.array(K.center)) > 1e-14):
        raise GridError("blow-up body must be centred at the origin")
    Ke = K.rescaled(x, eps)
    mu = fd_Ed(u) if mu is None else mu
    mass = mu.mass(Ke)
    if not mass > 0:
        raise GridError("zero local mass: blow-up undefined")
    v = _Rescaled(u, x, eps)
    v.order = order
    R = project(K, v)
    lo, hi = _region_box(K)
    h = (hi - lo) / resolution
    axes = [lo[i] + (np.arange(resolution) + 0.5) * h[i] for i in range(n)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    vals = v.evaluate(pts) - R.evaluate(pts)
    scale = mass / (K.volume * eps ** (n - 1))
    return GridField(vals / scale, tuple(lo), tuple(hi))


def jump_blowup_limit(spec: JumpSpec, K: ConvexBody, resolution: int = 32) -> GridField:
    """Analytic blow-up of a jump field at a point of its plane (offset 0), sampled on K's box."""
    n = len(spec.nu)
    nu = np.array(spec.nu)
    R = project(K, spec)
    lo, hi = _region_box(K)
    h = (hi - lo) / resolution
    axes = [lo[i] + (np.arange(resolution) + 0.5) * h[i] for i in range(n)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    if K.kind == "ball":
        section = unit_ball_volume(n - 1) * K.radius ** (n - 1)
    else:
        axis = int(np.argmax(np.abs(nu)))
        section = float(np.prod([2 * w for i, w in enumerate(K.half_widths) if i != axis]))
    scale = spec.polar_norm() * section / K.volume
    return GridField((spec(pts) - R.evaluate(pts)) / scale, tuple(lo), tuple(hi))


def blowup_study(spec: JumpSpec, x, K: ConvexBody, resolution: int = 64, eps=(0.4, 0.2, 0.1),
                 blow_resolution: int = 32, order: int = 0) -> dict:
    """Blow-ups of a jump field against the analytic limit, plus a blow-up of a blow-up.

    The two-step blow-up at ε₁ then ε₂ is compared with the one-step blow-up
    at ε₁ε₂; both use the same sampling grid on K. Nearest-node sampling
    (order 0) keeps a jump that sits on a cell face sharp at every ε.
    """
    x = np.asarray(x, dtype=float)
    u = synthesize_jump(spec, tuple(x - 1.0), tuple(x + 1.0), resolution)
    mu = fd_Ed(u)
    shifted = JumpSpec(spec.nu, spec.c, spec.offset - float(np.array(spec.nu) @ x))
    limit = jump_blowup_limit(shifted, K, blow_resolution)
    mask = body_mask(limit, K)
    ref = l1_distance(limit, GridField(np.zeros_like(limit.values), limit.lo, limit.hi), mask)
    dist = []
    blows = []
    for e in eps:
        b = blowup(u, K, x, e, blow_resolution, order=order, mu=mu)
        blows.append(b)
        dist.append(l1_distance(b, limit, mask) / ref)
    e1, e2 = eps[0], eps[-1] / eps[0]
    two = blowup(blows[0], K, np.zeros(u.n), e2, blow_resolution, order=order)
    one = blows[-1]
    bob = l1_distance(two, one, mask) / max(l1_distance(one, GridField(np.zeros_like(one.values), one.lo, one.hi),
                                                         mask), 1e-300)
    # two-scale check: the smallest ε again on a grid refined by 2
    u2 = synthesize_jump(spec, tuple(x - 1.0), tuple(x + 1.0), 2 * resolution)
    fine = blowup(u2, K, x, eps[-1], blow_resolution, order=order)
    refined = l1_distance(fine, limit, mask) / ref
    return {"eps": list(eps), "relative_l1_to_limit": dist, "refined_resolution": 2 * resolution,
            "refined_relative_l1": refined, "blowup_of_blowup": bob, "eps_pair": [e1, e2]}


def body_mask(g: GridField, K: ConvexBody) -> np.ndarray:
    return _signed_distance(K, g.coords()) <= 0


# non-local representation


class NonlocalKernels:
    """Zero-homogeneous Γ(z), Ξ(z), Υ(z) acting on trace-free symmetric M."""

    @staticmethod
    def _unit(z):
        z = np.asarray(z, dtype=float)
        nz = np.linalg.norm(z, axis=-1, keepdims=True)
        if np.any(nz == 0):
            raise GridError("kernels are defined for z != 0")
        return z / nz

    @classmethod
    def gamma(cls, z, M):
        e = cls._unit(z)
        Me = np.einsum("...ij,...j->...i", M, e)
        return Me[..., :, None] * e[..., None, :] - e[..., :, None] * Me[..., None, :]

    @classmethod
    def xi(cls, z, M):
        e = cls._unit(z)
        n = e.shape[-1]
        q = np.einsum("...i,...ij,...j->...", e, M, e) - np.trace(M, axis1=-2, axis2=-1) / n
        return q[..., None, None] * np.eye(n)

    @classmethod
    def upsilon(cls, z, M):
        e = cls._unit(z)
        n = e.shape[-1]
        Me = np.einsum("...ij,...j->...i", M, e)
        q = np.einsum("...i,...i->...", e, Me)
        tr = np.trace(M, axis1=-2, axis2=-1)
        return 2 * Me - (n + 2) * q[..., None] * e + tr[..., None] * e


def kernel_bounds(n: int, samples: int = 10**5, seed: int = 0, scales=(1e-3, 1.0, 1e3)) -> dict:
    """Operator norms of Γ, Ξ, Υ over random unit z, evaluated at several |z| scales."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((samples, n))
    z /= np.linalg.norm(z, axis=1, keepdims=True)
    # operator norm over unit trace-free symmetric M in a Frobenius-orthonormal basis
    Q, _ = np.linalg.qr(np.stack([B.ravel() for B in sym_trace_free_basis(n)], axis=1))
    basis = [Q[:, k].reshape(n, n) for k in range(Q.shape[1])]
    out = {}
    for name, fn in (("Gamma", NonlocalKernels.gamma), ("Xi", NonlocalKernels.xi),
                     ("Upsilon", NonlocalKernels.upsilon)):
        sups = []
        for s in scales:
            cols = [fn(s * z, np.broadcast_to(B, (samples, n, n))).reshape(samples, -1) for B in basis]
            T = np.stack(cols, axis=-1)
            sups.append(float(np.max(np.linalg.norm(T, ord=2, axis=(1, 2)))))
        out[name] = sups
    return out


def annulus_rule(n: int, rho: float, tau: float, radial: int = 48, angular: int = 24) -> tuple:
    """Product rule on B_τ∖B_ϱ centred at 0: Gauss–Legendre in r times the sphere rule."""
    S, ws = sphere_rule(n, angular)
    r, wr = roots_legendre(radial)
    r = rho + (tau - rho) * (r + 1) / 2
    wr = wr * (tau - rho) / 2 * r ** (n - 1)
    pts = (r[:, None, None] * S[None]).reshape(-1, n)
    return pts, (wr[:, None] * ws[None]).ravel()


def sample_measure(mu: GridMeasure, points: np.ndarray, order: int = 3) -> np.ndarray:
    """Spline interpolation of the cell densities at points, shape (k, n, n)."""
    n = mu.n
    idx = ((np.asarray(points) - np.array(mu.lo)) / mu.spacing - 0.5).T
    out = np.empty((idx.shape[1], n, n))
    for i in range(n):
        for j in range(i, n):
            out[:, i, j] = out[:, j, i] = ndimage.map_coordinates(mu.density[..., i, j], idx, order=order,
                                                                  mode="nearest")
    return out


def nonlocal_identity_check(u: GridField, rho: float, tau: float, x, radial: int = 48, angular: int = 24,
                            mu: GridMeasure | None = None) -> dict:
    """Both sides of the three annulus identities for the ball coefficients A, γ, s.

    A_ϱ = −(1/ω_n)∫Γ/|z|ⁿ dℰ_d u + A_τ, γ_ϱ Id = −1/((n−1)ω_n)∫Ξ/|z|ⁿ dℰ_d u + γ_τ Id and
    s_ϱ = +1/((n−1)ω_n)∫Υ/|z|^{n+1} dℰ_d u + s_τ, with z = y − x over B_τ(x)∖B_ϱ(x).
    The annulus integral uses a radial × spherical product rule on the
    interpolated cell densities; a midpoint rule over cells converges only to
    first order here because the kernel varies strongly across a cell near ∂B_ϱ.
    """
    if not 0 < rho < tau:
        raise GridError("need 0 < rho < tau")
    n = u.n
    x = np.asarray(x, dtype=float)
    if not u.contains_box(x - tau, x + tau):
        raise GridError("annulus is clipped by the grid domain")
    mu = fd_Ed(u) if mu is None else mu
    z, w = annulus_rule(n, rho, tau, radial, angular)
    M = sample_measure(mu, x + z)
    r = np.linalg.norm(z, axis=1)
    om = unit_ball_volume(n)
    IA = np.einsum("k,kij->ij", w / r**n, NonlocalKernels.gamma(z, M))
    IX = np.einsum("k,kij->ij", w / r**n, NonlocalKernels.xi(z, M))
    IS = np.einsum("k,ki->i", w / r ** (n + 1), NonlocalKernels.upsilon(z, M))
    cr = coefficients(ConvexBody.ball(n, rho, x), u)
    ct = coefficients(ConvexBody.ball(n, tau, x), u)
    out = {}
    terms = {
        "A": (cr.A, -IA / om, ct.A),
        "gamma": (cr.gamma * np.eye(n), -IX / ((n - 1) * om), ct.gamma * np.eye(n)),
        "s": (cr.s, IS / ((n - 1) * om), ct.s),
    }
    for key, (lhs, integral, outer) in terms.items():
        res = float(np.linalg.norm(lhs - integral - outer))
        scale = max(float(np.linalg.norm(lhs)), float(np.linalg.norm(integral)), float(np.linalg.norm(outer)))
        out[key] = {"lhs_norm": float(np.linalg.norm(lhs)), "integral_norm": float(np.linalg.norm(integral)),
                    "residual": res, "relative": res / scale if scale > 0 else 0.0}
    return out


def smooth_bump_field(n: int, width: float = 1.0, seed: int = 0):
    """A smooth rapidly decaying vector field with generic ℰ_d, as a callable on points."""
    rng = np.random.default_rng(seed)
    B = rng.standard_normal((n, n))
    c = rng.standard_normal(n)
    shift = 0.1 * rng.standard_normal(n)

    def fn(pts):
        y = np.asarray(pts, dtype=float) - shift
        g = np.exp(-np.sum(y**2, axis=-1) / width**2)
        return g[..., None] * (y @ B.T + c)

    return fn


# decay ladder


def geometric_median(X: np.ndarray, w: np.ndarray, iters: int = 200, tol: float = 1e-12) -> np.ndarray:
    """Weighted geometric median by Weiszfeld iteration."""
    y = np.average(X, axis=0, weights=w)
    for _ in range(iters):
        d = np.linalg.norm(X - y, axis=1)
        d = np.maximum(d, 1e-15)
        wd = w / d
        y_new = (wd @ X) / wd.sum()
        if np.linalg.norm(y_new - y) <= tol * (1 + np.linalg.norm(y)):
            return y_new
        y = y_new
    return y


def quasi_continuity(u, x, rho: float, order: int = 8) -> float:
    """min_b ⨍_{B_ϱ(x)} |u − b|, with b the geometric median."""
    n = len(x)
    K = ConvexBody.ball(n, rho, x)
    pts, w = volume_quadrature(K, order)
    U = u.evaluate(pts) if hasattr(u, "evaluate") else u(pts)
    b = geometric_median(U, w)
    return float(w @ np.linalg.norm(U - b, axis=1) / w.sum())


def decay_check(u, x, rho0: float = 0.2, levels: int = 5, subtract_kernel: bool = False) -> dict:
    """Log-log slopes of ϱ²|s_ϱ|, ϱ|A_ϱ|, ϱ|γ_ϱ| over ϱ = ρ0·2^{−k}.

    ``u`` is a GridField or any field with ``evaluate``. With
    ``subtract_kernel`` the projection on the largest ball is removed first,
    so Killing fields give zero (exactly for analytic fields, up to the
    interpolation error for sampled ones).
    """
    x = np.asarray(x, dtype=float)
    n = len(x)
    rhos = rho0 * 0.5 ** np.arange(levels)
    if hasattr(u, "contains_box") and not u.contains_box(x - rho0, x + rho0):
        raise GridError("decay ladder leaves the domain")
    pts0, _ = volume_quadrature(ConvexBody.ball(n, rho0, x), 8)
    size = max(1.0, float(np.max(np.abs(u.evaluate(pts0)))))
    field = u
    if subtract_kernel:
        L = project(ConvexBody.ball(n, rho0, x), u)

        class _Minus:
            def evaluate(self, p):
                return u.evaluate(p) - L.evaluate(p)

        field = _Minus()
    q = {"s": [], "A": [], "gamma": []}
    qc = []
    for r in rhos:
        c = coefficients(ConvexBody.ball(n, r, x), field)
        q["s"].append(r**2 * float(np.linalg.norm(c.s)))
        q["A"].append(r * float(np.linalg.norm(c.A)))
        q["gamma"].append(r * abs(c.gamma))
        qc.append(quasi_continuity(field, x, r))
    slopes = {}
    for k, vals in q.items():
        v = np.array(vals)
        if np.all(v <= 1e-13 * size):
            slopes[k] = None
        else:
            slopes[k] = float(np.polyfit(np.log(rhos), np.log(np.maximum(v, 1e-300)), 1)[0])
    mono = bool(np.all(np.diff(qc) < 0)) if max(qc) > 0 else True
    return {"rho": rhos.tolist(), "quantities": q, "slopes": slopes, "quasi_continuity": qc,
            "quasi_continuity_decreasing": mono}


# Poincaré ratio and scaling on grids


def poincare_ratio_grid(K: ConvexBody, u: GridField, killing_tol: float = 1e-10, sub: int = 4) -> float:
    """‖u − ℛ_K u‖_{L¹(K)} / (diam K · |ℰ_d u|(K)) with cell quadrature over K.

    A field whose discrete ℰ_d mass is below ``killing_tol`` times its L¹ size
    (per unit length) is a sampled kernel element and gets ratio 0.
    """
    pts, idx, w = region_quadrature(u, K, sub)
    U = u.values.reshape(-1, u.n)[idx]
    tv = fd_Ed(u).mass(K, sub)
    scale = float(w @ np.linalg.norm(U, axis=1)) / K.diameter
    if tv <= killing_tol * max(scale, 1e-300):
        return 0.0
    R = project(K, u)
    diff = float(w @ np.linalg.norm(U - R.evaluate(pts), axis=1))
    return diff / (K.diameter * tv)


def scaling_mass_check(u: GridField, x, rho: float, K: ConvexBody, resolution: int = 64) -> dict:
    """|ℰ_d v_ϱ|(K) against ϱ^{−n}|ℰ_d u|(K_ϱ(x)) with v_ϱ(y) = u(x + ϱy)/ϱ resampled on K's box."""
    n = u.n
    x = np.asarray(x, dtype=float)
    lo, hi = _region_box(K)
    v = GridField.from_function(lambda p: u.evaluate(x + rho * p) / rho, tuple(lo), tuple(hi), resolution)
    lhs = fd_Ed(v).mass(K)
    rhs = fd_Ed(u).mass(K.rescaled(x, rho)) / rho**n
    return {"lhs": lhs, "rhs": rhs, "relative": abs(lhs - rhs) / max(abs(rhs), 1e-300)}
