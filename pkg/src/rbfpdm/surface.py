"""Implicit surface interpolation from oriented control points.

Each control point contributes three interpolation sites: itself (value 0)
and two off-surface points at +/- s along its normal (values +s / -s, the
sign convention being positive outside). A polyharmonic kernel plus a linear
polynomial is fit through all sites by a dense saddle-point solve with the
standard side conditions sum(w) = 0 and sum(w * site) = 0.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import lu_factor, lu_solve
from scipy.spatial.distance import cdist

from .errors import DuplicateSite, InvalidBand, SingularSystem
from .grid import NarrowBand, SdfGrid, query_distance
from .mesh import TriangleMesh, mesh_from_lattice

KERNELS = ("biharmonic", "triharmonic", "thin-plate-spline")

_DUPLICATE_TOL = 1e-9


@dataclass(frozen=True)
class ParticleSystem:
    """Control points and outward unit normals for one shape."""

    points: np.ndarray   # (J, 3)
    normals: np.ndarray  # (J, 3)
    shape_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64))
        object.__setattr__(self, "normals", np.asarray(self.normals, dtype=np.float64))
        if self.points.shape != self.normals.shape or self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("points and normals must both be (J, 3)")
        if len(self.points) < 4:
            raise ValueError("at least 4 control points are required")
        norms = np.linalg.norm(self.normals, axis=1)
        if np.any(np.abs(norms - 1.0) > 1e-6):
            raise ValueError("normals must be unit length")
        d = cdist(self.points, self.points)
        np.fill_diagonal(d, np.inf)
        if d.min() < _DUPLICATE_TOL:
            raise ValueError("duplicate control points")

    @property
    def count(self) -> int:
        return len(self.points)

    def flattened(self) -> np.ndarray:
        return self.points.ravel()


@dataclass(frozen=True)
class DipoleSet:
    """Interpolation sites (3J, 3) and their prescribed values (3J,)."""

    sites: np.ndarray
    values: np.ndarray
    offset: float  # the +/- s magnitude


def kernel_radial(kind: str, r: np.ndarray) -> np.ndarray:
    """phi(r) for the polyharmonic kernel `kind`."""
    r = np.asarray(r, dtype=np.float64)
    if kind == "biharmonic":
        return r
    if kind == "triharmonic":
        return r ** 3
    if kind == "thin-plate-spline":
        out = np.zeros_like(r)
        nz = r > 0
        out[nz] = r[nz] ** 2 * np.log(r[nz])
        return out
    raise ValueError(f"unknown kernel {kind!r}")


def kernel_radial_slope(kind: str, r: np.ndarray) -> np.ndarray:
    """phi'(r) / r, so that grad_x phi(|x-y|) = slope * (x - y)."""
    r = np.asarray(r, dtype=np.float64)
    safe = np.where(r > 0, r, 1.0)
    if kind == "biharmonic":
        out = 1.0 / safe
    elif kind == "triharmonic":
        out = 3.0 * r
    elif kind == "thin-plate-spline":
        out = 2.0 * np.log(safe) + 1.0
    else:
        raise ValueError(f"unknown kernel {kind!r}")
    return np.where(r > 0, out, 0.0)


def kernel_eval(kind: str, x, y) -> float:
    """phi(|x - y|) between two points."""
    r = np.linalg.norm(np.asarray(x, dtype=float) - np.asarray(y, dtype=float))
    return float(kernel_radial(kind, np.array([r]))[0])


def build_dipoles(ps: ParticleSystem, s: float) -> DipoleSet:
    """Sites [p, p + s*n, p - s*n] per particle with values [0, +s, -s]."""
    if s <= 0:
        raise InvalidBand("dipole offset s must be positive")
    j = ps.count
    sites = np.empty((3 * j, 3))
    sites[0::3] = ps.points
    sites[1::3] = ps.points + s * ps.normals
    sites[2::3] = ps.points - s * ps.normals
    values = np.tile([0.0, s, -s], j)
    d = cdist(sites, sites)
    np.fill_diagonal(d, np.inf)
    if d.min() < _DUPLICATE_TOL:
        raise DuplicateSite("two interpolation sites coincide; s too small or points duplicated")
    return DipoleSet(sites=sites, values=values, offset=float(s))


@dataclass(frozen=True)
class RbfSurface:
    """Fitted implicit function: kernel sites, solved weights, linear part.

    Immutable after fit; evaluation is thread-safe. The LU factorization of
    the interpolation system is retained for adjoint solves during gradient
    computation.
    """

    dipoles: DipoleSet
    kernel: str
    weights: np.ndarray      # (3J,)
    linear: np.ndarray       # (3,)
    constant: float
    regularization: float
    lu: tuple = field(repr=False, compare=False, default=None)

    @property
    def coefficients(self) -> np.ndarray:
        """Full solution vector [w; c0; c1; c2; c3]."""
        return np.concatenate([self.weights, [self.constant], self.linear])

    def solve_adjoint(self, rhs: np.ndarray) -> np.ndarray:
        """Solve A x = rhs against the stored factorization (A symmetric)."""
        return lu_solve(self.lu, rhs)


def _assemble(sites: np.ndarray, kernel: str, lam: float) -> np.ndarray:
    n = len(sites)
    phi = kernel_radial(kernel, cdist(sites, sites))
    a = np.zeros((n + 4, n + 4))
    a[:n, :n] = phi + lam * np.eye(n)
    q = np.hstack([np.ones((n, 1)), sites])
    a[:n, n:] = q
    a[n:, :n] = q.T
    return a


def fit(dipoles: DipoleSet, kernel: str = "biharmonic", regularization: float = 0.0) -> RbfSurface:
    """Solve the dense saddle-point system through all dipole sites.

    With regularization 0 the result interpolates the prescribed values
    exactly; a small ridge can be passed when sites are near-coincident.
    """
    if kernel not in KERNELS:
        raise ValueError(f"unknown kernel {kernel!r}")
    sites = dipoles.sites
    n = len(sites)
    a = _assemble(sites, kernel, regularization)
    rhs = np.concatenate([dipoles.values, np.zeros(4)])
    try:
        lu = lu_factor(a)
    except np.linalg.LinAlgError as exc:
        raise SingularSystem(str(exc)) from exc
    diag = np.abs(np.diag(lu[0]))
    scale = max(np.abs(a).max(), 1.0)
    if diag.min() < 1e-14 * scale:
        raise SingularSystem("interpolation system is numerically singular")
    sol = lu_solve(lu, rhs)
    return RbfSurface(
        dipoles=dipoles,
        kernel=kernel,
        weights=sol[:n],
        linear=sol[n + 1:],
        constant=float(sol[n]),
        regularization=float(regularization),
        lu=lu,
    )


def fit_particles(ps: ParticleSystem, s: float, kernel: str = "biharmonic",
                  regularization: float = 0.0) -> RbfSurface:
    """Convenience: build dipoles then fit."""
    return fit(build_dipoles(ps, s), kernel, regularization)


def evaluate(surface: RbfSurface, x) -> np.ndarray | float:
    """Implicit function value at x ((3,) or (N, 3)); chunked internally."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    out = np.empty(len(pts))
    chunk = max(1, 8_000_000 // max(len(surface.dipoles.sites), 1))
    for start in range(0, len(pts), chunk):
        p = pts[start:start + chunk]
        phi = kernel_radial(surface.kernel, cdist(p, surface.dipoles.sites))
        out[start:start + chunk] = phi @ surface.weights + p @ surface.linear + surface.constant
    return float(out[0]) if single else out


def band_error(surface: RbfSurface, band: NarrowBand, grid: SdfGrid) -> np.ndarray:
    """Squared mismatch between the interpolant and the grid field per band point."""
    f = evaluate(surface, band.points)
    d = query_distance(grid, band.points)
    return (f - d) ** 2


def extract_mesh(surface: RbfSurface, box, resolution) -> TriangleMesh:
    """Marching-cubes mesh of the interpolant's zero level set over `box`."""
    lo = np.asarray(box[0], dtype=np.float64)
    hi = np.asarray(box[1], dtype=np.float64)
    res = np.asarray(resolution, dtype=np.int64)
    if np.any(hi <= lo):
        raise ValueError("box must be non-degenerate")
    if np.any(res < 2):
        raise ValueError("resolution must be >= 2 per axis")
    spacing = (hi - lo) / (res - 1)
    axes = [lo[k] + spacing[k] * np.arange(res[k]) for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel(), gz.ravel()], axis=1)
    values = evaluate(surface, pts).reshape(tuple(res))
    return mesh_from_lattice(values, lo, spacing)
