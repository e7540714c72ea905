"""Signed-distance voxel grids: queries, narrow-band sampling, synthetic cohorts.

A grid stores samples of a signed distance field at the nodes
``origin + index * spacing`` (negative inside the shape, positive outside).
Queries interpolate trilinearly between the eight surrounding nodes and
clamp out-of-box locations to the box boundary so that optimization steps
that momentarily escape the grid still see a restoring field.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field

import numpy as np

from .errors import DegenerateGradient, EmptyBand, FormatError, InvalidAxis

_MAGIC = b"SDFGRID1"


@dataclass(frozen=True)
class SdfGrid:
    """Axis-aligned voxel grid of signed distances.

    Parameters
    ----------
    origin : (3,) array
        World position of node (0, 0, 0).
    spacing : (3,) array
        Positive voxel edge lengths.
    values : (nx, ny, nz) array
        Signed distances at the nodes; stored as float32.
    """

    origin: np.ndarray
    spacing: np.ndarray
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "origin", np.asarray(self.origin, dtype=np.float64))
        object.__setattr__(self, "spacing", np.asarray(self.spacing, dtype=np.float64))
        object.__setattr__(self, "values", np.asarray(self.values, dtype=np.float32))
        if self.origin.shape != (3,) or self.spacing.shape != (3,):
            raise ValueError("origin and spacing must be 3-vectors")
        if np.any(self.spacing <= 0):
            raise ValueError("spacing components must be strictly positive")
        if self.values.ndim != 3 or min(self.values.shape) < 2:
            raise ValueError("values must be a 3-d array with dims >= 2")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("values must be finite")

    @property
    def dims(self) -> tuple[int, int, int]:
        return self.values.shape

    @property
    def box(self) -> tuple[np.ndarray, np.ndarray]:
        """(lo, hi) corners of the node bounding box."""
        hi = self.origin + self.spacing * (np.array(self.dims) - 1)
        return self.origin.copy(), hi

    @property
    def voxel_diagonal(self) -> float:
        return float(np.linalg.norm(self.spacing))


@dataclass(frozen=True)
class NarrowBand:
    """Points sampled within +/- band_width of the zero level set."""

    points: np.ndarray  # (R, 3)
    band_width: float

    def __post_init__(self):
        object.__setattr__(self, "points", np.asarray(self.points, dtype=np.float64))
        if self.points.ndim != 2 or self.points.shape[1] != 3:
            raise ValueError("points must be (R, 3)")
        if self.band_width <= 0:
            raise ValueError("band_width must be positive")


def _interp_weights(grid: SdfGrid, x: np.ndarray):
    """Cell index, fractional coordinate and clamp mask for query points.

    x is (N, 3); returns (i0 (N,3) int, t (N,3) float, interior (N,3) bool)
    where interior is False along axes where the point was clamped.
    """
    dims = np.array(grid.dims)
    rel = (x - grid.origin) / grid.spacing
    interior = (rel > 0.0) & (rel < dims - 1)
    rel = np.clip(rel, 0.0, dims - 1)
    i0 = np.minimum(rel.astype(np.int64), dims - 2)
    t = rel - i0
    return i0, t, interior


def _gather_corners(grid: SdfGrid, i0: np.ndarray) -> np.ndarray:
    """(N, 2, 2, 2) corner values of the cells at i0."""
    v = grid.values
    ix, iy, iz = i0[:, 0], i0[:, 1], i0[:, 2]
    out = np.empty((len(i0), 2, 2, 2), dtype=np.float64)
    for dx in (0, 1):
        for dy in (0, 1):
            for dz in (0, 1):
                out[:, dx, dy, dz] = v[ix + dx, iy + dy, iz + dz]
    return out


def query_distance(grid: SdfGrid, x) -> np.ndarray | float:
    """Trilinearly interpolated signed distance at x ((3,) or (N, 3))."""
    val, _ = query_distance_and_gradient(grid, x)
    return val


def query_distance_and_gradient(grid: SdfGrid, x):
    """Interpolated distance and the exact gradient of the interpolant.

    The gradient is the analytic derivative of the trilinear interpolant
    (piecewise constant per cell along each axis at the cell scale); it is
    zero along axes where the query point was clamped to the box.
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    i0, t, interior = _interp_weights(grid, pts)
    c = _gather_corners(grid, i0)
    tx, ty, tz = t[:, 0], t[:, 1], t[:, 2]

    # collapse z, then y, then x
    cz = c[..., 0] * (1 - tz)[:, None, None] + c[..., 1] * tz[:, None, None]
    cy = cz[..., 0] * (1 - ty)[:, None] + cz[..., 1] * ty[:, None]
    val = cy[..., 0] * (1 - tx) + cy[..., 1] * tx

    dvx = cy[..., 1] - cy[..., 0]
    cy_dz = (c[..., 1] - c[..., 0])  # (N,2,2) d/dtz
    cyz = cy_dz[..., 0] * (1 - ty)[:, None] + cy_dz[..., 1] * ty[:, None]
    dvz = cyz[..., 0] * (1 - tx) + cyz[..., 1] * tx
    cy_dy = cz[..., 1] - cz[..., 0]  # (N,2) d/dty
    dvy = cy_dy[..., 0] * (1 - tx) + cy_dy[..., 1] * tx

    grad = np.stack([dvx, dvy, dvz], axis=-1) / grid.spacing
    grad = np.where(interior, grad, 0.0)
    if single:
        return float(val[0]), grad[0]
    return val, grad


def query_normal(grid: SdfGrid, x) -> np.ndarray:
    """Outward unit normal from central differences of the distance field.

    Step size is one voxel spacing per axis. Raises DegenerateGradient when
    the gradient norm is <= 1e-8 (medial axis or flat field).
    """
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    pts = x[None, :] if single else x
    g = np.empty_like(pts)
    for axis in range(3):
        h = grid.spacing[axis]
        step = np.zeros(3)
        step[axis] = h
        g[:, axis] = (query_distance(grid, pts + step) - query_distance(grid, pts - step)) / (2 * h)
    norm = np.linalg.norm(g, axis=1)
    if np.any(norm <= 1e-8):
        raise DegenerateGradient("distance-field gradient norm <= 1e-8")
    g /= norm[:, None]
    return g[0] if single else g


def sample_narrow_band(grid: SdfGrid, s: float, count: int, seed: int) -> NarrowBand:
    """Sample `count` points uniformly from voxels with |D| <= s.

    Voxel centers are drawn with replacement and jittered uniformly within
    their voxel, so coverage of the band is approximately uniform and the
    procedure always terminates. Deterministic for a fixed seed.
    """
    if s <= 0:
        raise ValueError("band half-width must be positive")
    if count < 1:
        raise ValueError("count must be >= 1")
    mask = np.abs(grid.values) <= s
    idx = np.flatnonzero(mask)
    if idx.size == 0:
        raise EmptyBand(f"no voxel within |D| <= {s}")
    rng = np.random.default_rng(seed)
    chosen = rng.choice(idx, size=count, replace=True)
    ijk = np.stack(np.unravel_index(chosen, grid.dims), axis=1).astype(np.float64)
    jitter = rng.uniform(-0.5, 0.5, size=(count, 3))
    points = grid.origin + (ijk + jitter) * grid.spacing
    lo, hi = grid.box
    points = np.clip(points, lo, hi)
    return NarrowBand(points=points, band_width=float(s))


def ellipsoid_sdf(points, semi_axes) -> np.ndarray:
    """First-order approximation of the ellipsoid signed distance.

    D(x) = g(x) / ||grad g(x)|| with g(x) = ||x / a|| - 1: exact for spheres,
    elsewhere a signed field (negative inside) whose magnitude and gradient
    approach true Euclidean distance near the surface. The center, where
    grad g vanishes, falls back to -min(a).
    """
    points = np.asarray(points, dtype=np.float64)
    a = np.asarray(semi_axes, dtype=np.float64)
    r = np.linalg.norm(points / a, axis=-1)
    grad_norm = np.linalg.norm(points / a ** 2, axis=-1)
    return np.where(grad_norm > 0.0,
                    (r - 1.0) * r / np.maximum(grad_norm, 1e-300), -a.min())


def make_ellipsoid_grid(semi_axes, dims, margin: float = 1.2) -> SdfGrid:
    """Single ellipsoid grid with the box scaled to `margin` * semi-axes."""
    a = np.asarray(semi_axes, dtype=np.float64)
    dims = np.asarray(dims, dtype=np.int64)
    half = margin * a
    origin = -half
    spacing = 2 * half / (dims - 1)
    if np.any(a <= 2 * spacing):
        raise InvalidAxis("semi-axis must exceed 2 voxel spacings")
    axes = [origin[k] + spacing[k] * np.arange(dims[k]) for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1)
    return SdfGrid(origin=origin, spacing=spacing, values=ellipsoid_sdf(pts, a))


def make_ellipsoid_cohort(count, axis_range, fixed_axes, dims, seed: int = 0,
                          margin: float = 1.2) -> list[SdfGrid]:
    """Cohort of ellipsoids whose x semi-axis spans axis_range linearly.

    All grids share the same world box (sized for the largest member) so the
    cohort is directly comparable voxel by voxel. `seed` is accepted for
    interface symmetry with the samplers; the construction is deterministic.
    """
    if count < 2:
        raise ValueError("count must be >= 2")
    lo, hi = float(axis_range[0]), float(axis_range[1])
    if lo <= 0 or hi <= 0 or hi < lo:
        raise ValueError("axis_range must be positive and ordered")
    b, c = float(fixed_axes[0]), float(fixed_axes[1])
    if b <= 0 or c <= 0:
        raise ValueError("fixed axes must be positive")
    dims = np.asarray(dims, dtype=np.int64)
    half = margin * np.array([hi, b, c])
    origin = -half
    spacing = 2 * half / (dims - 1)
    for a in ([lo, b, c], [hi, b, c]):
        if np.any(np.asarray(a) <= 2 * spacing):
            raise InvalidAxis("semi-axis must exceed 2 voxel spacings")
    axes = [origin[k] + spacing[k] * np.arange(dims[k]) for k in range(3)]
    gx, gy, gz = np.meshgrid(*axes, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1)
    grids = []
    for ax in np.linspace(lo, hi, count):
        values = ellipsoid_sdf(pts, (ax, b, c))
        grids.append(SdfGrid(origin=origin, spacing=spacing, values=values))
    return grids


def save_grid(grid: SdfGrid, path) -> None:
    """Write the binary .sdfgrid format (float32 payload, x-fastest)."""
    nx, ny, nz = grid.dims
    header = (
        f"dims={nx} {ny} {nz};"
        f"origin={grid.origin[0]:.17g} {grid.origin[1]:.17g} {grid.origin[2]:.17g};"
        f"spacing={grid.spacing[0]:.17g} {grid.spacing[1]:.17g} {grid.spacing[2]:.17g}\n"
    )
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(header.encode("utf-8"))
        fh.write(grid.values.astype("<f4").ravel(order="F").tobytes())


_HEADER_RE = re.compile(
    r"^dims=(\d+) (\d+) (\d+);"
    r"origin=(\S+) (\S+) (\S+);"
    r"spacing=(\S+) (\S+) (\S+)$"
)


def load_grid(path) -> SdfGrid:
    """Read a .sdfgrid file; raises FormatError on any structural defect."""
    with open(path, "rb") as fh:
        magic = fh.read(8)
        if magic != _MAGIC:
            raise FormatError(f"{path}: bad magic {magic!r}")
        line = bytearray()
        while True:
            ch = fh.read(1)
            if not ch:
                raise FormatError(f"{path}: truncated header")
            if ch == b"\n":
                break
            line += ch
            if len(line) > 4096:
                raise FormatError(f"{path}: header too long")
        m = _HEADER_RE.match(line.decode("utf-8", errors="replace"))
        if not m:
            raise FormatError(f"{path}: malformed header")
        nx, ny, nz = (int(m.group(k)) for k in (1, 2, 3))
        origin = np.array([float(m.group(k)) for k in (4, 5, 6)])
        spacing = np.array([float(m.group(k)) for k in (7, 8, 9)])
        payload = fh.read()
    expected = nx * ny * nz * 4
    if len(payload) != expected:
        raise FormatError(f"{path}: payload is {len(payload)} bytes, expected {expected}")
    values = np.frombuffer(payload, dtype="<f4").reshape((nx, ny, nz), order="F")
    try:
        return SdfGrid(origin=origin, spacing=spacing, values=values)
    except ValueError as exc:
        raise FormatError(f"{path}: {exc}") from exc
