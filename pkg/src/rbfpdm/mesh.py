"""Triangle meshes: marching-cubes extraction, OBJ export, exact distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree
from skimage import measure

from .errors import EmptyIsosurface, EmptyMesh, FormatError


@dataclass(frozen=True)
class TriangleMesh:
    vertices: np.ndarray  # (V, 3) float
    faces: np.ndarray     # (F, 3) int

    def __post_init__(self):
        object.__setattr__(self, "vertices", np.asarray(self.vertices, dtype=np.float64))
        object.__setattr__(self, "faces", np.asarray(self.faces, dtype=np.int64))
        if self.vertices.ndim != 2 or self.vertices.shape[1] != 3:
            raise ValueError("vertices must be (V, 3)")
        if self.faces.ndim != 2 or self.faces.shape[1] != 3:
            raise ValueError("faces must be (F, 3)")


def mesh_from_lattice(values: np.ndarray, origin, spacing) -> TriangleMesh:
    """Zero level set of a scalar lattice via marching cubes.

    `values` is (nx, ny, nz) sampled at origin + index * spacing. Raises
    EmptyIsosurface when the lattice has no sign change.
    """
    values = np.asarray(values, dtype=np.float64)
    if values.min() > 0 or values.max() < 0:
        raise EmptyIsosurface("lattice values do not straddle zero")
    try:
        verts, faces, _, _ = measure.marching_cubes(
            values, level=0.0, spacing=tuple(np.asarray(spacing, dtype=float))
        )
    except (ValueError, RuntimeError) as exc:
        raise EmptyIsosurface(str(exc)) from exc
    if len(verts) == 0 or len(faces) == 0:
        raise EmptyIsosurface("marching cubes produced an empty mesh")
    return TriangleMesh(vertices=verts + np.asarray(origin, dtype=float), faces=faces)


def mesh_from_grid(grid) -> TriangleMesh:
    """Marching cubes directly on an SdfGrid's stored values."""
    return mesh_from_lattice(grid.values, grid.origin, grid.spacing)


def save_obj(mesh: TriangleMesh, path) -> None:
    """ASCII OBJ with 1-based face indices."""
    with open(path, "w") as fh:
        for v in mesh.vertices:
            fh.write(f"v {v[0]:.9g} {v[1]:.9g} {v[2]:.9g}\n")
        for f in mesh.faces:
            fh.write(f"f {f[0] + 1} {f[1] + 1} {f[2] + 1}\n")


def load_obj(path) -> TriangleMesh:
    verts, faces = [], []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            parts = raw.split()
            if not parts or parts[0] not in ("v", "f"):
                continue
            if parts[0] == "v":
                if len(parts) != 4:
                    raise FormatError(f"{path}:{lineno}: bad vertex arity")
                verts.append([float(p) for p in parts[1:]])
            else:
                if len(parts) != 4:
                    raise FormatError(f"{path}:{lineno}: bad face arity")
                faces.append([int(p.split("/")[0]) - 1 for p in parts[1:]])
    if not verts or not faces:
        raise FormatError(f"{path}: no geometry")
    return TriangleMesh(vertices=np.array(verts), faces=np.array(faces))


def point_triangle_distances(points: np.ndarray, tri_a, tri_b, tri_c) -> np.ndarray:
    """Exact distance from each point to its paired triangle (vectorized).

    All arguments are (N, 3); the i-th point is tested against the i-th
    triangle. Closest-point classification by barycentric regions.
    """
    p = np.asarray(points, dtype=np.float64)
    a, b, c = (np.asarray(t, dtype=np.float64) for t in (tri_a, tri_b, tri_c))
    ab = b - a
    ac = c - a
    ap = p - a

    d1 = np.einsum("ij,ij->i", ab, ap)
    d2 = np.einsum("ij,ij->i", ac, ap)
    d3 = np.einsum("ij,ij->i", ab, p - b)
    d4 = np.einsum("ij,ij->i", ac, p - b)
    d5 = np.einsum("ij,ij->i", ab, p - c)
    d6 = np.einsum("ij,ij->i", ac, p - c)

    closest = np.empty_like(p)
    done = np.zeros(len(p), dtype=bool)

    def assign(mask, value):
        m = mask & ~done
        closest[m] = value[m] if value.shape == p.shape else value
        done[m] = True

    assign((d1 <= 0) & (d2 <= 0), a)                     # vertex A
    assign((d3 >= 0) & (d4 <= d3), b)                    # vertex B
    assign((d6 >= 0) & (d5 <= d6), c)                    # vertex C

    vc = d1 * d4 - d3 * d2
    with np.errstate(divide="ignore", invalid="ignore"):
        v_ab = np.where(d1 - d3 != 0, d1 / (d1 - d3), 0.0)
    assign((vc <= 0) & (d1 >= 0) & (d3 <= 0), a + v_ab[:, None] * ab)   # edge AB

    vb = d5 * d2 - d1 * d6
    with np.errstate(divide="ignore", invalid="ignore"):
        w_ac = np.where(d2 - d6 != 0, d2 / (d2 - d6), 0.0)
    assign((vb <= 0) & (d2 >= 0) & (d6 <= 0), a + w_ac[:, None] * ac)   # edge AC

    va = d3 * d6 - d5 * d4
    denom_bc = (d4 - d3) + (d5 - d6)
    with np.errstate(divide="ignore", invalid="ignore"):
        w_bc = np.where(denom_bc != 0, (d4 - d3) / denom_bc, 0.0)
    assign((va <= 0) & (d4 - d3 >= 0) & (d5 - d6 >= 0), b + w_bc[:, None] * (c - b))  # edge BC

    # interior
    denom = va + vb + vc
    with np.errstate(divide="ignore", invalid="ignore"):
        v = np.where(denom != 0, vb / denom, 0.0)
        w = np.where(denom != 0, vc / denom, 0.0)
    assign(np.ones(len(p), dtype=bool), a + v[:, None] * ab + w[:, None] * ac)

    return np.linalg.norm(p - closest, axis=1)


def surface_samples(mesh: TriangleMesh) -> np.ndarray:
    """Vertices plus per-triangle centroids, the sampling set for distances."""
    tri = mesh.vertices[mesh.faces]
    centroids = tri.mean(axis=1)
    return np.vstack([mesh.vertices, centroids])


def points_to_mesh_distance(points: np.ndarray, mesh: TriangleMesh) -> np.ndarray:
    """Exact distance from each point to the closest triangle of `mesh`.

    A kd-tree over triangle centroids prunes candidates: the nearest-vertex
    distance is an upper bound, so only triangles whose centroid lies within
    that bound plus the largest centroid-to-vertex radius can be closer.
    """
    if len(mesh.faces) == 0:
        raise EmptyMesh("target mesh has no faces")
    points = np.asarray(points, dtype=np.float64)
    tri = mesh.vertices[mesh.faces]  # (F, 3, 3)
    centroids = tri.mean(axis=1)
    tri_radius = np.linalg.norm(tri - centroids[:, None, :], axis=2).max()

    vert_tree = cKDTree(mesh.vertices)
    upper, _ = vert_tree.query(points)
    cent_tree = cKDTree(centroids)
    candidates = cent_tree.query_ball_point(points, upper + tri_radius + 1e-12)

    pt_idx = np.concatenate([np.full(len(c), i) for i, c in enumerate(candidates)])
    tr_idx = np.concatenate([np.asarray(c, dtype=np.int64) for c in candidates])
    d = point_triangle_distances(points[pt_idx], tri[tr_idx, 0], tri[tr_idx, 1], tri[tr_idx, 2])

    out = upper.copy()  # vertex distance is a valid fallback
    np.minimum.at(out, pt_idx, d)
    return out
