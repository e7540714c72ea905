"""Model evaluation: PCA statistics and surface-to-surface distances."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DegenerateCohort, EmptyMesh, ZeroVariance
from .mesh import TriangleMesh, points_to_mesh_distance, surface_samples


@dataclass(frozen=True)
class ShapeModel:
    """PCA decomposition of the flattened cohort particle matrix."""

    mean: np.ndarray         # (3J,)
    modes: np.ndarray        # (M, 3J), orthonormal rows
    eigenvalues: np.ndarray  # (M,), descending
    cohort_size: int

    def sample(self, coeffs: np.ndarray, mode_count: int | None = None) -> np.ndarray:
        """mean + sum_m coeffs[m] * sqrt(lambda_m) * mode_m."""
        m = len(self.eigenvalues) if mode_count is None else mode_count
        return self.mean + (coeffs[:m] * np.sqrt(self.eigenvalues[:m])) @ self.modes[:m]


def pca_fit(vectors: np.ndarray) -> ShapeModel:
    """Eigendecomposition of the sample covariance of flattened particles.

    Uses the SVD / Gram route, so the 3J x 3J covariance is never formed.
    Retains min(I - 1, 3J) modes including near-zero ones.
    """
    x = np.asarray(vectors, dtype=np.float64)
    if x.ndim != 2 or x.shape[0] < 2:
        raise DegenerateCohort("need at least 2 shapes")
    i, n = x.shape
    mean = x.mean(axis=0)
    dev = x - mean
    u, sing, vt = np.linalg.svd(dev, full_matrices=False)
    m = min(i - 1, n)
    eigenvalues = (sing[:m] ** 2) / (i - 1)
    return ShapeModel(mean=mean, modes=vt[:m], eigenvalues=eigenvalues, cohort_size=i)


def compactness(model: ShapeModel, mode_count: int) -> float:
    """Fraction of total variance captured by the leading modes."""
    m = len(model.eigenvalues)
    if not 1 <= mode_count <= m:
        raise ValueError(f"mode_count must be in [1, {m}]")
    total = model.eigenvalues.sum()
    if total == 0:
        raise ZeroVariance("all eigenvalues are zero")
    return float(model.eigenvalues[:mode_count].sum() / total)


def _mean_particle_distance(a: np.ndarray, b: np.ndarray) -> float:
    """Mean Euclidean distance between corresponding particles."""
    return float(np.linalg.norm((a - b).reshape(-1, 3), axis=1).mean())


def specificity(model: ShapeModel, training_vectors: np.ndarray,
                mode_count: int, n_samples: int = 1000, seed: int = 0) -> float:
    """Mean distance from model samples to their nearest training shape.

    Samples are drawn from the model's Gaussian truncated to `mode_count`
    modes; the shape distance is the mean per-particle Euclidean distance.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    train = np.asarray(training_vectors, dtype=np.float64)
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(n_samples):
        z = rng.standard_normal(mode_count)
        sample = model.sample(z, mode_count)
        total += min(_mean_particle_distance(sample, t) for t in train)
    return total / n_samples


def generalization(training_vectors: np.ndarray, mode_count: int) -> float:
    """Leave-one-out reconstruction error at the given mode count.

    Each fold refits PCA on the remaining shapes, projects the held-out
    vector on the top modes, and measures the mean per-particle error.
    """
    x = np.asarray(training_vectors, dtype=np.float64)
    if x.shape[0] < 3:
        raise DegenerateCohort("need at least 3 shapes for leave-one-out")
    errors = []
    for hold in range(x.shape[0]):
        rest = np.delete(x, hold, axis=0)
        model = pca_fit(rest)
        m = min(mode_count, len(model.eigenvalues))
        d = x[hold] - model.mean
        recon = model.mean + (d @ model.modes[:m].T) @ model.modes[:m]
        errors.append(_mean_particle_distance(x[hold], recon))
    return float(np.mean(errors))


def surface_to_surface_distance(mesh_a: TriangleMesh, mesh_b: TriangleMesh):
    """Two-way symmetric mesh distance: (mean, max) over both directions.

    Each mesh is sampled at its vertices and triangle centroids; every
    sample is measured to the closest point on the other mesh's triangles.
    """
    if len(mesh_a.faces) == 0 or len(mesh_b.faces) == 0:
        raise EmptyMesh("both meshes must have faces")
    d_ab = points_to_mesh_distance(surface_samples(mesh_a), mesh_b)
    d_ba = points_to_mesh_distance(surface_samples(mesh_b), mesh_a)
    both = np.concatenate([d_ab, d_ba])
    return float(both.mean()), float(both.max())
