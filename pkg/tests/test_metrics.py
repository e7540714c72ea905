import numpy as np
import pytest

from rbfpdm.errors import DegenerateCohort, EmptyMesh, ZeroVariance
from rbfpdm.mesh import TriangleMesh, mesh_from_grid
from rbfpdm.metrics import (ShapeModel, compactness, generalization, pca_fit,
                            specificity, surface_to_surface_distance)

from conftest import analytic_grid, sphere_sdf


def one_parameter_family(count=12, particles=20, seed=1):
    """Shapes on a shared template scaled along x only: exactly rank 1."""
    rng = np.random.default_rng(seed)
    template = rng.normal(size=(particles, 3))
    vecs = []
    for t in np.linspace(1.0, 2.0, count):
        shape = template.copy()
        shape[:, 0] *= t
        vecs.append(shape.ravel())
    return np.stack(vecs)


class TestPcaFit:
    def test_identical_shapes(self):
        vecs = np.tile(np.arange(12.0), (5, 1))
        model = pca_fit(vecs)
        np.testing.assert_allclose(model.eigenvalues, 0.0, atol=1e-20)

    def test_one_parameter_family_rank_one(self):
        model = pca_fit(one_parameter_family())
        assert model.eigenvalues[0] > 0
        assert np.all(model.eigenvalues[1:] / model.eigenvalues[0] < 1e-8)

    def test_full_reconstruction(self):
        rng = np.random.default_rng(2)
        vecs = rng.normal(size=(6, 15))
        model = pca_fit(vecs)
        for v in vecs:
            d = v - model.mean
            recon = model.mean + (d @ model.modes.T) @ model.modes
            np.testing.assert_allclose(recon, v, atol=1e-8)

    def test_modes_orthonormal(self):
        model = pca_fit(np.random.default_rng(3).normal(size=(8, 12)))
        gram = model.modes @ model.modes.T
        np.testing.assert_allclose(gram, np.eye(len(model.eigenvalues)), atol=1e-8)

    def test_eigenvalues_descending(self):
        model = pca_fit(np.random.default_rng(4).normal(size=(10, 9)))
        assert np.all(np.diff(model.eigenvalues) <= 1e-12)

    def test_degenerate_cohort(self):
        with pytest.raises(DegenerateCohort):
            pca_fit(np.zeros((1, 6)))

    def test_rotation_equivariant_eigenvalues(self):
        from scipy.spatial.transform import Rotation
        vecs = np.random.default_rng(5).normal(size=(7, 12))
        rot = Rotation.random(rng=np.random.RandomState(2)).as_matrix()
        rotated = np.stack([(v.reshape(-1, 3) @ rot.T).ravel() for v in vecs])
        e1 = pca_fit(vecs).eigenvalues
        e2 = pca_fit(rotated).eigenvalues
        np.testing.assert_allclose(e1, e2, atol=1e-8)


class TestCompactness:
    def model_with(self, eigenvalues):
        n = len(eigenvalues)
        return ShapeModel(mean=np.zeros(n), modes=np.eye(n),
                          eigenvalues=np.asarray(eigenvalues, dtype=float),
                          cohort_size=n + 1)

    def test_full_modes_is_one(self):
        model = self.model_with([3.0, 1.0, 0.5])
        assert compactness(model, 3) == pytest.approx(1.0)

    def test_arithmetic(self):
        model = self.model_with([3.0, 1.0, 0.0])
        assert compactness(model, 1) == pytest.approx(0.75)

    def test_monotone(self):
        model = pca_fit(np.random.default_rng(6).normal(size=(8, 10)))
        vals = [compactness(model, m) for m in range(1, len(model.eigenvalues) + 1)]
        assert all(b >= a for a, b in zip(vals, vals[1:]))
        assert vals[-1] == pytest.approx(1.0)

    def test_zero_variance(self):
        model = self.model_with([0.0, 0.0])
        with pytest.raises(ZeroVariance):
            compactness(model, 1)


class TestSpecificity:
    def test_identical_cohort_zero(self):
        vecs = np.tile(np.arange(12.0), (4, 1))
        model = pca_fit(vecs)
        assert specificity(model, vecs, 1, n_samples=10, seed=0) == pytest.approx(0.0)

    def test_zero_variance_model_constant(self):
        vecs = np.tile(np.arange(12.0), (4, 1)).copy()
        vecs[0] += 0.5  # mean differs from every member
        model = ShapeModel(mean=vecs.mean(axis=0), modes=np.zeros((1, 12)),
                           eigenvalues=np.zeros(1), cohort_size=4)
        a = specificity(model, vecs, 1, n_samples=5, seed=1)
        b = specificity(model, vecs, 1, n_samples=50, seed=2)
        assert a == pytest.approx(b)

    def test_family_below_spacing(self):
        vecs = one_parameter_family(count=20)
        model = pca_fit(vecs)
        # oracle: nearest-neighbor spacing of the training family itself
        spacing = []
        for i in range(len(vecs)):
            d = [np.linalg.norm((vecs[i] - vecs[j]).reshape(-1, 3), axis=1).mean()
                 for j in range(len(vecs)) if j != i]
            spacing.append(min(d))
        result = specificity(model, vecs, 1, n_samples=100, seed=3)
        assert result < np.mean(spacing)


class TestGeneralization:
    def test_low_rank_cohort_exact(self):
        # cohort inside an (I-2)-dim affine subspace: LOO with all modes is exact
        rng = np.random.default_rng(7)
        basis = rng.normal(size=(3, 15))
        coeffs = rng.normal(size=(6, 3))
        vecs = 1.5 + coeffs @ basis
        assert generalization(vecs, mode_count=4) <= 1e-8

    def test_identical_shapes(self):
        vecs = np.tile(np.arange(9.0), (5, 1))
        assert generalization(vecs, 1) == pytest.approx(0.0, abs=1e-12)

    def test_one_parameter_family_single_mode(self):
        vecs = one_parameter_family()
        extent = np.abs(vecs).max()
        assert generalization(vecs, 1) <= 1e-6 * extent

    def test_monotone_in_modes(self):
        vecs = np.random.default_rng(8).normal(size=(8, 12))
        vals = [generalization(vecs, m) for m in range(1, 7)]
        assert all(b <= a + 1e-8 for a, b in zip(vals, vals[1:]))

    def test_degenerate(self):
        with pytest.raises(DegenerateCohort):
            generalization(np.zeros((2, 6)), 1)


def square_mesh(z, half=4.0, n=12):
    """Flat triangulated square at height z."""
    ax = np.linspace(-half, half, n)
    gx, gy = np.meshgrid(ax, ax, indexing="ij")
    verts = np.stack([gx.ravel(), gy.ravel(), np.full(n * n, z)], axis=1)
    faces = []
    for i in range(n - 1):
        for j in range(n - 1):
            a = i * n + j
            faces.append([a, a + n, a + 1])
            faces.append([a + 1, a + n, a + n + 1])
    return TriangleMesh(vertices=verts, faces=np.array(faces))


class TestSurfaceDistance:
    def test_identical_meshes(self):
        mesh = square_mesh(0.0)
        mean, mx = surface_to_surface_distance(mesh, mesh)
        assert mean == pytest.approx(0.0, abs=1e-12)
        assert mx == pytest.approx(0.0, abs=1e-12)

    def test_symmetry(self):
        a = square_mesh(0.0)
        b = square_mesh(0.3)
        assert surface_to_surface_distance(a, b) == surface_to_surface_distance(b, a)

    def test_parallel_planes(self):
        a = square_mesh(0.0, half=10.0, n=30)
        b = square_mesh(0.25, half=10.0, n=30)
        mean, mx = surface_to_surface_distance(a, b)
        assert mean == pytest.approx(0.25, rel=0.01)
        assert mx == pytest.approx(0.25, rel=0.01)

    def test_concentric_spheres(self):
        g1 = analytic_grid(lambda p: sphere_sdf(p, 1.0), lo=-1.6, hi=1.6, n=65)
        g2 = analytic_grid(lambda p: sphere_sdf(p, 1.1), lo=-1.6, hi=1.6, n=65)
        m1 = mesh_from_grid(g1)
        m2 = mesh_from_grid(g2)
        mean, mx = surface_to_surface_distance(m1, m2)
        assert mean == pytest.approx(0.1, abs=0.01)

    def test_empty_mesh(self):
        mesh = square_mesh(0.0)
        empty = TriangleMesh(vertices=np.zeros((0, 3)), faces=np.zeros((0, 3)))
        with pytest.raises(EmptyMesh):
            surface_to_surface_distance(mesh, empty)
