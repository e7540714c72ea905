import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from rbfpdm.errors import DegenerateGradient, EmptyBand, FormatError, InvalidAxis
from rbfpdm.grid import (SdfGrid, load_grid, make_ellipsoid_cohort,
                         query_distance, query_distance_and_gradient,
                         query_normal, sample_narrow_band, save_grid)

from conftest import analytic_grid, sphere_sdf


def constant_grid(value=0.7, n=8):
    return SdfGrid(origin=[0, 0, 0], spacing=[1, 1, 1],
                   values=np.full((n, n, n), value))


class TestQueryDistance:
    def test_constant_field(self):
        grid = constant_grid(0.7)
        assert query_distance(grid, [2.3, 4.1, 0.9]) == pytest.approx(0.7)

    def test_sphere_outside(self, fine_sphere_grid):
        d = query_distance(fine_sphere_grid, [2.0, 0.0, 0.0])
        assert abs(d - 1.0) < fine_sphere_grid.spacing[0]

    def test_linear_midpoint(self):
        vals = np.zeros((2, 2, 2))
        vals[1, :, :] = 1.0
        grid = SdfGrid(origin=[0, 0, 0], spacing=[1, 1, 1], values=vals)
        assert query_distance(grid, [0.5, 0.5, 0.5]) == pytest.approx(0.5)

    def test_exact_at_nodes(self, sphere_grid):
        idx = np.array([[3, 7, 11], [16, 16, 16], [0, 0, 0]])
        pts = sphere_grid.origin + idx * sphere_grid.spacing
        got = query_distance(sphere_grid, pts)
        want = sphere_grid.values[idx[:, 0], idx[:, 1], idx[:, 2]]
        np.testing.assert_allclose(got, want, rtol=0, atol=1e-12)

    def test_out_of_box_clamps(self, sphere_grid):
        lo, hi = sphere_grid.box
        far = hi + 5.0
        assert query_distance(sphere_grid, far) == pytest.approx(
            query_distance(sphere_grid, hi))

    def test_continuity(self, sphere_grid):
        rng = np.random.default_rng(5)
        x = rng.uniform(-1.2, 1.2, (200, 3))
        y = x + rng.uniform(-1e-6, 1e-6, x.shape)
        dx = query_distance(sphere_grid, x)
        dy = query_distance(sphere_grid, y)
        bound = 1e-5 * np.abs(sphere_grid.values).max() / sphere_grid.spacing.min()
        assert np.abs(dx - dy).max() < bound

    def test_gradient_matches_fd(self, sphere_grid):
        rng = np.random.default_rng(2)
        # keep away from cell faces so central differences stay inside one cell
        idx = rng.integers(2, 30, size=(50, 3))
        frac = rng.uniform(0.2, 0.8, (50, 3))
        pts = sphere_grid.origin + (idx + frac) * sphere_grid.spacing
        _, grad = query_distance_and_gradient(sphere_grid, pts)
        h = 1e-6
        for axis in range(3):
            e = np.zeros(3)
            e[axis] = h
            fd = (query_distance(sphere_grid, pts + e)
                  - query_distance(sphere_grid, pts - e)) / (2 * h)
            np.testing.assert_allclose(grad[:, axis], fd, atol=1e-6)


class TestQueryNormal:
    def test_sphere_radial(self, fine_sphere_grid):
        n = query_normal(fine_sphere_grid, [2.0, 0.0, 0.0])
        np.testing.assert_allclose(n, [1.0, 0.0, 0.0], atol=1e-3)

    def test_sphere_radial_everywhere(self):
        grid = analytic_grid(sphere_sdf, lo=-2.2, hi=2.2, n=161)
        rng = np.random.default_rng(1)
        d = rng.normal(size=(100, 3))
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        for r in (0.5, 1.0, 1.9):
            n = query_normal(grid, d * r)
            np.testing.assert_allclose(n, d, atol=1e-3)

    def test_plane_field(self, plane_grid):
        n = query_normal(plane_grid, [0.3, -0.2, 0.4])
        np.testing.assert_allclose(n, [0.0, 0.0, 1.0], atol=1e-10)

    def test_constant_grid_degenerate(self):
        with pytest.raises(DegenerateGradient):
            query_normal(constant_grid(), [3.0, 3.0, 3.0])

    def test_unit_length(self, sphere_grid):
        n = query_normal(sphere_grid, [[0.4, 0.5, 0.6], [1.2, 0.0, -0.3]])
        np.testing.assert_allclose(np.linalg.norm(n, axis=1), 1.0, atol=1e-6)


class TestNarrowBand:
    def test_band_constraint(self, sphere_grid):
        band = sample_narrow_band(sphere_grid, 0.1, 100, seed=4)
        assert len(band.points) == 100
        d = np.abs(query_distance(sphere_grid, band.points))
        assert d.max() <= 0.1 + sphere_grid.voxel_diagonal

    def test_empty_band(self):
        # surface far from all nodes: coarse grid of a tiny sphere offset
        vals = np.full((4, 4, 4), 5.0)
        grid = SdfGrid(origin=[0, 0, 0], spacing=[1, 1, 1], values=vals)
        with pytest.raises(EmptyBand):
            sample_narrow_band(grid, 0.01, 10, seed=0)

    def test_determinism(self, sphere_grid):
        b1 = sample_narrow_band(sphere_grid, 0.2, 64, seed=9)
        b2 = sample_narrow_band(sphere_grid, 0.2, 64, seed=9)
        np.testing.assert_array_equal(b1.points, b2.points)

    def test_different_seeds_differ(self, sphere_grid):
        b1 = sample_narrow_band(sphere_grid, 0.2, 64, seed=9)
        b2 = sample_narrow_band(sphere_grid, 0.2, 64, seed=10)
        assert not np.array_equal(b1.points, b2.points)


class TestEllipsoidCohort:
    def test_zero_crossings(self):
        grids = make_ellipsoid_cohort(20, (1.0, 2.0), (0.5, 0.5), (64, 48, 48))
        assert len(grids) == 20
        for grid, a in zip((grids[0], grids[-1]), (1.0, 2.0)):
            # independent oracle: root-find the interpolated field on the x axis
            f = lambda x: query_distance(grid, np.array([x, 0.0, 0.0]))
            root = brentq(f, 0.5 * a, 1.5 * a)
            assert abs(root - a) < grid.spacing[0]

    def test_count_one_rejected(self):
        with pytest.raises(ValueError):
            make_ellipsoid_cohort(1, (1.0, 2.0), (0.5, 0.5), (32, 32, 32))

    def test_sphere_case_exact(self):
        grids = make_ellipsoid_cohort(2, (0.5, 0.5), (0.5, 0.5), (48, 48, 48))
        d = query_distance(grids[0], [0.5, 0.0, 0.0])
        assert abs(d) < grids[0].spacing[0]

    def test_too_small_axis(self):
        # the box scales with the semi-axes, so only very coarse dims fail
        with pytest.raises(InvalidAxis):
            make_ellipsoid_cohort(3, (1.0, 2.0), (0.5, 0.5), (5, 32, 32))


class TestGridFile:
    def test_round_trip(self, sphere_grid, tmp_path):
        path = tmp_path / "g.sdfgrid"
        save_grid(sphere_grid, path)
        loaded = load_grid(path)
        np.testing.assert_array_equal(loaded.values, sphere_grid.values)
        np.testing.assert_array_equal(loaded.origin, sphere_grid.origin)
        np.testing.assert_array_equal(loaded.spacing, sphere_grid.spacing)

    def test_truncated(self, sphere_grid, tmp_path):
        path = tmp_path / "g.sdfgrid"
        save_grid(sphere_grid, path)
        data = path.read_bytes()
        path.write_bytes(data[:len(data) // 2])
        with pytest.raises(FormatError):
            load_grid(path)

    def test_bad_magic(self, tmp_path):
        path = tmp_path / "g.sdfgrid"
        path.write_bytes(b"NOTAGRID" + b"\x00" * 64)
        with pytest.raises(FormatError):
            load_grid(path)

    def test_dims_payload_mismatch(self, tmp_path):
        path = tmp_path / "g.sdfgrid"
        header = b"SDFGRID1dims=4 4 4;origin=0 0 0;spacing=1 1 1\n"
        path.write_bytes(header + b"\x00" * (4 * 4 * 4 * 4 - 8))
        with pytest.raises(FormatError):
            load_grid(path)


@settings(max_examples=30, deadline=None)
@given(value=st.floats(-10, 10), x=st.floats(0.0, 3.0), y=st.floats(0.0, 3.0),
       z=st.floats(0.0, 3.0))
def test_constant_field_is_reproduced_everywhere(value, x, y, z):
    grid = constant_grid(value, n=4)
    # values are stored float32; compare against the stored constant
    stored = float(np.float32(value))
    assert query_distance(grid, [x, y, z]) == pytest.approx(stored, abs=1e-6)


def test_validation_errors():
    with pytest.raises(ValueError):
        SdfGrid(origin=[0, 0, 0], spacing=[0, 1, 1], values=np.zeros((2, 2, 2)))
    with pytest.raises(ValueError):
        SdfGrid(origin=[0, 0, 0], spacing=[1, 1, 1], values=np.zeros((1, 2, 2)))
    bad = np.zeros((2, 2, 2))
    bad[0, 0, 0] = np.nan
    with pytest.raises(ValueError):
        SdfGrid(origin=[0, 0, 0], spacing=[1, 1, 1], values=bad)
