import numpy as np
import pytest

from rbfpdm.grid import SdfGrid


def analytic_grid(fn, lo=-1.6, hi=1.6, n=33):
    """Grid sampling an analytic signed-distance function on a cube."""
    ax = np.linspace(lo, hi, n)
    gx, gy, gz = np.meshgrid(ax, ax, ax, indexing="ij")
    pts = np.stack([gx, gy, gz], axis=-1)
    spacing = ax[1] - ax[0]
    return SdfGrid(origin=[lo] * 3, spacing=[spacing] * 3, values=fn(pts))


def sphere_sdf(pts, radius=1.0):
    return np.linalg.norm(pts, axis=-1) - radius


def plane_sdf(pts):
    return pts[..., 2]


@pytest.fixture(scope="session")
def sphere_grid():
    return analytic_grid(sphere_sdf)


@pytest.fixture(scope="session")
def fine_sphere_grid():
    return analytic_grid(sphere_sdf, lo=-2.2, hi=2.2, n=89)


@pytest.fixture(scope="session")
def plane_grid():
    return analytic_grid(plane_sdf)


def sphere_points(count, seed=0, radius=1.0, wobble=0.0):
    """Roughly uniform points on (or near) a sphere, with unit radial normals."""
    rng = np.random.default_rng(seed)
    d = rng.normal(size=(count, 3))
    d /= np.linalg.norm(d, axis=1, keepdims=True)
    r = radius + (rng.uniform(-wobble, wobble, (count, 1)) if wobble else 0.0)
    return d * r, d


def pytest_terminal_summary(terminalreporter):
    """Echo the acceptance verdicts after the run, outside output capture."""
    try:
        from test_acceptance import CRITERION_LINES
    except ImportError:
        return
    if CRITERION_LINES:
        terminalreporter.section("acceptance criteria")
        for line in CRITERION_LINES:
            terminalreporter.write_line(line)
