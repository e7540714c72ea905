"""The four optimization objectives and their analytic gradients.

All gradients are with respect to control-point positions; normals are
treated as locally constant per step. The narrow-band term differentiates
through the interpolation solve with the adjoint of the linear system (one
back-substitution against the stored factorization), so gradients are exact
up to floating point rather than numerical approximations.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from .errors import MeanUnavailable, NonPositiveFloor
from .grid import NarrowBand, SdfGrid, query_distance, query_distance_and_gradient
from .surface import (ParticleSystem, RbfSurface, band_error, kernel_radial,
                      kernel_radial_slope)


@dataclass
class LossConfig:
    """Weights and knobs of the total objective.

    alpha: surface term, beta: narrow-band sampling term, gamma: eigenshape
    (entropy) term, zeta: correspondence (scatter Frobenius) term. `c` scales
    the reconstruction-error pull inside the sampling term, `s` is the band
    half-width / dipole offset, `band_samples` the number of narrow-band
    points per shape per epoch, `eps_cov` the covariance eigenvalue floor.
    """

    alpha: float = 0.1
    beta: float = 1.0
    gamma: float = 0.01
    zeta: float = 0.01
    c: float = 10.0
    s: float = 0.1
    batch_size: int = 4
    band_samples: int = 10_000
    eps_cov: float = 1e-6

    def __post_init__(self):
        for name in ("alpha", "beta", "gamma", "zeta", "c", "eps_cov"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.alpha == self.beta == self.gamma == self.zeta == 0:
            raise ValueError("at least one loss weight must be positive")
        if self.s <= 0:
            raise ValueError("band half-width s must be positive")
        if self.batch_size < 1 or self.band_samples < 1:
            raise ValueError("batch_size and band_samples must be >= 1")
        if (self.gamma > 0 or self.zeta > 0) and self.batch_size < 2:
            raise ValueError("cohort terms need batch_size >= 2")


@dataclass(frozen=True)
class CohortMean:
    """Flattened mean particle vector, stamped with the epoch it came from."""

    mu: np.ndarray  # (3J,)
    epoch_stamp: int


@dataclass
class LossBreakdown:
    """Unweighted term values, the weighted total, and per-shape gradients."""

    surface: float
    sampling: float
    eigenshape: float
    correspondence: float
    total: float
    gradients: list = field(default_factory=list)  # per shape, (J, 3)


def surface_loss(ps: ParticleSystem, grid: SdfGrid) -> float:
    """Sum of |D| over the control points."""
    return float(np.abs(query_distance(grid, ps.points)).sum())


def surface_loss_grad(ps: ParticleSystem, grid: SdfGrid):
    """Loss and its gradient; the |.| kink at D=0 uses subgradient 0."""
    d, g = query_distance_and_gradient(grid, ps.points)
    grad = np.sign(d)[:, None] * g
    return float(np.abs(d).sum()), grad


def _deviations(batch_vectors, mean: CohortMean | None) -> np.ndarray:
    if mean is None:
        raise MeanUnavailable("cohort mean not available before the second epoch")
    g = np.asarray(batch_vectors, dtype=np.float64)
    if g.ndim != 2:
        raise ValueError("batch must be (K, 3J)")
    if g.shape[0] < 2:
        raise ValueError("cohort statistics need at least 2 shapes")
    mu = np.asarray(mean.mu, dtype=np.float64)
    if mu.shape != (g.shape[1],):
        raise ValueError("mean length does not match batch vectors")
    return g - mu


def correspondence_loss(batch_vectors, mean: CohortMean) -> float:
    """Frobenius norm of the unnormalized scatter of deviations from the mean.

    Computed through the K x K Gram matrix H = G G^T, using
    ||G^T G||_F = ||G G^T||_F, so the 3J x 3J scatter is never formed.
    """
    g = _deviations(batch_vectors, mean)
    h = g @ g.T
    return float(np.linalg.norm(h, "fro"))


def correspondence_loss_grad(batch_vectors, mean: CohortMean):
    """Loss and gradient (K, 3J); gradient is (2/L) H G, 0 at L = 0."""
    g = _deviations(batch_vectors, mean)
    h = g @ g.T
    loss = float(np.linalg.norm(h, "fro"))
    if loss == 0.0:
        return 0.0, np.zeros_like(g)
    return loss, (2.0 / loss) * (h @ g)


def _gram_eigs(g: np.ndarray, scale: float):
    h = (g @ g.T) / scale
    evals, evecs = np.linalg.eigh(h)
    return np.clip(evals, 0.0, None), evecs, h


def eigenshape_loss(batch_vectors, mean: CohortMean, eps_cov: float) -> float:
    """Gaussian differential entropy of the batch: 1/2 log det(C + eps I).

    C is the (1 / (3 J K))-scaled scatter; its nonzero spectrum comes from
    the K x K Gram matrix and the 3J - K structurally-zero eigenvalues each
    contribute 1/2 log(eps).
    """
    g = _deviations(batch_vectors, mean)
    k, n = g.shape
    if eps_cov <= 0 and k - 1 < n:
        raise NonPositiveFloor("eps_cov must be positive for rank-deficient batches")
    evals, _, _ = _gram_eigs(g, float(n * k))
    return float(0.5 * (np.log(evals + eps_cov).sum() + (n - k) * np.log(eps_cov)))


def eigenshape_loss_grad(batch_vectors, mean: CohortMean, eps_cov: float):
    """Loss and gradient (K, 3J) of the entropy term.

    d/dG [ 1/2 log det(C + eps I) ] = (1 / (3JK)) U diag(1/(l + eps)) U^T G
    with H = 3JK C = U diag(3JK l) U^T.
    """
    g = _deviations(batch_vectors, mean)
    k, n = g.shape
    if eps_cov <= 0 and k - 1 < n:
        raise NonPositiveFloor("eps_cov must be positive for rank-deficient batches")
    scale = float(n * k)
    evals, evecs, _ = _gram_eigs(g, scale)
    loss = float(0.5 * (np.log(evals + eps_cov).sum() + (n - k) * np.log(eps_cov)))
    inner = evecs @ np.diag(1.0 / (evals + eps_cov)) @ evecs.T
    grad = (inner @ g) / scale
    return loss, grad


def _softmin_rows(k_mat: np.ndarray) -> np.ndarray:
    """Row-wise softmin exp(-k) / sum exp(-k), stable under row shifts."""
    shifted = -(k_mat - k_mat.min(axis=1, keepdims=True))
    e = np.exp(shifted)
    return e / e.sum(axis=1, keepdims=True)


def sampling_loss(ps: ParticleSystem, band: NarrowBand, errors: np.ndarray, c: float) -> float:
    """mean( softmin(K) * K * (c E + 1) ) over the R x J distance matrix."""
    k_mat = cdist(band.points, ps.points)
    s_mat = _softmin_rows(k_mat)
    u = c * np.asarray(errors, dtype=np.float64)[:, None] + 1.0
    return float((s_mat * k_mat * u).mean())


def sampling_loss_grad(ps: ParticleSystem, band: NarrowBand, grid: SdfGrid,
                       surface: RbfSurface, c: float):
    """Narrow-band loss and its exact gradient w.r.t. particle positions.

    Three coupled paths: the distance matrix, the softmin weights, and the
    reconstruction error E, whose dependence on the solved interpolation
    weights is handled by the adjoint of the linear system.
    """
    b = band.points
    p = ps.points
    r_n, j_n = len(b), len(p)
    sites = surface.dipoles.sites
    w = surface.weights

    phi_b = kernel_radial(surface.kernel, cdist(b, sites))
    f_b = phi_b @ w + b @ surface.linear + surface.constant
    d_b = query_distance(grid, b)
    resid = f_b - d_b
    err = resid ** 2

    k_mat = cdist(b, p)
    s_mat = _softmin_rows(k_mat)
    u = c * err[:, None] + 1.0
    a_mat = k_mat * u
    t_row = (s_mat * a_mat).sum(axis=1)
    loss = float(t_row.mean() / j_n)

    inv_rj = 1.0 / (r_n * j_n)

    # path 1+2: distance matrix directly and through the softmin
    dl_dk = inv_rj * s_mat * (u - (a_mat - t_row[:, None]))
    safe_k = np.where(k_mat > 0, k_mat, 1.0)
    coef = np.where(k_mat > 0, dl_dk / safe_k, 0.0)  # (R, J)
    grad = coef.sum(axis=0)[:, None] * p - coef.T @ b

    # path 3: reconstruction error through f(b_r)
    dl_de = inv_rj * c * (s_mat * k_mat).sum(axis=1)     # (R,)
    rho = dl_de * 2.0 * resid                            # (R,)
    if np.any(rho != 0.0):
        q = np.concatenate([phi_b.T @ rho, [rho.sum()], b.T @ rho])
        lam = surface.solve_adjoint(q)
        lam_w = lam[:len(sites)]
        lam_lin = lam[len(sites) + 1:]

        # direct dependence of f(b) on the site positions
        r_bs = cdist(b, sites)
        g_bs = kernel_radial_slope(surface.kernel, r_bs)     # (R, 3J)
        col = (rho[:, None] * g_bs).sum(axis=0)              # (3J,)
        site_grad = w[:, None] * (col[:, None] * sites - g_bs.T @ (rho[:, None] * b))

        # dependence through the solve: -lam^T dA u
        r_ss = cdist(sites, sites)
        g_ss = kernel_radial_slope(surface.kernel, r_ss)
        np.fill_diagonal(g_ss, 0.0)
        m1 = g_ss * (np.outer(lam_w, w) + np.outer(w, lam_w))  # (3J, 3J)
        site_grad -= m1.sum(axis=1)[:, None] * sites - m1 @ sites
        site_grad -= np.outer(lam_w, surface.linear) + np.outer(w, lam_lin)

        # sites (3j, 3j+1, 3j+2) all translate with particle j
        grad += site_grad.reshape(j_n, 3, 3).sum(axis=1)

    return loss, grad


def total_loss(shapes, grids, bands, surfaces, mean: CohortMean | None,
               config: LossConfig) -> LossBreakdown:
    """Weighted objective over a minibatch, with per-shape gradients.

    The gamma / zeta cohort terms are skipped when `mean` is None (first
    epoch) or when the batch holds a single shape.
    """
    k = len(shapes)
    if not (len(grids) == len(bands) == len(surfaces) == k):
        raise ValueError("shapes, grids, bands and surfaces must align")

    surf_sum = 0.0
    samp_sum = 0.0
    grads = []
    for ps, grid, band, surface in zip(shapes, grids, bands, surfaces):
        g = np.zeros((ps.count, 3))
        if config.alpha > 0:
            ls, gs = surface_loss_grad(ps, grid)
            surf_sum += ls
            g += config.alpha * gs
        else:
            surf_sum += surface_loss(ps, grid)
        if config.beta > 0:
            lb, gb = sampling_loss_grad(ps, band, grid, surface, config.c)
            samp_sum += lb
            g += config.beta * gb
        else:
            samp_sum += sampling_loss(ps, band, band_error(surface, band, grid), config.c)
        grads.append(g)

    eig = 0.0
    corr = 0.0
    cohort_active = mean is not None and k >= 2 and (config.gamma > 0 or config.zeta > 0)
    if cohort_active:
        vecs = np.stack([ps.flattened() for ps in shapes])
        if config.gamma > 0:
            eig, ge = eigenshape_loss_grad(vecs, mean, config.eps_cov)
            for i in range(k):
                grads[i] += config.gamma * ge[i].reshape(-1, 3)
        if config.zeta > 0:
            corr, gc = correspondence_loss_grad(vecs, mean)
            for i in range(k):
                grads[i] += config.zeta * gc[i].reshape(-1, 3)

    total = (config.alpha * surf_sum + config.beta * samp_sum
             + config.gamma * eig + config.zeta * corr)
    return LossBreakdown(
        surface=surf_sum,
        sampling=samp_sum,
        eigenshape=eig,
        correspondence=corr,
        total=float(total),
        gradients=grads,
    )


def gradients(shapes, grids, bands, surfaces, mean, config) -> list:
    """Per-shape (J, 3) gradients of the total objective."""
    return total_loss(shapes, grids, bands, surfaces, mean, config).gradients
