"""End-to-end model construction: init, pre-optimization, epoch loop.

Protocol per epoch: shuffle shapes, then for each minibatch resample the
narrow band, rebuild dipoles and refit the implicit surface per shape,
evaluate the total objective, and take a plain SGD step on the particle
positions (displacement capped at two voxel spacings, clamped to the grid
box, normals recomputed from the field gradient). The cohort mean used by
the correspondence / eigenshape terms is refreshed once per epoch, so those
terms first act in epoch 2.
"""

from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import DegenerateGradient, SingularSystem
from .grid import SdfGrid, query_distance, query_normal, sample_narrow_band
from .losses import CohortMean, LossBreakdown, LossConfig, total_loss
from .surface import ParticleSystem, fit_particles

_RIDGE_RETRY = 1e-8
_PROJECTION_STEPS = 5


@dataclass
class OptimizerConfig:
    learning_rate: float = 1.0
    epochs: int = 100
    seed: int = 0
    pre_opt_epochs: int = 0
    kernel: str = "biharmonic"
    regularization: float = 0.0
    loss: LossConfig = field(default_factory=LossConfig)
    checkpoint_every: int = 0
    checkpoint_dir: str | None = None
    threads: int = 1

    def __post_init__(self):
        if self.learning_rate <= 0:
            raise ValueError("learning_rate must be positive")
        if self.epochs < 0 or self.pre_opt_epochs < 0:
            raise ValueError("epoch counts must be non-negative")


@dataclass
class CohortState:
    systems: list              # ParticleSystem per shape
    mean: CohortMean | None
    epoch: int
    history: list = field(default_factory=list)  # per-epoch dicts

    @property
    def particle_count(self) -> int:
        return self.systems[0].count

    def particle_matrix(self) -> np.ndarray:
        """(I, 3J) stack of flattened particle vectors."""
        return np.stack([ps.flattened() for ps in self.systems])


def worker_count(config: OptimizerConfig) -> int:
    env = os.environ.get("RBFPDM_THREADS")
    cap = int(env) if env else config.threads
    return max(1, cap)


def initialize_particles(grid: SdfGrid, count: int, seed: int,
                         band_width: float | None = None) -> ParticleSystem:
    """Random narrow-band points projected onto the zero level set.

    Projection steps x <- x - D(x) grad D(x) (up to 5) pull each sample onto
    the surface; normals come from the field gradient at the final position.
    """
    if count < 4:
        raise ValueError("need at least 4 particles")
    if band_width is None:
        band_width = 2.0 * float(grid.spacing.mean())
    band = sample_narrow_band(grid, band_width, count, seed)
    pts = band.points.copy()
    for _ in range(_PROJECTION_STEPS):
        d = query_distance(grid, pts)
        n = query_normal(grid, pts)
        pts -= d[:, None] * n
        lo, hi = grid.box
        pts = np.clip(pts, lo, hi)
    # nudge accidental duplicates apart; rare with continuous jitter
    rng = np.random.default_rng(seed + 1)
    for _ in range(10):
        from scipy.spatial.distance import pdist, squareform
        dmat = squareform(pdist(pts))
        np.fill_diagonal(dmat, np.inf)
        bad = np.flatnonzero(dmat.min(axis=1) < 1e-8)
        if bad.size == 0:
            break
        pts[bad] += rng.normal(scale=grid.spacing.mean() * 0.1, size=(bad.size, 3))
    normals = query_normal(grid, pts)
    return ParticleSystem(points=pts, normals=normals)


def _fit_with_retry(ps: ParticleSystem, config: OptimizerConfig, s: float):
    try:
        return fit_particles(ps, s, config.kernel, config.regularization)
    except SingularSystem:
        return fit_particles(ps, s, config.kernel, max(config.regularization, _RIDGE_RETRY))


def _apply_step(ps: ParticleSystem, grad: np.ndarray, grid: SdfGrid,
                config: OptimizerConfig) -> ParticleSystem:
    step = -config.learning_rate * grad
    cap = 2.0 * float(grid.spacing.max())
    norms = np.linalg.norm(step, axis=1)
    over = norms > cap
    if np.any(over):
        step[over] *= (cap / norms[over])[:, None]
    pts = ps.points + step
    lo, hi = grid.box
    pts = np.clip(pts, lo, hi)
    normals = ps.normals.copy()
    for j in range(len(pts)):
        try:
            normals[j] = query_normal(grid, pts[j])
        except DegenerateGradient:
            pass  # keep the previous normal
    return ParticleSystem(points=pts, normals=normals, shape_id=ps.shape_id)


def _band_seed(master: int, epoch: int, shape_idx: int) -> int:
    ss = np.random.SeedSequence(entropy=master, spawn_key=(epoch, shape_idx))
    return int(ss.generate_state(1)[0])


def run_epoch(state: CohortState, grids: list, config: OptimizerConfig,
              cohort_terms: bool = True) -> CohortState:
    """One pass over the cohort; mutates and returns `state`."""
    cfg = config.loss
    n_shapes = len(state.systems)
    rng = np.random.default_rng(np.random.SeedSequence(
        entropy=config.seed, spawn_key=(state.epoch, 0xE70C)))
    order = rng.permutation(n_shapes)
    k = min(cfg.batch_size, n_shapes)
    epoch_terms = {"surface": 0.0, "sampling": 0.0, "eigenshape": 0.0,
                   "correspondence": 0.0, "total": 0.0}

    workers = worker_count(config)
    for start in range(0, n_shapes, k):
        batch_idx = order[start:start + k]
        shapes = [state.systems[i] for i in batch_idx]
        batch_grids = [grids[i] for i in batch_idx]
        bands = [sample_narrow_band(batch_grids[b], cfg.s, cfg.band_samples,
                                    _band_seed(config.seed, state.epoch, int(i)))
                 for b, i in enumerate(batch_idx)]

        def fit_one(ps):
            return _fit_with_retry(ps, config, cfg.s)

        if workers > 1 and len(shapes) > 1:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                surfaces = list(pool.map(fit_one, shapes))
        else:
            surfaces = [fit_one(ps) for ps in shapes]

        mean = state.mean if (cohort_terms and len(batch_idx) >= 2) else None
        breakdown = total_loss(shapes, batch_grids, bands, surfaces, mean, cfg)

        for b, i in enumerate(batch_idx):
            state.systems[i] = _apply_step(shapes[b], breakdown.gradients[b],
                                           batch_grids[b], config)
        for key in epoch_terms:
            epoch_terms[key] += getattr(breakdown, key)

    state.epoch += 1
    state.mean = CohortMean(mu=state.particle_matrix().mean(axis=0),
                            epoch_stamp=state.epoch)
    epoch_terms["epoch"] = state.epoch
    state.history.append(epoch_terms)
    return state


def pre_optimize(ps: ParticleSystem, grid: SdfGrid, config: OptimizerConfig) -> ParticleSystem:
    """Single-shape warm-up with the cohort terms disabled."""
    if config.pre_opt_epochs == 0:
        return ps
    pre_loss = replace(config.loss, gamma=0.0, zeta=0.0, batch_size=1)
    pre_cfg = replace(config, loss=pre_loss)
    state = CohortState(systems=[ps], mean=None, epoch=0)
    for _ in range(config.pre_opt_epochs):
        run_epoch(state, [grid], pre_cfg, cohort_terms=False)
    return state.systems[0]


def _template_shape(grids: list) -> int:
    """Index of the shape with the widest surface extent.

    Pre-optimizing on the largest member keeps the broadcast template from
    leaving parts of the bigger shapes uncovered: a template that encloses
    every other member is pulled inward by the surface term, whereas one
    grown on a small member never reaches the far regions of a larger one.
    """
    best, best_extent = 0, -1.0
    for i, grid in enumerate(grids):
        near = np.abs(np.asarray(grid.values)) <= grid.spacing.max()
        idx = np.argwhere(near)
        if idx.size == 0:
            continue
        span = (idx.max(axis=0) - idx.min(axis=0)) * grid.spacing
        extent = float(np.linalg.norm(span))
        if extent > best_extent:
            best, best_extent = i, extent
    return best


def optimize(grids: list, config: OptimizerConfig, particle_count: int = 64,
             initial_systems: list | None = None) -> CohortState:
    """Full pipeline over a cohort of signed-distance grids.

    When `initial_systems` is given, initialization and pre-optimization are
    skipped and the provided particle systems are used as the epoch-0 state
    (all must share the same particle count).
    """
    if not grids:
        raise ValueError("need at least one grid")
    if initial_systems is not None:
        if len(initial_systems) != len(grids):
            raise ValueError("one particle system per grid required")
        systems = [ParticleSystem(points=ps.points, normals=ps.normals, shape_id=i)
                   for i, ps in enumerate(initial_systems)]
    else:
        seed_idx = _template_shape(grids)
        seed_ps = initialize_particles(grids[seed_idx], particle_count,
                                       config.seed)
        seed_ps = pre_optimize(seed_ps, grids[seed_idx], config)
        systems = []
        for i, grid in enumerate(grids):
            normals = seed_ps.normals.copy()
            for j, p in enumerate(seed_ps.points):
                try:
                    normals[j] = query_normal(grid, p)
                except DegenerateGradient:
                    pass
            systems.append(ParticleSystem(points=seed_ps.points.copy(),
                                          normals=normals, shape_id=i))
    counts = {ps.count for ps in systems}
    if len(counts) != 1:
        raise ValueError("all shapes must share the same particle count")

    state = CohortState(systems=systems, mean=None, epoch=0)
    for _ in range(config.epochs):
        run_epoch(state, grids, config)
        if (config.checkpoint_every > 0 and config.checkpoint_dir
                and state.epoch % config.checkpoint_every == 0):
            from .io import save_checkpoint
            save_checkpoint(state, config.checkpoint_dir)
    return state
