"""Optimize a correspondence model over a small synthetic cohort.

Generates eight ellipsoid signed-distance grids that vary along x only,
runs the full SGD loop (surface, sampling, eigenshape, and correspondence
objectives), and prints the per-epoch loss history plus how tightly the
final particles adhere to each surface.
"""

import numpy as np

from rbfpdm import (LossConfig, OptimizerConfig, make_ellipsoid_cohort,
                    optimize, query_distance)
from rbfpdm.io import save_particles


def main():
    grids = make_ellipsoid_cohort(count=8, axis_range=(1.0, 2.0),
                                  fixed_axes=(0.5, 0.5), dims=(48, 32, 32))
    band = 2.0 * float(np.mean([g.spacing.mean() for g in grids]))

    loss = LossConfig(alpha=0.01, beta=1.0, gamma=0.01, zeta=0.01, c=1.0,
                      s=band, batch_size=4, band_samples=200)
    config = OptimizerConfig(learning_rate=1.0, epochs=25, seed=7,
                             pre_opt_epochs=15, loss=loss)

    state = optimize(grids, config, particle_count=32)

    print("epoch   total   surface  sampling  eigen   corresp")
    for i, row in enumerate(state.history):
        print(f"{i + 1:5d}  {row['total']:7.4f}  {row['surface']:7.4f} "
              f"{row['sampling']:8.5f}  {row['eigenshape']:6.3f} "
              f"{row['correspondence']:8.5f}")

    worst = max(np.abs(query_distance(g, ps.points)).max()
                for g, ps in zip(grids, state.systems))
    print(f"\nworst particle-to-surface distance: {worst:.4f} "
          f"(voxel spacing ~{grids[0].spacing.max():.4f})")

    for i, ps in enumerate(state.systems):
        save_particles(ps, f"particles_{i:03d}.txt")
    print(f"wrote {len(state.systems)} particle files")


if __name__ == "__main__":
    main()
