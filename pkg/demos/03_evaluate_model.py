"""Evaluate a point distribution model with the standard metric triad.

Builds a one-parameter family of particle sets (so the ideal model is
rank 1), fits a PCA shape model, and reports compactness per mode count,
specificity, and leave-one-out generalization.
"""

import numpy as np

from rbfpdm import (compactness, generalization, pca_fit, specificity)


def one_parameter_cohort(count=16, particles=40, seed=3):
    """Shapes sharing a template, scaled along x by a single parameter."""
    rng = np.random.default_rng(seed)
    template = rng.normal(size=(particles, 3))
    rows = []
    for t in np.linspace(1.0, 2.0, count):
        shape = template.copy()
        shape[:, 0] *= t
        rows.append(shape.ravel())
    return np.stack(rows)


def main():
    vectors = one_parameter_cohort()
    model = pca_fit(vectors)

    print("mode  eigenvalue    compactness")
    for m in range(1, 6):
        print(f"{m:4d}  {model.eigenvalues[m - 1]:10.3e}   "
              f"{compactness(model, m):.6f}")

    spec = specificity(model, vectors, mode_count=1, n_samples=500, seed=0)
    gen = generalization(vectors, mode_count=1)
    print(f"\nspecificity (1 mode, 500 samples): {spec:.4f}")
    print(f"generalization (leave-one-out, 1 mode): {gen:.2e}")
    print("\nA single mode captures the family: compactness hits 1.0 at "
          "mode 1 and the leave-one-out error is near zero.")


if __name__ == "__main__":
    main()
