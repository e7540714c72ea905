"""Correspondence-based statistical shape models from signed-distance grids.

The pipeline: represent each cohort shape as a signed-distance voxel grid,
fit an implicit surface per shape from oriented control points (polyharmonic
kernels plus a linear term, oriented by off-surface dipoles), and optimize
the control-point positions with SGD under four objectives: surface
adherence, narrow-band sampling, correspondence, and eigenshape compactness.
The finished point distribution model is evaluated with the standard
compactness / specificity / generalization triad plus two-way mesh distance.
"""

from .errors import (DegenerateCohort, DegenerateGradient, DuplicateSite,
                     EmptyBand, EmptyIsosurface, EmptyMesh, FormatError,
                     InvalidAxis, InvalidBand, MeanUnavailable,
                     NonPositiveFloor, RbfPdmError, SingularSystem,
                     ZeroVariance)
from .grid import (NarrowBand, SdfGrid, ellipsoid_sdf, load_grid,
                   make_ellipsoid_cohort, make_ellipsoid_grid, query_distance,
                   query_distance_and_gradient, query_normal,
                   sample_narrow_band, save_grid)
from .losses import (CohortMean, LossBreakdown, LossConfig,
                     correspondence_loss, eigenshape_loss, gradients,
                     sampling_loss, surface_loss, total_loss)
from .mesh import TriangleMesh, load_obj, mesh_from_grid, save_obj
from .metrics import (ShapeModel, compactness, generalization, pca_fit,
                      specificity, surface_to_surface_distance)
from .optimizer import (CohortState, OptimizerConfig, initialize_particles,
                        optimize, pre_optimize, run_epoch)
from .surface import (DipoleSet, ParticleSystem, RbfSurface, band_error,
                      build_dipoles, evaluate, extract_mesh, fit,
                      fit_particles, kernel_eval)

__version__ = "0.1.0"
