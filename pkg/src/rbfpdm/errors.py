"""Exception hierarchy shared across the package."""


class RbfPdmError(Exception):
    """Base class for all package errors."""


class DegenerateGradient(RbfPdmError):
    """Distance-field gradient too small to define a normal direction."""


class EmptyBand(RbfPdmError):
    """No voxel lies within the requested narrow band."""


class InvalidAxis(RbfPdmError):
    """Ellipsoid semi-axis too small for the voxel resolution."""


class InvalidBand(RbfPdmError):
    """Non-positive dipole offset / band half-width."""


class DuplicateSite(RbfPdmError):
    """Two interpolation sites coincide within tolerance."""


class SingularSystem(RbfPdmError):
    """RBF interpolation system could not be factorized."""


class MeanUnavailable(RbfPdmError):
    """Cohort mean not yet computed (first epoch)."""


class NonPositiveFloor(RbfPdmError):
    """Covariance eigenvalue floor must be positive for rank-deficient batches."""


class EmptyIsosurface(RbfPdmError):
    """No zero crossing found on the sampling lattice."""


class EmptyMesh(RbfPdmError):
    """Mesh has no vertices or faces."""


class DegenerateCohort(RbfPdmError):
    """Too few shapes for the requested statistic."""


class ZeroVariance(RbfPdmError):
    """All model eigenvalues are zero."""


class FormatError(RbfPdmError):
    """Malformed grid, particle, or config file."""


class IoError(RbfPdmError):
    """Underlying I/O failure."""
