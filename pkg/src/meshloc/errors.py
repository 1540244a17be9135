"""Exception types shared across the package."""


class MeshlocError(Exception):
    """Base class for all package-specific failures."""


class EmptyMeshError(MeshlocError):
    """A mesh with no usable faces was handed to a surface query."""


class NotPositiveDefiniteError(MeshlocError):
    """A covariance stayed non positive definite after jitter escalation."""


class SingularInnovationError(MeshlocError):
    """Innovation covariance could not be inverted, even after conditioning."""


class InvalidConfigError(MeshlocError):
    """Filter configuration violates its documented constraints."""


class InvalidFaceSubsetError(MeshlocError):
    """A scenario face subset references faces outside the mesh."""
