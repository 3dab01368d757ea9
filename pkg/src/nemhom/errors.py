"""Exception types shared across the package."""


class ValidationError(ValueError):
    """Invalid parameters or malformed input values."""


class EmptyLatticeError(ValidationError):
    """The domain is too small to host any lattice point at the given spacing."""


class GridResolutionError(ValidationError):
    """The voxel grid is too coarse to resolve the scaffold geometry."""


class DivergedError(RuntimeError):
    """A minimisation produced a non-finite energy or an unusable step."""

    def __init__(self, message, diagnostics=None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}
