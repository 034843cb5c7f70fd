"""Exception hierarchy.

Every failure the library raises deliberately derives from SlabflowError so
callers (and the command line driver) can distinguish our diagnostics from
genuine bugs.  The driver maps ConfigError to exit code 1, runtime failures
to 2, and verification/assertion failures to 3.
"""


class SlabflowError(Exception):
    """Base class for all deliberate failures."""


class GridError(SlabflowError):
    """Invalid grid parameters (extents, counts, parity)."""


class FieldError(SlabflowError):
    """Invalid field data: wrong shape, wrong grid, or non-finite samples."""


class ConfigError(SlabflowError):
    """Bad configuration: unknown keys, unparsable values, unsupported orders."""


class DegenerateSurfaceError(SlabflowError):
    """The initial surface touches or crosses the bottom (eta0 + b <= 0)."""


class EpsilonUnderflowError(SlabflowError):
    """Flattening-parameter bisection fell below the 1e-8 floor."""


class DiffeomorphismError(SlabflowError):
    """The flattening Jacobian dropped below its floor somewhere.

    Carries the offending grid location and the observed value.
    """

    def __init__(self, message, location=None, value=None):
        super().__init__(message)
        self.location = location
        self.value = value


class ContractError(SlabflowError):
    """A caller violated an explicit data contract (e.g. missing time rate)."""


class CompatibilityError(SlabflowError):
    """Initial data failed the order-0 compatibility residuals."""


class StepSizeError(SlabflowError):
    """Advective CFL bound violated for the requested transport step."""


class SolverDegeneracyError(SlabflowError):
    """A per-mode boundary-value system was singular.  Carries the mode."""

    def __init__(self, message, mode=None):
        super().__init__(message)
        self.mode = mode


class SolverDivergenceError(SlabflowError):
    """A fixed-point solver iterate grew instead of contracting."""


class PicardError(SlabflowError):
    """The per-step Picard iteration failed to converge."""


class CheckpointError(SlabflowError):
    """Checkpoint file rejected: bad magic, version, or truncation."""
