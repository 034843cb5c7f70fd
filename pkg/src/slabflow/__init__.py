"""slabflow: viscous free-surface flow in a periodic slab, flattened coordinates.

The package provides the pieces of a small verification laboratory:

* grids and field containers (:mod:`slabflow.fields`),
* spectral/finite-difference calculus and norms (:mod:`slabflow.spectral`),
* the exponential harmonic-type extension of surface data (:mod:`slabflow.extension`),
* coefficient geometry of the flattening map (:mod:`slabflow.geometry`),
* elliptic solves in flat and transformed form (:mod:`slabflow.stokes`),
* surface transport (:mod:`slabflow.transport`),
* the coupled time stepper (:mod:`slabflow.evolution`),
* energy/dissipation bookkeeping (:mod:`slabflow.diagnostics`),
* config, reporting, and the command-line driver (:mod:`slabflow.cli` and friends).

Set ``SLABFLOW_THREADS`` to pin the BLAS/OpenMP pool size; it is forwarded
to the usual knobs here, before the numeric libraries load, and explicit
per-library settings in the environment still win.
"""

import os as _os

_threads = _os.environ.get("SLABFLOW_THREADS")
if _threads:
    for _key in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS",
                 "MKL_NUM_THREADS", "NUMEXPR_NUM_THREADS"):
        _os.environ.setdefault(_key, _threads)
del _os

from .errors import (
    CheckpointError,
    CompatibilityError,
    ConfigError,
    ContractError,
    DegenerateSurfaceError,
    DiffeomorphismError,
    EpsilonUnderflowError,
    FieldError,
    GridError,
    PicardError,
    SlabflowError,
    SolverDegeneracyError,
    SolverDivergenceError,
    StepSizeError,
)
from .fields import (
    HorizontalGrid,
    SurfaceField,
    VolumeField,
    VolumeGrid,
    constant_volume,
    random_surface_field,
    random_volume_field,
    zeros_surface,
    zeros_volume,
)

__version__ = "0.1.0"

__all__ = [
    "HorizontalGrid",
    "VolumeGrid",
    "SurfaceField",
    "VolumeField",
    "zeros_surface",
    "zeros_volume",
    "constant_volume",
    "random_surface_field",
    "random_volume_field",
    "SlabflowError",
    "GridError",
    "FieldError",
    "ConfigError",
    "DegenerateSurfaceError",
    "EpsilonUnderflowError",
    "DiffeomorphismError",
    "ContractError",
    "CompatibilityError",
    "StepSizeError",
    "SolverDegeneracyError",
    "SolverDivergenceError",
    "PicardError",
    "CheckpointError",
    "__version__",
]
