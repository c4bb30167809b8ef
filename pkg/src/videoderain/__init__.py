"""Video deraining by robust low-rank tensor recovery.

A static-camera rainy video ``O`` (height x width x frames) is split as
``O o tau = B + R + N``: a background ``B`` shared by all frames, a sparse
rain layer ``R``, per-frame affine alignment ``tau`` and a small residual.
"""

from .errors import (
    ConfigError,
    DTypeMismatchError,
    FormatError,
    FrameReadError,
    MagicMismatchError,
    NumericalError,
    TruncatedPayloadError,
    VersionMismatchError,
)
from .solver import DecompositionResult, SolverConfig, derain
from .synth import SynthConfig, SynthTruth, synthesize

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DTypeMismatchError",
    "FormatError",
    "FrameReadError",
    "MagicMismatchError",
    "NumericalError",
    "TruncatedPayloadError",
    "VersionMismatchError",
    "DecompositionResult",
    "SolverConfig",
    "derain",
    "SynthConfig",
    "SynthTruth",
    "synthesize",
]
