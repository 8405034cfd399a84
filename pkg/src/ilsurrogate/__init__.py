"""Positivity-respecting surrogate models for transmission-line insertion loss."""

from ilsurrogate.errors import DataError, FitError, NumericalError, ScalerMismatchError, TrainingDivergence

__version__ = "0.1.0"

__all__ = [
    "DataError",
    "FitError",
    "NumericalError",
    "ScalerMismatchError",
    "TrainingDivergence",
]
