"""Exception hierarchy. The CLI maps these onto its exit codes."""


class DataError(ValueError):
    """Malformed or physically invalid input data."""


class ScalerMismatchError(DataError):
    """A scaler does not match the features a model was trained on."""


class NumericalError(ArithmeticError):
    """A numerical procedure failed (divergence, rank deficiency, ...)."""


class TrainingDivergence(NumericalError):
    def __init__(self, message, epoch=None):
        super().__init__(message)
        self.epoch = epoch


class FitError(NumericalError):
    """A per-curve polynomial fit was rejected."""
