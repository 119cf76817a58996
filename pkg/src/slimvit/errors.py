"""Exception hierarchy shared across the toolkit.

The CLI maps these onto exit codes (see cli.EXIT_CODES): configuration
mistakes exit 1, data/format problems exit 2, an unreachable memory budget
exits 3, and anything else from this hierarchy exits 4.
"""


class SlimVitError(Exception):
    """Base class for all toolkit errors."""


class DimensionError(SlimVitError):
    """Tensor shapes or axes do not line up."""


class ConfigError(SlimVitError):
    """Invalid model/pipeline configuration or option value."""


class InputError(SlimVitError):
    """Invalid input data (empty calibration set, non-finite weights, ...)."""


class DataFormatError(SlimVitError):
    """Malformed file contents (checkpoint, CIFAR-10 binary, ...)."""


class UnsupportedCastError(SlimVitError):
    """Cast target not handled by tensor.cast (INT8 lives in the quantizer)."""


class PrecisionStateError(SlimVitError):
    """Operation incompatible with the model's current dtype state."""


class UnknownLayerError(SlimVitError):
    """Layer name not present in the model or the collected statistics."""


class BudgetInfeasibleError(SlimVitError):
    """Memory budget cannot be met even with all layers at the channel floor.

    Carries the best peak estimate (bytes) that pruning could reach.
    """

    def __init__(self, message, best_peak_bytes):
        super().__init__(message)
        self.best_peak_bytes = best_peak_bytes
