"""slimvit: compress and run Vision Transformers without retraining.

Pipeline stages: activation profiling -> memory-aware structured pruning ->
selective FP16 conversion -> activation-aware INT8 quantization, plus an
evaluation harness reporting accuracy, latency, analytic peak memory and
FLOPs for each variant.
"""

from .errors import (
    BudgetInfeasibleError,
    ConfigError,
    DataFormatError,
    DimensionError,
    InputError,
    PrecisionStateError,
    SlimVitError,
    UnknownLayerError,
    UnsupportedCastError,
)
from .kernels import available_backends, current_backend, use_backend
from .tensor import Dtype, Tensor, cast, gelu, layernorm, matmul, softmax, tensor
from .model import (
    Linear,
    ModelConfig,
    ObserverSet,
    VitModel,
    config_param_count,
    count_flops,
    count_params,
    forward,
    init_model,
    preset_config,
)

__version__ = "0.1.0"
