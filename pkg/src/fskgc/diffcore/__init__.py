"""Minimal differentiable-computation substrate."""
from .checkpoint import CorruptCheckpoint, read_checkpoint, save_checkpoint
from .gradcheck import GradCheckReport, NonFiniteLoss, finite_difference_check
from .params import (
    AdamState,
    ParameterSet,
    SGDState,
    ShapeMismatch,
    adam_step,
    mean_of,
    sgd_step,
    value_and_grad,
    xavier_init,
)
from .tensor import (
    Tensor,
    as_tensor,
    concat,
    conv1d,
    cosine_rows,
    embedding,
    instance_norm,
    max_pool,
    no_grad,
    stack,
)

__all__ = [
    "AdamState", "CorruptCheckpoint", "GradCheckReport", "NonFiniteLoss", "ParameterSet",
    "SGDState", "ShapeMismatch", "Tensor", "adam_step", "as_tensor", "concat", "conv1d",
    "cosine_rows", "embedding", "finite_difference_check", "instance_norm", "max_pool",
    "mean_of", "no_grad", "read_checkpoint", "save_checkpoint", "sgd_step", "stack",
    "value_and_grad", "xavier_init",
]
