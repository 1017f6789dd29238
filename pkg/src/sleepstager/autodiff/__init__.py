"""Minimal reverse-mode autodiff over dense float64 tensors."""

from .gradcheck import grad_check
from .ops import (
    BatchNormState,
    activation,
    add,
    add_rowvec,
    batchnorm1d,
    channel_scale,
    concat,
    conv1d,
    global_avg_pool,
    log_softmax,
    matmul,
    max_pool1d,
    mul,
    pool1d,
    relu,
    reshape,
    scale,
    select_row,
    sigmoid,
    sum_all,
    take_per_row,
    take_rows,
    tanh,
    transpose,
)
from .tensor import Tape, Tensor, active_tape, backward, tensor_init, zero_grads

__all__ = [
    "BatchNormState",
    "Tape",
    "Tensor",
    "activation",
    "active_tape",
    "add",
    "add_rowvec",
    "backward",
    "batchnorm1d",
    "channel_scale",
    "concat",
    "conv1d",
    "global_avg_pool",
    "grad_check",
    "log_softmax",
    "matmul",
    "max_pool1d",
    "mul",
    "pool1d",
    "relu",
    "reshape",
    "scale",
    "select_row",
    "sigmoid",
    "sum_all",
    "take_per_row",
    "take_rows",
    "tanh",
    "tensor_init",
    "transpose",
    "zero_grads",
]
