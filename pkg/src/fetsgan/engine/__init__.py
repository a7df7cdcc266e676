"""Minimal reverse-mode autodiff engine: tensors, GRU recurrence, Adam, spectral norm."""
from .optim import Adam, LrSchedule, clip_grad_norm, lr_at
from .recurrent import available_backends, get_backend, gru_recurrence, gru_step, set_backend
from .spectral import SpectralNormState, power_iterate, spectral_normalize
from .tensor import (
    Tensor,
    add,
    backward,
    bce_with_logits,
    concat,
    default_dtype,
    get_default_dtype,
    getitem,
    is_grad_enabled,
    leaky_relu,
    matmul,
    mean,
    mul,
    no_grad,
    repeat_time,
    reshape,
    set_default_dtype,
    sigmoid,
    square,
    sub,
    sumsq,
    tanh,
    tsum,
)

__all__ = [
    "Adam", "LrSchedule", "SpectralNormState", "Tensor", "add", "available_backends",
    "backward", "bce_with_logits", "clip_grad_norm", "concat", "default_dtype",
    "get_backend", "get_default_dtype", "getitem", "gru_recurrence", "gru_step",
    "is_grad_enabled", "leaky_relu", "lr_at", "matmul", "mean", "mul", "no_grad",
    "power_iterate", "repeat_time", "reshape", "set_backend", "set_default_dtype", "sigmoid",
    "spectral_normalize", "square", "sub", "sumsq", "tanh", "tsum",
]
