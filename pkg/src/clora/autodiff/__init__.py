"""Minimal reverse-mode autodiff over float64 numpy arrays."""

from . import functional
from .functional import (
    concat,
    exp,
    gelu,
    layer_norm,
    log,
    log_softmax,
    logsumexp,
    matmul,
    softmax,
    take,
    upsample_nearest,
)
from .gradcheck import grad_check, numerical_grad
from .optim import SGD, SgdConfig, sgd_step
from .tensor import Node, Tensor, as_tensor, backward, is_grad_enabled, no_grad

__all__ = [
    "Node",
    "SGD",
    "SgdConfig",
    "Tensor",
    "as_tensor",
    "backward",
    "concat",
    "exp",
    "functional",
    "gelu",
    "grad_check",
    "is_grad_enabled",
    "layer_norm",
    "log",
    "log_softmax",
    "logsumexp",
    "matmul",
    "no_grad",
    "numerical_grad",
    "sgd_step",
    "softmax",
    "take",
    "upsample_nearest",
]
