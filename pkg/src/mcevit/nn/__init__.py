from .optim import AdamState, adam_step, zero_grad
from .tensor import (
    ShapeError,
    Tensor,
    add,
    avg_pool_1d,
    backward,
    concat,
    crossentropy,
    default_dtype,
    div,
    exp,
    gelu,
    get_default_dtype,
    layer_norm,
    linear,
    log,
    matmul,
    mean,
    mul,
    no_grad,
    relu,
    reshape,
    set_default_dtype,
    softmax,
    sub,
    sum_,
    transpose,
)

__all__ = [
    "AdamState",
    "ShapeError",
    "Tensor",
    "adam_step",
    "add",
    "avg_pool_1d",
    "backward",
    "concat",
    "crossentropy",
    "default_dtype",
    "div",
    "exp",
    "gelu",
    "get_default_dtype",
    "layer_norm",
    "linear",
    "log",
    "matmul",
    "mean",
    "mul",
    "no_grad",
    "relu",
    "reshape",
    "set_default_dtype",
    "softmax",
    "sub",
    "sum_",
    "transpose",
    "zero_grad",
]
