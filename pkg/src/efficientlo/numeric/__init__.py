"""Dense tensors with reverse-mode differentiation, Adam, and checkpoints."""
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, rel_error
from .optim import Adam, LRSchedule
from .tensor import (
    Tape,
    Tensor,
    abs_,
    add,
    backward,
    broadcast_to,
    concat,
    div,
    exp,
    gather,
    getitem,
    linear,
    matmul,
    max_reduce,
    mul,
    neg,
    norm2,
    quat_mul,
    quat_to_rotmat,
    relu,
    reshape,
    softmax,
    sqrt,
    sub,
    sum_,
)

__all__ = [
    "Adam", "LRSchedule", "Tape", "Tensor", "abs_", "add", "backward", "broadcast_to",
    "concat", "div", "exp", "gather", "getitem", "grad_check", "linear", "load_checkpoint",
    "matmul", "max_reduce", "mul", "neg", "norm2", "quat_mul", "quat_to_rotmat", "rel_error",
    "relu", "reshape", "save_checkpoint", "softmax", "sqrt", "sub", "sum_",
]
