from .gradcheck import GradCheckReport, gradient_check, relative_error
from .optim import AdamState, adam_step
from .tape import (
    PRIMITIVES,
    Node,
    Tape,
    add,
    apply_primitive,
    concat,
    gather_rows,
    matmul,
    mse,
    mul,
    reduce_mean,
    reshape,
    sigmoid,
    sigmoid_array,
    softmax_masked,
    sub,
    tanh,
    transpose,
)

__all__ = [
    "PRIMITIVES",
    "AdamState",
    "GradCheckReport",
    "Node",
    "Tape",
    "adam_step",
    "add",
    "apply_primitive",
    "concat",
    "gather_rows",
    "gradient_check",
    "matmul",
    "mse",
    "mul",
    "reduce_mean",
    "relative_error",
    "reshape",
    "sigmoid",
    "sigmoid_array",
    "softmax_masked",
    "sub",
    "tanh",
    "transpose",
]
