from .gradcheck import GradEntry, GradReport, NonDeterministicLoss, grad_check, relative_error
from .params import ModelParams, ParamBuilder, xavier_uniform
from .tensor import (
    MASK_NEG,
    GradTape,
    NumericalError,
    Tensor,
    active_tape,
    add,
    as_tensor,
    bce_with_logits,
    concat,
    div,
    dropout,
    exp,
    gelu,
    getitem,
    log,
    masked_softmax,
    matmul,
    mean,
    mul,
    neg,
    normalize,
    power,
    relu,
    reshape,
    sigmoid,
    sqrt,
    stack,
    sub,
    swapaxes,
    tanh,
    transpose,
    tsum,
)
