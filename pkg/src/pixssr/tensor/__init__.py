from .core import (
    ShapeError,
    TapeError,
    Tensor,
    absolute,
    add,
    as_tensor,
    broadcast_shape,
    broadcast_to,
    clamp,
    concat,
    div,
    elementwise,
    exp,
    gelu,
    getitem,
    grad_enabled,
    l1_sum,
    log,
    make_op,
    matmul,
    mean,
    mul,
    neg,
    no_grad,
    power,
    reshape,
    sigmoid,
    silu,
    softmax,
    softplus,
    sqrt,
    stack,
    sub,
    swapaxes,
    take,
    transpose,
    tsum,
)
from .module import Module, ModuleList, component_rng, init_conv, init_linear
from .nn import avgpool2, complex_lift, conv3x3, from_complex, real_part, to_complex, upsample2
from .optim import NonFiniteGradientError, OptimizerState, adam_step

__all__ = [name for name in dir() if not name.startswith("_")]
