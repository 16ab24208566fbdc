from .tensor import (
    ContractError,
    DimensionError,
    Parameter,
    Tensor,
    as_tensor,
    backward,
    concat,
    div,
    exp,
    is_grad_enabled,
    layer_norm,
    linear,
    log,
    matmul,
    mean,
    no_grad,
    relu,
    reshape,
    softmax,
    softmax_rows,
    sqrt,
    stack,
    swapaxes,
    tanh,
    transpose,
    tsum,
    vector_norm,
    zero_grad,
)
from .module import LayerNorm, Linear, Module
from .optim import AdamState, adam_step
from .checkpoint import CheckpointError, load_parameters, save_parameters
from .gradcheck import check_gradients, numerical_gradient, relative_error
