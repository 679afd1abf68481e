from hrs.tensor.engine import (
    Function,
    Tensor,
    concat,
    relu,
    sigmoid,
    square,
    unbroadcast,
)
from hrs.tensor.gradcheck import gradcheck, numerical_gradient
from hrs.tensor.nn import (
    Conv1dSpec,
    ConvSpec,
    conv1d,
    conv2d,
    layer_norm,
    linear,
)
