# Reverse-mode tensor engine: values, graph, layers and losses
from app.core.autodiff.tensor import Tensor, gradients, input_gradient, lift
from app.core.autodiff.ops import absolute, avg_pool2d, channel_dot, conv2d, gap, linear, relu
from app.core.autodiff.losses import classification_losses, sigmoid_cross_entropy, softmax_cross_entropy

__all__ = [
    "Tensor",
    "gradients",
    "input_gradient",
    "lift",
    "absolute",
    "avg_pool2d",
    "channel_dot",
    "conv2d",
    "gap",
    "linear",
    "relu",
    "classification_losses",
    "sigmoid_cross_entropy",
    "softmax_cross_entropy",
]
