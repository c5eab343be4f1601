from eluresnet.ops.activations import elu_backward, elu_forward, relu_backward, relu_forward
from eluresnet.ops.conv import ConvParams, conv2d_backward, conv2d_forward
from eluresnet.ops.dense import (
    fully_connected_backward,
    fully_connected_forward,
    global_avg_pool_backward,
    global_avg_pool_forward,
    softmax_cross_entropy,
)
from eluresnet.ops.image import pad_crop_flip
from eluresnet.ops.norm import BatchNormState, batchnorm_backward, batchnorm_forward

__all__ = [
    "BatchNormState",
    "ConvParams",
    "batchnorm_backward",
    "batchnorm_forward",
    "conv2d_backward",
    "conv2d_forward",
    "elu_backward",
    "elu_forward",
    "fully_connected_backward",
    "fully_connected_forward",
    "global_avg_pool_backward",
    "global_avg_pool_forward",
    "pad_crop_flip",
    "relu_backward",
    "relu_forward",
    "softmax_cross_entropy",
]
