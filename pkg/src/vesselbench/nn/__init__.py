"""From-scratch differentiable ops and the U-Net built on them."""

from .tensor import Tensor
from .functional import (
    conv_forward,
    conv_backward,
    maxpool_forward,
    maxpool_backward,
    upsample_forward,
    upsample_backward,
    concat_forward,
    concat_backward,
    relu_forward,
    relu_backward,
    sigmoid_forward,
    sigmoid_backward,
    dice_loss,
)
from .unet import (
    UNetConfig,
    UNetParams,
    UNet,
    build_unet,
    count_params,
    layer_plan,
    save_checkpoint,
    load_checkpoint,
)
from .optim import AdamState, adam_step

__all__ = [
    "Tensor",
    "conv_forward", "conv_backward",
    "maxpool_forward", "maxpool_backward",
    "upsample_forward", "upsample_backward",
    "concat_forward", "concat_backward",
    "relu_forward", "relu_backward",
    "sigmoid_forward", "sigmoid_backward",
    "dice_loss",
    "UNetConfig", "UNetParams", "UNet",
    "build_unet", "count_params", "layer_plan",
    "save_checkpoint", "load_checkpoint",
    "AdamState", "adam_step",
]
