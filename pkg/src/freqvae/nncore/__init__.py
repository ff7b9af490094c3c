"""Minimal numpy autodiff: tensors, layers, Gaussian latents, Adam, checkpoints."""

from .tensor import (
    Tensor, as_tensor, parameter, add, sub, mul, div, power, exp, log, sqrt, tanh,
    sigmoid, swish, relu, leaky_relu, absolute, clip, sum_, mean_reduce, reshape,
    transpose, getitem, concat, concat_channels, l1, l2, linear, conv2d,
    nearest_upsample2x, avg_pool2x, group_norm,
)
from .layers import Module, Conv2d, Linear, GroupNorm, ResBlock, Downsample, Upsample
from .gaussian import DiagGaussianLatent, reparameterize, kl_diag_gaussian
from .optim import Adam, AdamState, adam_step
from .checkpoint import save_tensors, load_tensors, encode_tensors, decode_tensors
from .gradcheck import check_op, numeric_grad, relative_error
