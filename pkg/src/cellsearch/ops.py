"""Candidate operations for the cell search space.

The vocabulary is the standard 8-op DARTS set. Every op preserves spatial
dims at stride 1 and halves them at stride 2. Separable convs apply the
depthwise/pointwise pair twice; pooling ops are followed by batch norm so
edge outputs stay comparable in scale during search.
"""

from __future__ import annotations

from enum import Enum

import torch
from torch import nn

from .errors import InvalidOperationError, ShapeError


class OpKind(str, Enum):
    """The 8 candidate operations, in fixed index order 0..7."""

    SEP_CONV_3X3 = "sep_conv_3x3"
    SEP_CONV_5X5 = "sep_conv_5x5"
    DIL_CONV_3X3 = "dil_conv_3x3"
    DIL_CONV_5X5 = "dil_conv_5x5"
    MAX_POOL_3X3 = "max_pool_3x3"
    AVG_POOL_3X3 = "avg_pool_3x3"
    SKIP_CONNECT = "skip_connect"
    ZERO = "zero"


ALL_OPS = tuple(OpKind)

#: ops that contain no trainable parameters at stride 1
PARAMETER_FREE = {OpKind.MAX_POOL_3X3, OpKind.AVG_POOL_3X3, OpKind.SKIP_CONNECT, OpKind.ZERO}


class ReLUConvBN(nn.Module):
    def __init__(self, c_in, c_out, kernel_size, stride, padding, affine=True):
        super().__init__()
        self.op = nn.Sequential(
            nn.ReLU(inplace=False),
            nn.Conv2d(c_in, c_out, kernel_size, stride=stride, padding=padding, bias=False),
            nn.BatchNorm2d(c_out, affine=affine),
        )

    def forward(self, x):
        return self.op(x)


class SepConv(nn.Module):
    """Depthwise-separable conv applied twice (second pass at stride 1)."""

    def __init__(self, channels, kernel_size, stride, padding, affine=True):
        super().__init__()
        c = channels
        self.op = nn.Sequential(
            nn.ReLU(inplace=False),
            nn.Conv2d(c, c, kernel_size, stride=stride, padding=padding, groups=c, bias=False),
            nn.Conv2d(c, c, 1, padding=0, bias=False),
            nn.BatchNorm2d(c, affine=affine),
            nn.ReLU(inplace=False),
            nn.Conv2d(c, c, kernel_size, stride=1, padding=padding, groups=c, bias=False),
            nn.Conv2d(c, c, 1, padding=0, bias=False),
            nn.BatchNorm2d(c, affine=affine),
        )

    def forward(self, x):
        return self.op(x)


class DilConv(nn.Module):
    """Dilated depthwise conv followed by a pointwise projection."""

    def __init__(self, channels, kernel_size, stride, padding, dilation, affine=True):
        super().__init__()
        c = channels
        self.op = nn.Sequential(
            nn.ReLU(inplace=False),
            nn.Conv2d(c, c, kernel_size, stride=stride, padding=padding,
                      dilation=dilation, groups=c, bias=False),
            nn.Conv2d(c, c, 1, padding=0, bias=False),
            nn.BatchNorm2d(c, affine=affine),
        )

    def forward(self, x):
        return self.op(x)


class Pooling(nn.Module):
    def __init__(self, channels, stride, mode, affine=False):
        super().__init__()
        if mode == "max":
            pool = nn.MaxPool2d(3, stride=stride, padding=1)
        else:
            pool = nn.AvgPool2d(3, stride=stride, padding=1, count_include_pad=False)
        self.op = nn.Sequential(pool, nn.BatchNorm2d(channels, affine=affine))

    def forward(self, x):
        return self.op(x)


class Identity(nn.Module):
    def forward(self, x):
        return x


class Zero(nn.Module):
    def __init__(self, stride):
        super().__init__()
        self.stride = stride

    def forward(self, x):
        if self.stride == 1:
            return x.mul(0.0)
        return x[:, :, :: self.stride, :: self.stride].mul(0.0)


class FactorizedReduce(nn.Module):
    """Stride-2 projection via two offset 1x1 convs, concatenated."""

    def __init__(self, c_in, c_out, affine=True):
        super().__init__()
        if c_out % 2 != 0:
            raise ShapeError(f"factorized reduce needs an even channel count, got {c_out}")
        self.relu = nn.ReLU(inplace=False)
        self.conv_1 = nn.Conv2d(c_in, c_out // 2, 1, stride=2, padding=0, bias=False)
        self.conv_2 = nn.Conv2d(c_in, c_out // 2, 1, stride=2, padding=0, bias=False)
        self.bn = nn.BatchNorm2d(c_out, affine=affine)

    def forward(self, x):
        x = self.relu(x)
        out = torch.cat([self.conv_1(x), self.conv_2(x[:, :, 1:, 1:])], dim=1)
        return self.bn(out)


def make_op(kind: OpKind, channels: int, stride: int, affine: bool = True) -> nn.Module:
    """Instantiate the module implementing one candidate operation."""
    kind = OpKind(kind)
    if kind is OpKind.SEP_CONV_3X3:
        return SepConv(channels, 3, stride, 1, affine=affine)
    if kind is OpKind.SEP_CONV_5X5:
        return SepConv(channels, 5, stride, 2, affine=affine)
    if kind is OpKind.DIL_CONV_3X3:
        return DilConv(channels, 3, stride, 2, 2, affine=affine)
    if kind is OpKind.DIL_CONV_5X5:
        return DilConv(channels, 5, stride, 4, 2, affine=affine)
    if kind is OpKind.MAX_POOL_3X3:
        return Pooling(channels, stride, "max", affine=False)
    if kind is OpKind.AVG_POOL_3X3:
        return Pooling(channels, stride, "avg", affine=False)
    if kind is OpKind.SKIP_CONNECT:
        if stride == 1:
            return Identity()
        return FactorizedReduce(channels, channels, affine=affine)
    if kind is OpKind.ZERO:
        return Zero(stride)
    raise InvalidOperationError(f"unknown operation kind: {kind!r}")


def candidate_op_output(kind, x, stride, channels, module=None):
    """Apply one candidate op to ``x``.

    When ``module`` is None a freshly initialized module is built (weights
    drawn from the global torch RNG); pass an existing module to evaluate it
    against known weights.
    """
    try:
        kind = OpKind(kind)
    except ValueError:
        raise InvalidOperationError(f"unknown operation kind: {kind!r}") from None
    if x.dim() != 4:
        raise ShapeError(f"expected a 4-axis (N,C,H,W) feature map, got {tuple(x.shape)}")
    if x.shape[1] != channels:
        raise ShapeError(f"channel mismatch: map has {x.shape[1]}, expected {channels}")
    if stride not in (1, 2):
        raise ShapeError(f"stride must be 1 or 2, got {stride}")
    if x.shape[2] % stride or x.shape[3] % stride:
        raise ShapeError(f"spatial dims {tuple(x.shape[2:])} not divisible by stride {stride}")
    if module is None:
        module = make_op(kind, channels, stride)
        module = module.to(x.dtype)
    return module(x)
