# core/autodiff/__init__.py
"""
Tape-based reverse-mode differentiation for NCHW tensors.
"""

from .tensor import ComputationTape, Tensor, TapeNode, active_tape, backward, record
from .ops import (
    MacCounter,
    activation,
    add,
    concat_channels,
    conv2d,
    conv2d_transposed,
    count_macs,
    depth_to_space,
    elementwise,
    mean_abs_error,
    mean_of,
    mul,
    prelu,
    relu,
    scale,
    space_to_depth,
    sub,
)
from .gradcheck import GradCheckReport, grad_check, relative_error

__all__ = [
    "ComputationTape",
    "Tensor",
    "TapeNode",
    "active_tape",
    "backward",
    "record",
    "MacCounter",
    "activation",
    "add",
    "concat_channels",
    "conv2d",
    "conv2d_transposed",
    "count_macs",
    "depth_to_space",
    "elementwise",
    "mean_abs_error",
    "mean_of",
    "mul",
    "prelu",
    "relu",
    "scale",
    "space_to_depth",
    "sub",
    "GradCheckReport",
    "grad_check",
    "relative_error",
]
