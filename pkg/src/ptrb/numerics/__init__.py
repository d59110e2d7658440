"""Tensor engine with reverse-mode autodiff and the neural kernels."""

from . import ops
from .gradcheck import GradientCheckError, GradReport, check_gradients
from .ops import DimensionError, ScanError
from .rng import stream
from .tensor import Tensor, as_tensor, clear_tape, grad_enabled, no_grad, tape_size

__all__ = [
    "ops", "Tensor", "as_tensor", "no_grad", "clear_tape", "grad_enabled",
    "tape_size", "check_gradients", "GradReport", "GradientCheckError",
    "DimensionError", "ScanError", "stream",
]
