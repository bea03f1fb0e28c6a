"""Reverse-mode autodiff over numpy with optional compiled conv kernels."""

from .backend import KERNEL_BACKEND, kernel_backend
from .gradcheck import grad_check
from .params import ParamStore, glorot_uniform
from .tensor import Tensor, as_tensor, check_finite

__all__ = [
    "KERNEL_BACKEND",
    "kernel_backend",
    "grad_check",
    "ParamStore",
    "glorot_uniform",
    "Tensor",
    "as_tensor",
    "check_finite",
]
