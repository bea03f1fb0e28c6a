"""Kernel backend selection.

The compiled extension is preferred when it was built; otherwise the numpy
fallback is used. `SPANHEAD_KERNELS=c` forces the extension (error if it is
missing), `SPANHEAD_KERNELS=py` forces the fallback.
"""

import os

from ..errors import ConfigError

_requested = os.environ.get("SPANHEAD_KERNELS", "auto").strip().lower()
if _requested not in ("auto", "c", "py"):
    raise ConfigError(
        f"SPANHEAD_KERNELS must be one of auto/c/py, got {_requested!r}"
    )

if _requested == "py":
    from . import _convkernel_py as _impl
else:
    try:
        from . import _convkernel as _impl  # type: ignore[attr-defined]
    except ImportError:
        if _requested == "c":
            raise ConfigError(
                "SPANHEAD_KERNELS=c but the compiled extension is not built; "
                "run `pip install -e . --no-build-isolation`"
            ) from None
        from . import _convkernel_py as _impl

KERNEL_BACKEND = _impl.BACKEND_NAME

conv1d_forward = _impl.conv1d_forward
conv1d_backward = _impl.conv1d_backward


def kernel_backend() -> str:
    """Name of the active kernel backend: 'c' (compiled) or 'py' (numpy)."""
    return KERNEL_BACKEND
