"""Pure-numpy fallback for the 1-D correlation kernels.

Same contract as the compiled extension: inputs are C-contiguous float32 or
float64 arrays, `xp` is already zero-padded, and all reductions run in a
fixed order so repeated calls are bit-identical.
"""

import numpy as np

BACKEND_NAME = "py"


def conv1d_forward(xp, kern, bias):
    """Cross-correlate padded input `xp` (L+w-1, H) with `kern` (w, H, F).

    Returns the (L, F) feature map with `bias` added to every row.
    """
    w = kern.shape[0]
    L = xp.shape[0] - w + 1
    out = np.empty((L, kern.shape[2]), dtype=xp.dtype)
    out[:] = bias
    for i in range(w):
        out += xp[i : i + L] @ kern[i]
    return out


def conv1d_backward(xp, kern, gout, need_dx, need_dk):
    """Gradients of conv1d_forward w.r.t. padded input, kernel and bias.

    Returns (dxp, dkern, dbias); dxp/dkern are None when not requested.
    """
    w = kern.shape[0]
    L = gout.shape[0]
    dxp = np.zeros_like(xp) if need_dx else None
    dkern = np.empty_like(kern) if need_dk else None
    for i in range(w):
        if need_dx:
            dxp[i : i + L] += gout @ kern[i].T
        if need_dk:
            dkern[i] = xp[i : i + L].T @ gout
    dbias = gout.sum(axis=0)
    return dxp, dkern, dbias
