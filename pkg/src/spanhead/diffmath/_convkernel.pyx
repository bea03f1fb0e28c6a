# cython: language_level=3
"""Compiled inner loops for 1-D same-padding cross-correlation.

Contract mirrors _convkernel_py: padded C-contiguous input, float32 or
float64 throughout (fused), sequential loops for deterministic summation.
"""

import numpy as np

from cython cimport floating

BACKEND_NAME = "c"


def conv1d_forward(floating[:, ::1] xp, floating[:, :, ::1] kern, floating[::1] bias):
    cdef Py_ssize_t w = kern.shape[0]
    cdef Py_ssize_t H = kern.shape[1]
    cdef Py_ssize_t F = kern.shape[2]
    cdef Py_ssize_t L = xp.shape[0] - w + 1
    cdef Py_ssize_t l, i, h, f
    cdef floating xv

    if floating is float:
        out_arr = np.empty((L, F), dtype=np.float32)
    else:
        out_arr = np.empty((L, F), dtype=np.float64)
    cdef floating[:, ::1] out = out_arr

    with nogil:
        for l in range(L):
            for f in range(F):
                out[l, f] = bias[f]
            for i in range(w):
                for h in range(H):
                    xv = xp[l + i, h]
                    if xv != 0.0:
                        for f in range(F):
                            out[l, f] += xv * kern[i, h, f]
    return out_arr


def conv1d_backward(floating[:, ::1] xp, floating[:, :, ::1] kern,
                    floating[:, ::1] gout, bint need_dx, bint need_dk):
    cdef Py_ssize_t w = kern.shape[0]
    cdef Py_ssize_t H = kern.shape[1]
    cdef Py_ssize_t F = kern.shape[2]
    cdef Py_ssize_t L = gout.shape[0]
    cdef Py_ssize_t l, i, h, f
    cdef floating acc, xv

    if floating is float:
        dt = np.float32
    else:
        dt = np.float64
    dxp_arr = np.zeros((xp.shape[0], xp.shape[1]), dtype=dt)
    dkern_arr = np.zeros((w, H, F), dtype=dt)
    dbias_arr = np.zeros(F, dtype=dt)
    cdef floating[:, ::1] dxp = dxp_arr
    cdef floating[:, :, ::1] dkern = dkern_arr
    cdef floating[::1] dbias = dbias_arr

    with nogil:
        for l in range(L):
            for f in range(F):
                dbias[f] += gout[l, f]
        if need_dx:
            for l in range(L):
                for i in range(w):
                    for h in range(H):
                        acc = 0.0
                        for f in range(F):
                            acc += gout[l, f] * kern[i, h, f]
                        dxp[l + i, h] += acc
        if need_dk:
            for i in range(w):
                for h in range(H):
                    for l in range(L):
                        xv = xp[l + i, h]
                        if xv != 0.0:
                            for f in range(F):
                                dkern[i, h, f] += xv * gout[l, f]
    return (dxp_arr if need_dx else None,
            dkern_arr if need_dk else None,
            dbias_arr)
