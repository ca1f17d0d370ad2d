"""Pure-numpy implementations of the hot array kernels.

All functions take C-contiguous float64 arrays with an explicit leading
batch axis and return freshly allocated arrays. The compiled lane in
``_fastk.pyx`` implements the same signatures.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

NAME = "numpy"


def conv1d_forward(x, w, b):
    """Length-preserving 1D cross-correlation.

    x: (B, C_in, L), w: (C_out, C_in, K) with K odd, b: (C_out,).
    Zero padding of (K-1)/2 on each end; returns (B, C_out, L).
    """
    k = w.shape[2]
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = sliding_window_view(xp, k, axis=2)  # (B, C_in, L, K)
    y = np.einsum("bilk,oik->bol", win, w, optimize=True)
    y += b[None, :, None]
    return np.ascontiguousarray(y)


def conv1d_backward(x, w, gy):
    """Gradients of conv1d_forward w.r.t. x, w and b given output grad gy."""
    k = w.shape[2]
    pad = (k - 1) // 2
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad)))
    win = sliding_window_view(xp, k, axis=2)
    gw = np.einsum("bilk,bol->oik", win, gy, optimize=True)
    gb = gy.sum(axis=(0, 2))
    # grad wrt input is a same-padded cross-correlation of gy with the
    # kernel flipped along K and transposed in (out, in)
    wt = np.ascontiguousarray(w[:, :, ::-1].transpose(1, 0, 2))
    gyp = np.pad(gy, ((0, 0), (0, 0), (pad, pad)))
    gwin = sliding_window_view(gyp, k, axis=2)
    gx = np.einsum("bolk,iok->bil", gwin, wt, optimize=True)
    return np.ascontiguousarray(gx), np.ascontiguousarray(gw), gb


def avgpool2_forward(x):
    """Window-2 stride-2 average pooling; a trailing odd element is dropped.

    x: (B, C, L) with L >= 2; returns (B, C, L // 2).
    """
    m = x.shape[2] // 2
    return np.ascontiguousarray((x[:, :, 0 : 2 * m : 2] + x[:, :, 1 : 2 * m : 2]) * 0.5)


def avgpool2_backward(gy, length):
    """Spread pooled gradients back over the input length."""
    b, c, m = gy.shape
    gx = np.zeros((b, c, length))
    half = gy * 0.5
    gx[:, :, 0 : 2 * m : 2] = half
    gx[:, :, 1 : 2 * m : 2] = half
    return gx
