"""NumPy implementations of the convolution / pooling kernels.

Reference backend, and the fallback when the compiled ``_kernels`` module is
unavailable.  Accumulation order in :func:`col2im` is (ki, kj) row-major so the
compiled kernel can reproduce it bit for bit.

All arrays are NHWC float64 and C-contiguous.
"""

import numpy as np

BACKEND = "python"


def im2col(x, kh, kw, ph, pw):
    n, h, w, c = x.shape
    ho = h + 2 * ph - kh + 1
    wo = w + 2 * pw - kw + 1
    if ph or pw:
        xp = np.zeros((n, h + 2 * ph, w + 2 * pw, c), dtype=x.dtype)
        xp[:, ph:ph + h, pw:pw + w, :] = x
    else:
        xp = x
    cols = np.empty((n, ho, wo, kh, kw, c), dtype=x.dtype)
    for i in range(kh):
        for j in range(kw):
            cols[:, :, :, i, j, :] = xp[:, i:i + ho, j:j + wo, :]
    return cols


def col2im(cols, h, w, ph, pw):
    n, ho, wo, kh, kw, c = cols.shape
    xp = np.zeros((n, h + 2 * ph, w + 2 * pw, c), dtype=cols.dtype)
    for i in range(kh):
        for j in range(kw):
            xp[:, i:i + ho, j:j + wo, :] += cols[:, :, :, i, j, :]
    return np.ascontiguousarray(xp[:, ph:ph + h, pw:pw + w, :])


def maxpool2_forward(x):
    n, h, w, c = x.shape
    v = x.reshape(n, h // 2, 2, w // 2, 2, c)
    # candidates in (0,0), (0,1), (1,0), (1,1) order; argmax keeps the first max
    stacked = np.stack([v[:, :, 0, :, 0], v[:, :, 0, :, 1], v[:, :, 1, :, 0], v[:, :, 1, :, 1]])
    arg = np.argmax(stacked, axis=0).astype(np.int8)
    out = np.take_along_axis(stacked, arg[None].astype(np.intp), axis=0)[0]
    return np.ascontiguousarray(out), arg


def maxpool2_backward(dout, arg):
    n, ho, wo, c = dout.shape
    dx = np.zeros((n, ho, 2, wo, 2, c), dtype=dout.dtype)
    for k in range(4):
        di, dj = divmod(k, 2)
        dx[:, :, di, :, dj, :] = np.where(arg == k, dout, 0.0)
    return dx.reshape(n, 2 * ho, 2 * wo, c)
