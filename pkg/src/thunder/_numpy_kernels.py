"""Pure numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def im2col(x, out, kh, kw, stride, pad):
    n, c, h, w = x.shape
    out_h = (h + 2 * pad - kh) // stride + 1
    out_w = (w + 2 * pad - kw) // stride + 1
    if pad:
        x = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad)))
    view = out.reshape(n, c, kh, kw, out_h, out_w)
    for i in range(kh):
        for j in range(kw):
            view[:, :, i, j] = x[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride]


def col2im(cols, out, kh, kw, stride, pad):
    n, c, h, w = out.shape
    out_h = (h + 2 * pad - kh) // stride + 1
    out_w = (w + 2 * pad - kw) // stride + 1
    view = cols.reshape(n, c, kh, kw, out_h, out_w)
    if pad:
        acc = np.zeros((n, c, h + 2 * pad, w + 2 * pad), dtype=out.dtype)
    else:
        acc = out
    for i in range(kh):
        for j in range(kw):
            acc[:, :, i : i + stride * out_h : stride, j : j + stride * out_w : stride] += view[:, :, i, j]
    if pad:
        out += acc[:, :, pad : pad + h, pad : pad + w]


def haar_forward(x, out):
    c = x.shape[1]
    a = x[:, :, 0::2, 0::2]
    b = x[:, :, 0::2, 1::2]
    cc = x[:, :, 1::2, 0::2]
    d = x[:, :, 1::2, 1::2]
    s0, s1 = a + d, b + cc
    d0, d1 = d - a, b - cc
    out[:, :c] = (s0 + s1) * 0.5
    out[:, c : 2 * c] = (d0 + d1) * 0.5
    out[:, 2 * c : 3 * c] = (d0 - d1) * 0.5
    out[:, 3 * c :] = (s0 - s1) * 0.5


def haar_inverse(y, out):
    c = y.shape[1] // 4
    ll, hl, lh, hh = y[:, :c], y[:, c : 2 * c], y[:, 2 * c : 3 * c], y[:, 3 * c :]
    p, q = ll + hh, hl + lh
    r, s = ll - hh, hl - lh
    out[:, :, 0::2, 0::2] = (p - q) * 0.5
    out[:, :, 0::2, 1::2] = (r + s) * 0.5
    out[:, :, 1::2, 0::2] = (r - s) * 0.5
    out[:, :, 1::2, 1::2] = (p + q) * 0.5
