"""Spatial operators: convolution, pixel shuffle, fixed filters, resizing."""

import numpy as np

from . import kernels
from .autodiff import Tensor, _make, as_tensor, matmul


def _out_extent(size, k, stride, pad):
    return (size + 2 * pad - k) // stride + 1


def conv2d(x, weight, bias=None, stride=1, padding=0):
    """2-D cross-correlation of an NCHW tensor with an (out, in, kh, kw) kernel.

    Lowered to im2col + one matrix product per batch element; 1x1 stride-1
    kernels skip the lowering.
    """
    x, weight = as_tensor(x), as_tensor(weight)
    if x.ndim != 4 or weight.ndim != 4:
        raise ValueError(f"conv2d expects 4-D input and weight, got {x.shape} and {weight.shape}")
    n, c, h, w = x.shape
    out_c, in_c, kh, kw = weight.shape
    if in_c != c:
        raise ValueError(f"conv2d: weight expects {in_c} input channels, input has {c} (input {x.shape}, weight {weight.shape})")
    if kh % 2 == 0 or kw % 2 == 0:
        raise ValueError(f"conv2d: kernel extents must be odd, got {kh}x{kw}")
    if stride < 1 or padding < 0:
        raise ValueError("conv2d: stride must be positive and padding non-negative")
    out_h, out_w = _out_extent(h, kh, stride, padding), _out_extent(w, kw, stride, padding)
    if out_h <= 0 or out_w <= 0:
        raise ValueError(f"conv2d: output extents would be {out_h}x{out_w}")
    if bias is not None:
        bias = as_tensor(bias)
        if bias.shape != (out_c,):
            raise ValueError(f"conv2d: bias shape {bias.shape} does not match {out_c} output channels")

    xd, wd = x.data, weight.data
    dtype = np.result_type(xd, wd)
    xd = np.ascontiguousarray(xd, dtype=dtype)
    w2 = wd.reshape(out_c, in_c * kh * kw).astype(dtype, copy=False)
    direct = kh == 1 and kw == 1 and stride == 1 and padding == 0
    if direct:
        cols = xd.reshape(n, c, h * w)
    else:
        cols = np.empty((n, c * kh * kw, out_h * out_w), dtype=dtype)
        kernels.im2col(xd, cols, kh, kw, stride, padding)
    out = np.matmul(w2, cols)
    if bias is not None:
        out += bias.data.astype(dtype, copy=False)[:, None]
    out = out.reshape(n, out_c, out_h, out_w)

    def grad_fn(g):
        g2 = g.reshape(n, out_c, out_h * out_w)
        gx = gw = gb = None
        if weight.requires_grad:
            # batched GEMM against a transposed view avoids tensordot's copies
            gw = np.matmul(g2, cols.transpose(0, 2, 1)).sum(axis=0).reshape(weight.shape)
        if bias is not None and bias.requires_grad:
            gb = g2.sum(axis=(0, 2))
        if x.requires_grad:
            gcols = np.matmul(w2.T, g2)
            if direct:
                gx = gcols.reshape(n, c, h, w)
            else:
                gx = np.zeros((n, c, h, w), dtype=dtype)
                kernels.col2im(np.ascontiguousarray(gcols), gx, kh, kw, stride, padding)
        return gx, gw, gb

    parents = (x, weight) if bias is None else (x, weight, bias)
    return _make(out, parents, grad_fn)


def pixel_shuffle(x, r):
    """Rearrange (N, C*r*r, H, W) to (N, C, H*r, W*r).

    Output pixel (y*r + a, x*r + b) of channel g reads input channel
    g*r*r + a*r + b at (y, x).
    """
    x = as_tensor(x)
    n, c, h, w = x.shape
    if r < 1 or c % (r * r):
        raise ValueError(f"pixel_shuffle: {c} channels not divisible by r^2 = {r * r}")
    g = c // (r * r)
    out = x.data.reshape(n, g, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, g, h * r, w * r)
    return _make(np.ascontiguousarray(out), (x,), lambda gr: (_unshuffle(gr, r),))


def _unshuffle(a, r):
    n, g, hr, wr = a.shape
    h, w = hr // r, wr // r
    return np.ascontiguousarray(a.reshape(n, g, h, r, w, r).transpose(0, 1, 3, 5, 2, 4).reshape(n, g * r * r, h, w))


def pixel_unshuffle(x, r):
    """Adjoint (and inverse) of :func:`pixel_shuffle`."""
    x = as_tensor(x)
    n, g, hr, wr = x.shape
    if hr % r or wr % r:
        raise ValueError(f"pixel_unshuffle: extents {hr}x{wr} not divisible by {r}")
    return _make(_unshuffle(x.data, r), (x,), lambda gr: (_shuffle(gr, r),))


def _shuffle(a, r):
    n, c, h, w = a.shape
    g = c // (r * r)
    return np.ascontiguousarray(a.reshape(n, g, r, r, h, w).transpose(0, 1, 4, 2, 5, 3).reshape(n, g, h * r, w * r))


def gaussian_window(size=11, sigma=1.5, dtype=np.float64):
    coords = np.arange(size, dtype=np.float64) - (size - 1) / 2.0
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    return (g / g.sum()).astype(dtype)


def filter_valid(x, taps):
    """Apply the separable filter ``taps x taps`` to every channel, 'valid' extent."""
    x = as_tensor(x)
    n, c, h, w = x.shape
    k = len(taps)
    taps = np.asarray(taps, dtype=x.dtype)
    flat = x.reshape((n * c, 1, h, w))
    rows = conv2d(flat, Tensor(taps.reshape(1, 1, 1, k)))
    both = conv2d(rows, Tensor(taps.reshape(1, 1, k, 1)))
    return both.reshape((n, c, h - k + 1, w - k + 1))


def _linear_resize_matrix(src, dst, dtype):
    """Row i gives the weights of the source samples for output sample i.

    Half-pixel-centred linear interpolation with edge clamping.
    """
    m = np.zeros((dst, src), dtype=np.float64)
    scale = src / dst
    for i in range(dst):
        pos = (i + 0.5) * scale - 0.5
        pos = min(max(pos, 0.0), src - 1)
        lo = int(np.floor(pos))
        hi = min(lo + 1, src - 1)
        frac = pos - lo
        m[i, lo] += 1.0 - frac
        m[i, hi] += frac
    return m.astype(dtype)


def bilinear_upsample(x, factor):
    """Bilinear resize of an NCHW tensor by an integer factor."""
    x = as_tensor(x)
    _, _, h, w = x.shape
    rows = Tensor(_linear_resize_matrix(h, h * factor, x.dtype))
    cols = Tensor(_linear_resize_matrix(w, w * factor, x.dtype).T.copy())
    return matmul(rows, matmul(x, cols))


def box_downsample(a, factor):
    """Mean over non-overlapping ``factor x factor`` blocks of a plain array."""
    a = np.asarray(a)
    n, c, h, w = a.shape
    if h % factor or w % factor:
        raise ValueError(f"box_downsample: extents {h}x{w} not divisible by {factor}")
    return a.reshape(n, c, h // factor, factor, w // factor, factor).mean(axis=(3, 5))
