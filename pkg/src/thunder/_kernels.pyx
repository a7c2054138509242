# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled inner loops for convolution lowering and the Haar transform.

Every function writes into a caller-allocated, C-contiguous output buffer.
The pure numpy twins live in ``thunder._numpy_kernels`` and share the
same signatures.
"""

ctypedef fused real:
    float
    double


cdef inline Py_ssize_t _first_valid(Py_ssize_t offset, Py_ssize_t stride) nogil:
    # smallest o >= 0 with o*stride + offset >= 0
    if offset >= 0:
        return 0
    return (-offset + stride - 1) // stride


cdef inline Py_ssize_t _end_valid(Py_ssize_t offset, Py_ssize_t stride,
                                  Py_ssize_t limit, Py_ssize_t count) nogil:
    # one past the largest o < count with o*stride + offset < limit
    cdef Py_ssize_t e
    if limit - offset <= 0:
        return 0
    e = (limit - offset + stride - 1) // stride
    return e if e < count else count


def im2col(real[:, :, :, ::1] x, real[:, :, ::1] out,
           int kh, int kw, int stride, int pad):
    cdef Py_ssize_t n_batch = x.shape[0], chans = x.shape[1]
    cdef Py_ssize_t height = x.shape[2], width = x.shape[3]
    cdef Py_ssize_t out_h = (height + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t out_w = (width + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t n, c, i, j, oy, ox, iy, row, x0, x1, y0, y1, base
    cdef real* dst
    cdef real* src
    with nogil:
        for n in range(n_batch):
            for c in range(chans):
                for i in range(kh):
                    y0 = _first_valid(i - pad, stride)
                    y1 = _end_valid(i - pad, stride, height, out_h)
                    for j in range(kw):
                        row = (c * kh + i) * kw + j
                        x0 = _first_valid(j - pad, stride)
                        x1 = _end_valid(j - pad, stride, width, out_w)
                        dst = &out[n, row, 0]
                        for oy in range(out_h):
                            base = oy * out_w
                            if oy < y0 or oy >= y1 or x1 <= x0:
                                for ox in range(out_w):
                                    dst[base + ox] = 0
                                continue
                            iy = oy * stride + i - pad
                            src = &x[n, c, iy, 0]
                            for ox in range(x0):
                                dst[base + ox] = 0
                            if stride == 1:
                                for ox in range(x0, x1):
                                    dst[base + ox] = src[ox + j - pad]
                            else:
                                for ox in range(x0, x1):
                                    dst[base + ox] = src[ox * stride + j - pad]
                            for ox in range(x1, out_w):
                                dst[base + ox] = 0


def col2im(real[:, :, ::1] cols, real[:, :, :, ::1] out,
           int kh, int kw, int stride, int pad):
    """Scatter-add columns back onto ``out`` (which must be zeroed)."""
    cdef Py_ssize_t n_batch = out.shape[0], chans = out.shape[1]
    cdef Py_ssize_t height = out.shape[2], width = out.shape[3]
    cdef Py_ssize_t out_h = (height + 2 * pad - kh) // stride + 1
    cdef Py_ssize_t out_w = (width + 2 * pad - kw) // stride + 1
    cdef Py_ssize_t n, c, i, j, oy, ox, iy, row, x0, x1, y0, y1, base
    cdef real* src
    cdef real* dst
    with nogil:
        for n in range(n_batch):
            for c in range(chans):
                for i in range(kh):
                    y0 = _first_valid(i - pad, stride)
                    y1 = _end_valid(i - pad, stride, height, out_h)
                    for j in range(kw):
                        row = (c * kh + i) * kw + j
                        x0 = _first_valid(j - pad, stride)
                        x1 = _end_valid(j - pad, stride, width, out_w)
                        src = &cols[n, row, 0]
                        for oy in range(y0, y1):
                            iy = oy * stride + i - pad
                            dst = &out[n, c, iy, 0]
                            base = oy * out_w
                            if stride == 1:
                                for ox in range(x0, x1):
                                    dst[ox + j - pad] += src[base + ox]
                            else:
                                for ox in range(x0, x1):
                                    dst[ox * stride + j - pad] += src[base + ox]


def haar_forward(real[:, :, :, ::1] x, real[:, :, :, ::1] out):
    cdef Py_ssize_t n_batch = x.shape[0], chans = x.shape[1]
    cdef Py_ssize_t h2 = x.shape[2] // 2, w2 = x.shape[3] // 2
    cdef Py_ssize_t n, c, y, xx
    cdef real a, b, cc, d
    with nogil:
        for n in range(n_batch):
            for c in range(chans):
                for y in range(h2):
                    for xx in range(w2):
                        a = x[n, c, 2 * y, 2 * xx]
                        b = x[n, c, 2 * y, 2 * xx + 1]
                        cc = x[n, c, 2 * y + 1, 2 * xx]
                        d = x[n, c, 2 * y + 1, 2 * xx + 1]
                        out[n, c, y, xx] = (a + b + cc + d) * 0.5
                        out[n, chans + c, y, xx] = (-a + b - cc + d) * 0.5
                        out[n, 2 * chans + c, y, xx] = (-a - b + cc + d) * 0.5
                        out[n, 3 * chans + c, y, xx] = (a - b - cc + d) * 0.5


def haar_inverse(real[:, :, :, ::1] y, real[:, :, :, ::1] out):
    cdef Py_ssize_t n_batch = y.shape[0], chans = y.shape[1] // 4
    cdef Py_ssize_t h2 = y.shape[2], w2 = y.shape[3]
    cdef Py_ssize_t n, c, r, s
    cdef real ll, hl, lh, hh
    with nogil:
        for n in range(n_batch):
            for c in range(chans):
                for r in range(h2):
                    for s in range(w2):
                        ll = y[n, c, r, s]
                        hl = y[n, chans + c, r, s]
                        lh = y[n, 2 * chans + c, r, s]
                        hh = y[n, 3 * chans + c, r, s]
                        out[n, c, 2 * r, 2 * s] = (ll - hl - lh + hh) * 0.5
                        out[n, c, 2 * r, 2 * s + 1] = (ll + hl - lh - hh) * 0.5
                        out[n, c, 2 * r + 1, 2 * s] = (ll - hl + lh - hh) * 0.5
                        out[n, c, 2 * r + 1, 2 * s + 1] = (ll + hl + lh + hh) * 0.5
