"""Independent reference implementations, written as plain loops.

Deliberately slow and literal; they share no code with the package.
"""

import math

import numpy as np


def conv2d_loops(x, w, b=None, stride=1, pad=0):
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    oh = (h + 2 * pad - kh) // stride + 1
    ow = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, oh, ow))
    for bi in range(n):
        for oc in range(o):
            for y in range(oh):
                for xx in range(ow):
                    acc = 0.0 if b is None else float(b[oc])
                    for ic in range(c):
                        for i in range(kh):
                            for j in range(kw):
                                iy = y * stride + i - pad
                                ix = xx * stride + j - pad
                                if 0 <= iy < h and 0 <= ix < wd:
                                    acc += x[bi, ic, iy, ix] * w[oc, ic, i, j]
                    out[bi, oc, y, xx] = acc
    return out


def pixel_shuffle_loops(x, r):
    n, c, h, w = x.shape
    g = c // (r * r)
    out = np.zeros((n, g, h * r, w * r))
    for bi in range(n):
        for ch in range(g):
            for y in range(h * r):
                for xx in range(w * r):
                    src = ch * r * r + (y % r) * r + (xx % r)
                    out[bi, ch, y, xx] = x[bi, src, y // r, xx // r]
    return out


def haar_loops(x):
    n, c, h, w = x.shape
    out = np.zeros((n, 4 * c, h // 2, w // 2))
    for bi in range(n):
        for ch in range(c):
            for y in range(h // 2):
                for xx in range(w // 2):
                    a = x[bi, ch, 2 * y, 2 * xx]
                    b = x[bi, ch, 2 * y, 2 * xx + 1]
                    cc = x[bi, ch, 2 * y + 1, 2 * xx]
                    d = x[bi, ch, 2 * y + 1, 2 * xx + 1]
                    out[bi, ch, y, xx] = (a + b + cc + d) / 2
                    out[bi, c + ch, y, xx] = (-a + b - cc + d) / 2
                    out[bi, 2 * c + ch, y, xx] = (-a - b + cc + d) / 2
                    out[bi, 3 * c + ch, y, xx] = (a - b - cc + d) / 2
    return out


def gaussian_taps(size=11, sigma=1.5):
    taps = [math.exp(-((i - (size - 1) / 2) ** 2) / (2 * sigma * sigma)) for i in range(size)]
    total = sum(taps)
    return [t / total for t in taps]


def ssim_loops(a, b, size=11, sigma=1.5, c1=0.01**2, c2=0.03**2):
    """Mean SSIM over every full 11x11 window of every channel."""
    g = gaussian_taps(size, sigma)
    n, c, h, w = a.shape
    values = []
    for bi in range(n):
        for ch in range(c):
            for y in range(h - size + 1):
                for xx in range(w - size + 1):
                    ma = mb = saa = sbb = sab = 0.0
                    for i in range(size):
                        for j in range(size):
                            wt = g[i] * g[j]
                            pa = a[bi, ch, y + i, xx + j]
                            pb = b[bi, ch, y + i, xx + j]
                            ma += wt * pa
                            mb += wt * pb
                            saa += wt * pa * pa
                            sbb += wt * pb * pb
                            sab += wt * pa * pb
                    va, vb, cov = saa - ma * ma, sbb - mb * mb, sab - ma * mb
                    num = (2 * ma * mb + c1) * (2 * cov + c2)
                    den = (ma * ma + mb * mb + c1) * (va + vb + c2)
                    values.append(num / den)
    return sum(values) / len(values)


def gradient_loss_loops(i_c, x):
    n, c, h, w = x.shape
    sx = sy = 0.0
    for bi in range(n):
        for ch in range(c):
            for y in range(h):
                for xx in range(w - 1):
                    sx += abs((i_c[bi, ch, y, xx + 1] - i_c[bi, ch, y, xx]) - (x[bi, ch, y, xx + 1] - x[bi, ch, y, xx]))
            for y in range(h - 1):
                for xx in range(w):
                    sy += abs((i_c[bi, ch, y + 1, xx] - i_c[bi, ch, y, xx]) - (x[bi, ch, y + 1, xx] - x[bi, ch, y, xx]))
    return sx / (n * c * h * (w - 1)) + sy / (n * c * (h - 1) * w)


def thumbnail_loss_loops(t, x, levels):
    s = 2**levels
    n, c, th, tw = t.shape
    total = 0.0
    for bi in range(n):
        for ch in range(c):
            for y in range(th):
                for xx in range(tw):
                    block = 0.0
                    for i in range(s):
                        for j in range(s):
                            block += x[bi, ch, y * s + i, xx * s + j]
                    total += (block / (s * s) - t[bi, ch, y, xx]) ** 2
    return math.sqrt(total / t.size)


def l1_loops(a, b):
    total = 0.0
    for u, v in zip(a.ravel(), b.ravel()):
        total += abs(u - v)
    return total / a.size


def adam_reference(grads, lr, beta1=0.9, beta2=0.999, eps=1e-8, theta0=0.0):
    """Scalar Adam recurrence with bias correction, one parameter."""
    theta, m, v = theta0, 0.0, 0.0
    history = []
    for t, g in enumerate(grads, start=1):
        m = beta1 * m + (1 - beta1) * g
        v = beta2 * v + (1 - beta2) * g * g
        m_hat = m / (1 - beta1**t)
        v_hat = v / (1 - beta2**t)
        theta -= lr * m_hat / (math.sqrt(v_hat) + eps)
        history.append(theta)
    return history
