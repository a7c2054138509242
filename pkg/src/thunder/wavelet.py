"""Orthonormal 2-D Haar analysis/synthesis and sub-band regrouping."""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .autodiff import Tensor, _make, as_tensor, concat, split
from .conv import conv2d


def _run_forward(a):
    n, c, h, w = a.shape
    out = np.empty((n, 4 * c, h // 2, w // 2), dtype=a.dtype)
    kernels.haar_forward(np.ascontiguousarray(a), out)
    return out


def _run_inverse(a):
    n, c4, h, w = a.shape
    out = np.empty((n, c4 // 4, 2 * h, 2 * w), dtype=a.dtype)
    kernels.haar_inverse(np.ascontiguousarray(a), out)
    return out


def haar_forward(x):
    """One Haar level: (N, C, H, W) -> (N, 4C, H/2, W/2).

    Each 2x2 block [[a, b], [c, d]] becomes LL=(a+b+c+d)/2,
    HL=(-a+b-c+d)/2, LH=(-a-b+c+d)/2, HH=(a-b-c+d)/2. Output channels are
    grouped [LL..., HL..., LH..., HH...], each group in input channel order.
    """
    x = as_tensor(x)
    if x.ndim != 4:
        raise ValueError(f"haar_forward expects NCHW input, got shape {x.shape}")
    if x.shape[2] % 2 or x.shape[3] % 2:
        raise ValueError(f"haar_forward needs even extents, got {x.shape[2]}x{x.shape[3]}")
    # orthonormal, so the adjoint is the inverse transform
    return _make(_run_forward(x.data), (x,), lambda g: (_run_inverse(g),))


def haar_inverse(y):
    """Exact inverse of :func:`haar_forward`."""
    y = as_tensor(y)
    if y.ndim != 4:
        raise ValueError(f"haar_inverse expects NCHW input, got shape {y.shape}")
    if y.shape[1] % 4:
        raise ValueError(f"haar_inverse needs a channel count divisible by 4, got {y.shape[1]}")
    return _make(_run_inverse(y.data), (y,), lambda g: (_run_forward(g),))


@dataclass
class SubbandGroup:
    """Thumbnail (3 ch), high-signal (3 ch) and noise (rest) sub-bands at one level."""

    T: Tensor
    S: Tensor
    N: Tensor
    level: int = 0

    def __post_init__(self):
        if self.T.shape[1] != 3 or self.S.shape[1] != 3:
            raise ValueError(f"T and S must have 3 channels, got {self.T.shape[1]} and {self.S.shape[1]}")
        if not (self.T.shape[2:] == self.S.shape[2:] == self.N.shape[2:]):
            raise ValueError("sub-band groups must share spatial extents")

    @property
    def channels(self):
        return 6 + self.N.shape[1]

    def merged(self):
        return concat([self.T, self.S, self.N], axis=1)

    @classmethod
    def from_tensor(cls, x, level=0):
        c = x.shape[1]
        if c < 7:
            raise ValueError(f"need at least 7 channels to form T/S/N groups, got {c}")
        t, s, n = split(x, [3, 3, c - 6], axis=1)
        return cls(t, s, n, level)


def regroup(ht, mixer_weight, mixer_bias=None, level=0):
    """Mix all sub-band channels with a learned 1x1 convolution, then split T/S/N."""
    ht = as_tensor(ht)
    c = ht.shape[1]
    if c < 7:
        raise ValueError(f"regroup needs at least 7 channels, got {c}")
    if mixer_weight.shape != (c, c, 1, 1):
        raise ValueError(f"regroup mixer must be ({c}, {c}, 1, 1), got {mixer_weight.shape}")
    return SubbandGroup.from_tensor(conv2d(ht, mixer_weight, mixer_bias), level)
