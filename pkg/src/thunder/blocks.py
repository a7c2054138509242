"""Reusable Thunder blocks.

``SRes`` is the self-residual map x + R(x); ``PairFusion`` fuses two sub-band
groups; ``NHL`` updates a (T, S, N) group; ``TSB`` pairs the NHL stream
with a global stream; ``GlobalAttention`` gates the deepest high-frequency
feature; ``CSP`` lifts the thumbnail back to full resolution.
"""

from dataclasses import dataclass

from .autodiff import Parameter, concat, get_dtype, leaky_relu, mul, sigmoid
from .conv import bilinear_upsample, pixel_shuffle
from .module import LEAKY_SLOPE, Conv, Module, _join
from .wavelet import SubbandGroup, regroup

import numpy as np


@dataclass
class BlockConfig:
    width_per_group: int
    activation: str = "leaky_relu"
    uses_global: bool = True

    def __post_init__(self):
        if self.width_per_group < 1:
            raise ValueError("width_per_group must be >= 1")
        if self.activation != "leaky_relu":
            raise ValueError(f"unsupported activation {self.activation!r}")


def act(x):
    return leaky_relu(x, LEAKY_SLOPE)


# The last conv of every residual branch starts at zero so deep stacks
# begin as the identity map; CSP gets this much Kaiming noise instead.
CSP_NOISE = 0.1


class SRes(Module):
    """x + conv3x3(act(conv3x3(x))) at constant width."""

    def __init__(self, name, channels, rng):
        super().__init__(name)
        self.channels = channels
        self.conv1 = Conv(_join(name, "conv1"), channels, channels, 3, rng)
        self.conv2 = Conv(_join(name, "conv2"), channels, channels, 3, rng, init="zeros")

    def residual(self, x):
        return self.conv2(act(self.conv1(x)))

    def __call__(self, x):
        if x.shape[1] != self.channels:
            raise ValueError(f"{self.name}: expected {self.channels} channels, got {x.shape[1]}")
        return self.residual(x) + x


class PairFusion(Module):
    """res_joint(Cat(res_a(a), res_b(b))) reduced back to b's width by a 1x1 conv.

    The reducer starts as the selector of b's half, so with zero residual
    branches the block passes ``b`` through unchanged.
    """

    def __init__(self, name, ca, cb, rng):
        super().__init__(name)
        self.ca, self.cb = ca, cb
        self.res_a = SRes(_join(name, "res_a"), ca, rng)
        self.res_b = SRes(_join(name, "res_b"), cb, rng)
        self.res_joint = SRes(_join(name, "res_joint"), ca + cb, rng)
        self.reduce = Conv(_join(name, "reduce"), ca + cb, cb, 1, rng, init="identity")

    def __call__(self, a, b):
        if a.shape[2:] != b.shape[2:]:
            raise ValueError(f"{self.name}: spatial extents differ, {a.shape[2:]} vs {b.shape[2:]}")
        return self.reduce(self.res_joint(concat([self.res_a(a), self.res_b(b)], axis=1)))


class NHL(Module):
    """N' = res_n(N); S' = fuse(N, S); T' = fuse(S', T)."""

    def __init__(self, name, channels, rng):
        super().__init__(name)
        if channels < 7:
            raise ValueError(f"NHL needs at least 7 channels, got {channels}")
        self.channels = channels
        n = channels - 6
        self.res_n = SRes(_join(name, "res_n"), n, rng)
        self.fuse_ns = PairFusion(_join(name, "fuse_ns"), n, 3, rng)
        self.fuse_st = PairFusion(_join(name, "fuse_st"), 3, 3, rng)

    def __call__(self, g):
        n_new = self.res_n(g.N)
        s_new = self.fuse_ns(g.N, g.S)
        t_new = self.fuse_st(s_new, g.T)
        return SubbandGroup(t_new, s_new, n_new, g.level)


class TSB(Module):
    """Two-stream block: regroup + NHL chain, plus an optional global stream.

    The global stream is conv3x3 -> act -> conv3x3 over every sub-band
    channel (plus the incoming global feature); a 1x1 conv of it is added
    onto the NHL stream before the group is split again.
    """

    def __init__(self, name, channels, rng, n_nhl=1, uses_global=True, level=0, thumb_gain=1.0):
        super().__init__(name)
        self.channels, self.uses_global, self.level = channels, uses_global, level
        self.mixer = Conv(_join(name, "mixer"), channels, channels, 1, rng, init="identity")
        # thumb_gain=0.5 turns the Haar LL (2x the block mean) into a box average
        self.mixer.weight.data[:3] *= thumb_gain
        self.nhls = []
        for i in range(n_nhl):
            self.nhls.append(self.add_module(f"nhl{i}", NHL(_join(name, f"nhl{i}"), channels, rng)))
        if uses_global:
            self.global1 = Conv(_join(name, "global1"), channels, channels, 3, rng)
            self.global2 = Conv(_join(name, "global2"), channels, channels, 3, rng)
            self.fuse = Conv(_join(name, "fuse"), channels, channels, 1, rng, init="zeros")

    def __call__(self, ht, g_in=None):
        if ht.shape[1] != self.channels:
            raise ValueError(f"{self.name}: expected {self.channels} channels, got {ht.shape[1]}")
        group = regroup(ht, self.mixer.weight, self.mixer.bias, self.level)
        for nhl in self.nhls:
            group = nhl(group)
        if not self.uses_global:
            return group, None
        g_out = self.global2(act(self.global1(ht)))
        if g_in is not None:
            if g_in.shape != g_out.shape:
                raise ValueError(f"{self.name}: global feature shape {g_in.shape} != {g_out.shape}")
            g_out = g_out + g_in
        fused = group.merged() + self.fuse(g_out)
        return SubbandGroup.from_tensor(fused, self.level), g_out


class GlobalAttention(Module):
    """H_a = GA(g) * h + h, GA = scale * sigmoid(conv1x1(act(conv1x1(g))))."""

    def __init__(self, name, g_channels, h_channels, rng, hidden=None):
        super().__init__(name)
        hidden = hidden or g_channels
        self.conv1 = Conv(_join(name, "conv1"), g_channels, hidden, 1, rng)
        self.conv2 = Conv(_join(name, "conv2"), hidden, h_channels, 1, rng)
        self.scale = Parameter(np.ones((1, h_channels, 1, 1), dtype=get_dtype()), _join(name, "scale"))

    def gate(self, g):
        return mul(sigmoid(self.conv2(act(self.conv1(g)))), self.scale)

    def __call__(self, g, h):
        if g.shape[2:] != h.shape[2:]:
            raise ValueError(f"{self.name}: spatial extents differ, {g.shape[2:]} vs {h.shape[2:]}")
        return self.gate(g) * h + h


class CSP(Module):
    """conv3x3 (3 -> 3*4^K) -> act -> conv3x3 -> pixel shuffle by 2^K.

    Initialised near nearest-neighbour upsampling: conv1 copies thumbnail
    channel g into all r*r sub-pixel channels of group g and conv2 starts
    at the identity, both with a little Kaiming noise.
    """

    def __init__(self, name, levels, rng, noise=CSP_NOISE):
        super().__init__(name)
        self.factor = r = 2**levels
        width = 3 * r * r
        self.conv1 = Conv(_join(name, "conv1"), 3, width, 3, rng, init="zeros")
        w = np.zeros((width, 3, 3, 3))
        for g in range(3):
            w[g * r * r : (g + 1) * r * r, g, 1, 1] = 1.0
        w += noise * rng.normal(0.0, 1.0 / np.sqrt(27.0), size=w.shape)
        self.conv1.weight.assign(w)
        self.conv2 = Conv(_join(name, "conv2"), width, width, 3, rng, init="identity", noise=noise)

    def __call__(self, t):
        if t.shape[1] != 3:
            raise ValueError(f"{self.name}: thumbnail must have 3 channels, got {t.shape[1]}")
        return pixel_shuffle(self.conv2(act(self.conv1(t))), self.factor)


def interpolate_thumbnail(t, levels):
    """Parameter-free replacement for CSP: bilinear upsampling by 2^K."""
    return bilinear_upsample(t, 2**levels)
