"""The Thunder network: thumbnail encoder, subspace-projection refiner, glue."""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .autodiff import Tensor, as_tensor, concat, matmul, sigmoid, split
from .blocks import CSP, NHL, TSB, GlobalAttention, SRes, act, interpolate_thumbnail
from .linalg import RIDGE, solve_spd
from .module import Conv, Module, _join
from .wavelet import SubbandGroup, haar_forward, haar_inverse

ABLATIONS = ("no_projection", "no_spr", "no_csp", "no_global", "no_thumbnail_loss", "end_to_end_residual")


@dataclass
class ModelConfig:
    K: int = 2
    M: int = 4
    Q: int = 8
    nhl_per_spb: int = 2
    nhl_per_tsb: int = 1
    no_projection: bool = False
    no_spr: bool = False
    no_csp: bool = False
    no_global: bool = False
    no_thumbnail_loss: bool = False
    end_to_end_residual: bool = False
    seed: int = 0

    def __post_init__(self):
        if self.K < 1 or self.M < 1:
            raise ValueError(f"K and M must be >= 1, got K={self.K}, M={self.M}")
        if not 1 <= self.Q <= 64:
            raise ValueError(f"Q must lie in [1, 64], got {self.Q}")
        if self.nhl_per_spb < 0 or self.nhl_per_tsb < 0:
            raise ValueError("NHL counts must be non-negative")

    @property
    def uses_global(self):
        return not self.no_global

    @property
    def multiple(self):
        """Input extents must be divisible by this."""
        return 2**self.K

    def with_ablations(self, **flags):
        unknown = set(flags) - set(ABLATIONS)
        if unknown:
            raise ValueError(f"unknown ablation flags {sorted(unknown)}")
        return replace(self, **flags)

    def to_dict(self):
        return {f.name: getattr(self, f.name) for f in fields(self)}


def level_channels(j):
    """Channels of a full Haar packet of an RGB image after j levels: 3 * 4^j."""
    return 3 * 4**j


def high_channels(j):
    """Non-thumbnail channels at level j: 3 * 4^j - 3."""
    return level_channels(j) - 3


@dataclass
class BasisSet:
    V: Tensor  # (batch, pixels, Q)
    level: int

    @property
    def Q(self):
        return self.V.shape[2]


@dataclass
class EncoderOutputs:
    thumbnail: Tensor
    skips: list  # H_j for j = 1..K, each Cat(N, S)
    attended: Tensor  # H_a
    global_feature: Tensor | None


@dataclass
class ThunderOutput:
    i_t: Tensor
    i_c: Tensor
    thumbnail: Tensor
    encoder: EncoderOutputs | None = None
    projected: list = field(default_factory=list)  # H~ per level, deepest first

    def __iter__(self):
        return iter((self.i_t, self.i_c, self.thumbnail))


def project(h, basis, ridge=RIDGE):
    """Map each channel of ``h`` by P = V (V^T V + ridge I)^-1 V^T.

    ``h`` is (B, C, H, W) and ``basis.V`` is (B, H*W, Q).
    """
    h = as_tensor(h)
    V = basis.V if isinstance(basis, BasisSet) else as_tensor(basis)
    b, c, hh, ww = h.shape
    n = hh * ww
    if V.shape[0] != b or V.shape[1] != n:
        raise ValueError(f"project: basis of shape {V.shape} does not match {b} samples of {n} pixels")
    rows = h.reshape((b, c, n))
    vt = V.transpose((0, 2, 1))
    gram = matmul(vt, V)
    coeff = solve_spd(gram, matmul(vt, rows.transpose((0, 2, 1))), ridge=ridge)
    out = matmul(V, coeff).transpose((0, 2, 1))
    return out.reshape((b, c, hh, ww))


class BasisEstimator(Module):
    """Cat(skip, decoder feature) -> conv3x3 -> act -> conv3x3 (Q channels) -> flatten."""

    def __init__(self, name, channels, q, rng, hidden=None):
        super().__init__(name)
        hidden = hidden or 2 * q
        self.q = q
        self.conv1 = Conv(_join(name, "conv1"), 2 * channels, hidden, 3, rng)
        self.conv2 = Conv(_join(name, "conv2"), hidden, q, 3, rng)

    def __call__(self, h_skip, h_dec, level=0):
        if h_skip.shape[2:] != h_dec.shape[2:]:
            raise ValueError(f"{self.name}: spatial extents differ, {h_skip.shape[2:]} vs {h_dec.shape[2:]}")
        feat = self.conv2(act(self.conv1(concat([h_skip, h_dec], axis=1))))
        b, q, hh, ww = feat.shape
        return BasisSet(feat.reshape((b, q, hh * ww)).transpose((0, 2, 1)), level)


class AttentionRefiner(Module):
    """Projection-free fallback: gate = sigmoid(conv1x1(SRes(decoder feature))), returns gate * skip."""

    def __init__(self, name, channels, rng):
        super().__init__(name)
        self.res = SRes(_join(name, "res"), channels, rng)
        self.out = Conv(_join(name, "out"), channels, channels, 1, rng)

    def __call__(self, h_skip, h_dec):
        return sigmoid(self.out(self.res(h_dec))) * h_skip


class SPB(Module):
    """One refinement level: skip refinement followed by NHL blocks."""

    def __init__(self, name, level, config, rng):
        super().__init__(name)
        self.level = level
        ch = high_channels(level)
        if config.no_projection:
            self.refiner = AttentionRefiner(_join(name, "attention"), ch, rng)
            self.basis = None
        else:
            self.basis = BasisEstimator(_join(name, "basis"), ch, config.Q, rng)
            self.refiner = None
        self.nhls = []
        for i in range(config.nhl_per_spb):
            self.nhls.append(self.add_module(f"nhl{i}", NHL(_join(name, f"nhl{i}"), level_channels(level), rng)))

    def refine(self, h_skip, h_hat):
        if self.basis is None:
            return self.refiner(h_skip, h_hat), None
        basis = self.basis(h_skip, h_hat, self.level)
        return project(h_skip, basis), basis


class Thunder(Module):
    """Full model. Parameters are created from ``config.seed`` in a fixed order."""

    def __init__(self, config: ModelConfig | None = None):
        super().__init__("")
        config = config or ModelConfig()
        self.config = config
        rng = np.random.default_rng(config.seed)
        self.encoder_blocks = []
        for j in range(1, config.K + 1):
            tsbs = []
            for i in range(config.M):
                name = f"tse.eb{j}.tsb{i}"
                tsbs.append(
                    self.add_module(
                        f"eb{j}_tsb{i}",
                        TSB(
                            name,
                            level_channels(j),
                            rng,
                            n_nhl=config.nhl_per_tsb,
                            uses_global=config.uses_global,
                            level=j,
                            thumb_gain=0.5 if i == 0 else 1.0,
                        ),
                    )
                )
            self.encoder_blocks.append(tsbs)
        if config.uses_global:
            self.ga = GlobalAttention("ga", level_channels(config.K), high_channels(config.K), rng)
        else:
            self.ga = None
        self.csp = None if config.no_csp else CSP("csp", config.K, rng)
        self.spbs = {}
        if not config.no_spr:
            for j in range(config.K, 0, -1):
                self.spbs[j] = self.add_module(f"spb{j}", SPB(f"spr.spb{j}", j, config, rng))

    # -- encoder -------------------------------------------------------------

    def encode(self, noisy):
        noisy = as_tensor(noisy)
        _check_extents(noisy, self.config)
        cur, g = noisy, None
        skips = []
        group = None
        for j, tsbs in enumerate(self.encoder_blocks, start=1):
            ht = haar_forward(cur)
            if g is not None:
                g = haar_forward(g)
            for tsb in tsbs:
                group, g = tsb(ht, g)
                ht = group.merged()
            skips.append(concat([group.N, group.S], axis=1))
            cur = ht
        deepest = skips[-1]
        attended = self.ga(g, deepest) if self.ga is not None else deepest
        return EncoderOutputs(group.T, skips, attended, g)

    # -- thumbnail to full resolution ---------------------------------------

    def lift(self, thumbnail):
        if self.csp is None:
            return interpolate_thumbnail(thumbnail, self.config.K)
        return self.csp(thumbnail)

    # -- refiner ---------------------------------------------------------------

    def refine(self, i_t, enc):
        """Return (signal residual, projected skips deepest-first)."""
        K = self.config.K
        packets, cur = {}, i_t
        for j in range(1, K + 1):
            cur = haar_forward(cur)
            packets[j] = cur
        state = packets[K]
        projected = []
        for j in range(K, 0, -1):
            h_hat = split(packets[j], [3, high_channels(j)], axis=1)[1]
            h_skip = enc.attended if j == K else enc.skips[j - 1]
            spb = self.spbs[j]
            refined, _ = spb.refine(h_skip, h_hat)
            projected.append(refined)
            low, high = split(state, [3, high_channels(j)], axis=1)
            state = concat([low, high + refined], axis=1)
            if spb.nhls:
                group = SubbandGroup.from_tensor(state, j)
                for nhl in spb.nhls:
                    group = nhl(group)
                state = group.merged()
            state = haar_inverse(state)
        return state - i_t, projected

    def __call__(self, noisy):
        noisy = as_tensor(noisy)
        enc = self.encode(noisy)
        i_t = self.lift(enc.thumbnail)
        if self.config.no_spr:
            return ThunderOutput(i_t, i_t, enc.thumbnail, enc, [])
        residual, projected = self.refine(i_t, enc)
        base = noisy if self.config.end_to_end_residual else i_t
        return ThunderOutput(i_t, base + residual, enc.thumbnail, enc, projected)


def _check_extents(x, config):
    if x.ndim != 4 or x.shape[1] != 3:
        raise ValueError(f"expected (batch, 3, H, W) input, got {x.shape}")
    m = config.multiple
    if x.shape[2] % m or x.shape[3] % m:
        raise ValueError(f"input extents {x.shape[2]}x{x.shape[3]} must be divisible by 2^K = {m}")


def tse_forward(model: Thunder, noisy):
    return model.encode(noisy)


def spr_forward(model: Thunder, i_t, enc):
    return model.refine(i_t, enc)[0]


def thunder_forward(model: Thunder, noisy):
    return model(noisy)
