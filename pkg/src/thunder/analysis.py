"""Parameter and FLOP accounting, plus the principal-component rank diagnostic.

The layer plan is derived from a :class:`~thunder.network.ModelConfig`
alone, without building the network, so it doubles as an independent check
on the constructed model's parameter count.

Conventions: one FLOP is a multiply or an add, so a conv costs
``2 * k^2 * C_in * C_out * H_out * W_out``. Elementwise work (activations,
residual adds, gating) is not counted. Each Haar level costs 8 operations
per output coefficient. The projection counts every matrix product as
``2 * m * k * n`` plus ``Q^3 / 3`` (rounded) for the Cholesky factorisation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .autodiff import Tensor, no_grad
from .network import ModelConfig, high_channels, level_channels

HAAR_OPS_PER_COEFF = 8


@dataclass(frozen=True)
class ConvSpec:
    """A convolution layer: ``cin -> cout`` with a ``k x k`` kernel."""

    name: str
    cin: int
    cout: int
    k: int
    bias: bool = True

    @property
    def params(self):
        return self.cin * self.cout * self.k * self.k + (self.cout if self.bias else 0)

    def flops(self, h, w):
        return 2 * self.k * self.k * self.cin * self.cout * h * w


@dataclass
class LayerCost:
    name: str
    kind: str
    params: int
    flops: int
    detail: str = ""


@dataclass
class CostReport:
    rows: list = field(default_factory=list)
    input_size: int | None = None

    @property
    def params(self):
        return sum(r.params for r in self.rows)

    @property
    def flops(self):
        return sum(r.flops for r in self.rows)

    def add(self, name, kind, params=0, flops=0, detail=""):
        self.rows.append(LayerCost(name, kind, int(params), int(flops), detail))

    def add_conv(self, spec: ConvSpec, h, w):
        self.add(spec.name, f"conv{spec.k}x{spec.k}", spec.params, spec.flops(h, w), f"{spec.cin}->{spec.cout} @ {h}x{w}")

    def to_tsv(self):
        lines = ["layer\tkind\tparams\tflops\tdetail"]
        lines += [f"{r.name}\t{r.kind}\t{r.params}\t{r.flops}\t{r.detail}" for r in self.rows]
        lines.append(f"total\t-\t{self.params}\t{self.flops}\t")
        return "\n".join(lines)


def haar_flops(channels_out, h_out, w_out):
    return HAAR_OPS_PER_COEFF * channels_out * h_out * w_out


def projection_flops(pixels, channels, q):
    gram = 2 * pixels * q * q
    rhs = 2 * pixels * q * channels
    factor = round(q**3 / 3)
    solve = 2 * q * q * channels  # forward and back substitution
    recon = 2 * pixels * q * channels
    return gram + rhs + factor + solve + recon


# ----------------------------------------------------------------- layer plan


def _sres(prefix, ch):
    return [ConvSpec(f"{prefix}.conv1", ch, ch, 3), ConvSpec(f"{prefix}.conv2", ch, ch, 3)]


def _fusion(prefix, ca, cb):
    return (
        _sres(f"{prefix}.res_a", ca)
        + _sres(f"{prefix}.res_b", cb)
        + _sres(f"{prefix}.res_joint", ca + cb)
        + [ConvSpec(f"{prefix}.reduce", ca + cb, cb, 1)]
    )


def _nhl(prefix, channels):
    n = channels - 6
    return _sres(f"{prefix}.res_n", n) + _fusion(f"{prefix}.fuse_ns", n, 3) + _fusion(f"{prefix}.fuse_st", 3, 3)


def build_report(config: ModelConfig, input_size=256):
    """Full per-layer cost of one forward pass on a 3 x size x size image."""
    if input_size % config.multiple:
        raise ValueError(f"input size {input_size} must be divisible by 2^K = {config.multiple}")
    rep = CostReport(input_size=input_size)
    K = config.K
    size = lambda j: input_size >> j  # noqa: E731

    for j in range(1, K + 1):
        c, s = level_channels(j), size(j)
        rep.add(f"tse.eb{j}.haar", "haar", flops=haar_flops(c, s, s), detail=f"-> {c}x{s}x{s}")
        if config.uses_global and j > 1:
            rep.add(f"tse.eb{j}.global_haar", "haar", flops=haar_flops(c, s, s), detail=f"-> {c}x{s}x{s}")
        for i in range(config.M):
            pre = f"tse.eb{j}.tsb{i}"
            convs = [ConvSpec(f"{pre}.mixer", c, c, 1)]
            for m in range(config.nhl_per_tsb):
                convs += _nhl(f"{pre}.nhl{m}", c)
            if config.uses_global:
                convs += [
                    ConvSpec(f"{pre}.global1", c, c, 3),
                    ConvSpec(f"{pre}.global2", c, c, 3),
                    ConvSpec(f"{pre}.fuse", c, c, 1),
                ]
            for spec in convs:
                rep.add_conv(spec, s, s)

    cK, sK = level_channels(K), size(K)
    if config.uses_global:
        rep.add_conv(ConvSpec("ga.conv1", cK, cK, 1), sK, sK)
        rep.add_conv(ConvSpec("ga.conv2", cK, cK - 3, 1), sK, sK)
        rep.add("ga.scale", "scale", params=cK - 3, detail="per-channel gate scale")

    if not config.no_csp:
        width = 3 * 4**K
        rep.add_conv(ConvSpec("csp.conv1", 3, width, 3), sK, sK)
        rep.add_conv(ConvSpec("csp.conv2", width, width, 3), sK, sK)

    if not config.no_spr:
        for j in range(1, K + 1):
            c, s = level_channels(j), size(j)
            rep.add(f"spr.haar{j}", "haar", flops=haar_flops(c, s, s), detail=f"thumbnail packet -> {c}x{s}x{s}")
        for j in range(K, 0, -1):
            c, s, hc = level_channels(j), size(j), high_channels(j)
            pre = f"spr.spb{j}"
            if config.no_projection:
                for spec in _sres(f"{pre}.attention.res", hc) + [ConvSpec(f"{pre}.attention.out", hc, hc, 1)]:
                    rep.add_conv(spec, s, s)
            else:
                rep.add_conv(ConvSpec(f"{pre}.basis.conv1", 2 * hc, 2 * config.Q, 3), s, s)
                rep.add_conv(ConvSpec(f"{pre}.basis.conv2", 2 * config.Q, config.Q, 3), s, s)
                rep.add(
                    f"{pre}.project",
                    "projection",
                    flops=projection_flops(s * s, hc, config.Q),
                    detail=f"{hc} channels onto Q={config.Q} at {s}x{s}",
                )
            for m in range(config.nhl_per_spb):
                for spec in _nhl(f"{pre}.nhl{m}", c):
                    rep.add_conv(spec, s, s)
            rep.add(f"{pre}.haar_inverse", "haar", flops=haar_flops(c, s, s), detail=f"{c}x{s}x{s} ->")
    return rep


def _as_specs(config):
    if isinstance(config, ModelConfig):
        return None
    specs = list(config)
    for spec in specs:
        if not isinstance(spec, ConvSpec):
            raise TypeError(f"expected ConvSpec entries, got {type(spec).__name__}")
    return specs


def count_params(config) -> int:
    """Weights plus biases implied by a :class:`ModelConfig` or a list of :class:`ConvSpec`."""
    specs = _as_specs(config)
    if specs is None:
        return build_report(config, config.multiple).params
    return sum(s.params for s in specs)


def count_flops(config, input_size=256) -> int:
    """FLOPs (2 x MACs) for one forward pass on a ``input_size`` square image.

    With a list of :class:`ConvSpec`, every layer is applied at that extent.
    """
    specs = _as_specs(config)
    if specs is None:
        return build_report(config, input_size).flops
    return sum(s.flops(input_size, input_size) for s in specs)


# ----------------------------------------------------------------- subspace rank


def pca_rank(feature, energy=0.99):
    """Principal components of the (channels x pixels) matrix needed to reach ``energy``.

    Uncentred: singular values of the raw matrix, squared, accumulated in
    decreasing order. An all-zero feature has rank 0.
    """
    if not 0.0 < energy <= 1.0:
        raise ValueError(f"energy fraction must lie in (0, 1], got {energy}")
    a = feature.data if isinstance(feature, Tensor) else np.asarray(feature)
    if a.ndim == 4:
        if a.shape[0] != 1:
            raise ValueError(f"pca_rank takes one sample, got batch of {a.shape[0]}")
        a = a[0]
    if a.ndim != 3:
        raise ValueError(f"expected (C, H, W) feature, got shape {a.shape}")
    mat = a.reshape(a.shape[0], -1).astype(np.float64)
    sv = np.linalg.svd(mat, compute_uv=False)
    power = sv**2
    total = power.sum()
    if total == 0.0:
        return 0
    frac = np.cumsum(power) / total
    # tolerance keeps energy=1.0 from chasing rounding noise in the tail
    return int(min(np.searchsorted(frac, energy - 1e-12) + 1, len(sv)))


def subspace_ranks(model, noisy, energy=0.99):
    """(level, rank of projection input, rank of projected output) per level, deepest first.

    ``noisy`` is one (3, H, W) image with extents divisible by 2^K. The
    model must use the projection refiner.
    """
    cfg = model.config
    if cfg.no_spr or cfg.no_projection:
        raise ValueError("subspace ranks need a model with the projection refiner enabled")
    x = np.asarray(noisy)[None].astype(model.parameters()[0].dtype)
    with no_grad():
        out = model(Tensor(x))
    rows = []
    for idx, level in enumerate(range(cfg.K, 0, -1)):
        h_in = out.encoder.attended if level == cfg.K else out.encoder.skips[level - 1]
        rows.append((level, pca_rank(h_in, energy), pca_rank(out.projected[idx], energy)))
    return rows
