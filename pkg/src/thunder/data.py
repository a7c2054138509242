"""Synthetic clean images, noise models, augmentation, PPM I/O and patch streams.

Images handled here are plain ``(3, H, W)`` float arrays in [0, 1]; batches
are stacked to ``(B, 3, P, P)``. Every random draw comes from a
``numpy.random.Generator`` seeded by the caller.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.ndimage import gaussian_filter

from .autodiff import Tensor

SYNTH_KINDS = ("gradient", "checker", "smooth_field", "mixed")
AUGMENTATIONS = ("identity", "hflip", "rot90", "rot180", "rot270")


class ImageFormatError(ValueError):
    pass


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "gaussian"
    sigma: float = 25.0 / 255.0
    gain: float = 0.0

    def __post_init__(self):
        if self.kind not in ("gaussian", "poisson_gaussian"):
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.sigma < 0 or self.gain < 0:
            raise ValueError("sigma and gain must be non-negative")


@dataclass
class PatchPair:
    noisy: np.ndarray
    clean: np.ndarray
    meta: dict = field(default_factory=dict)


def _rng(*seed_parts):
    return np.random.default_rng([int(s) & 0xFFFFFFFF for s in seed_parts])


# ------------------------------------------------------------------ synthesis


def _gradient(rng, h, w):
    x = np.linspace(0.0, 1.0, w)
    y = np.linspace(0.0, 1.0, h)
    img = np.empty((3, h, w))
    img[0] = np.broadcast_to(x, (h, w))
    lo, hi = np.sort(rng.uniform(0.0, 1.0, 2))
    img[1] = lo + (hi - lo) * y[:, None] * np.ones((1, w))
    angle = rng.uniform(0, 2 * np.pi)
    ramp = np.cos(angle) * x[None, :] + np.sin(angle) * y[:, None]
    img[2] = (ramp - ramp.min()) / max(np.ptp(ramp), 1e-12)
    return img


def _checker(rng, h, w):
    cell = int(rng.integers(4, max(5, min(h, w) // 3)))
    yy, xx = np.mgrid[0:h, 0:w]
    mask = ((yy // cell + xx // cell) % 2).astype(np.float64)
    colors = rng.uniform(0.0, 1.0, size=(2, 3))
    return colors[0][:, None, None] * (1 - mask) + colors[1][:, None, None] * mask


def _smooth_field(rng, h, w, sigma=4.0):
    noise = rng.uniform(0.0, 1.0, size=(3, h, w))
    img = np.stack([gaussian_filter(c, sigma, mode="wrap") for c in noise])
    lo = img.min(axis=(1, 2), keepdims=True)
    span = np.maximum(img.max(axis=(1, 2), keepdims=True) - lo, 1e-12)
    return (img - lo) / span


def _shapes(rng, h, w, count):
    img = np.broadcast_to(rng.uniform(0.0, 1.0, size=(3, 1, 1)), (3, h, w)).copy()
    yy, xx = np.mgrid[0:h, 0:w]
    for _ in range(count):
        color = rng.uniform(0.0, 1.0, size=3)[:, None, None]
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        if rng.random() < 0.5:
            r = rng.uniform(min(h, w) / 12, min(h, w) / 3)
            mask = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
        else:
            hh, ww = rng.uniform(h / 10, h / 2), rng.uniform(w / 10, w / 2)
            mask = (np.abs(yy - cy) <= hh / 2) & (np.abs(xx - cx) <= ww / 2)
        img = np.where(mask[None], color, img)
    return img


def _mixed(rng, h, w):
    base = _shapes(rng, h, w, int(rng.integers(4, 10)))
    field_ = _smooth_field(rng, h, w, sigma=float(rng.uniform(3.0, 8.0)))
    grad = _gradient(rng, h, w)
    a, b = rng.uniform(0.1, 0.3), rng.uniform(0.0, 0.3)
    img = (1 - a - b) * base + a * field_ + b * grad
    if rng.random() < 0.5:
        img = 0.7 * img + 0.3 * _checker(rng, h, w)
    lo, hi = img.min(), img.max()
    return (img - lo) / max(hi - lo, 1e-12)


def synth_clean(seed, size, kind="mixed"):
    """Deterministic synthetic RGB image in [0, 1], shape (3, H, W)."""
    h, w = (size, size) if np.isscalar(size) else size
    rng = _rng(seed, SYNTH_KINDS.index(kind) if kind in SYNTH_KINDS else 99)
    if kind == "gradient":
        img = _gradient(rng, h, w)
    elif kind == "checker":
        img = _checker(rng, h, w)
    elif kind == "smooth_field":
        img = _smooth_field(rng, h, w)
    elif kind == "mixed":
        img = _mixed(rng, h, w)
    else:
        raise ValueError(f"unknown synthetic kind {kind!r}; choose from {SYNTH_KINDS}")
    return np.clip(img, 0.0, 1.0)


def add_noise(clean, spec: NoiseSpec, seed):
    """Gaussian or Poisson-Gaussian noise, clipped to [0, 1]."""
    clean = np.asarray(clean)
    rng = _rng(seed, 7919)
    if spec.sigma == 0 and spec.gain == 0:
        return clean.copy()
    if spec.kind == "gaussian":
        noisy = clean + spec.sigma * rng.standard_normal(clean.shape)
    else:
        shot = np.sqrt(spec.gain * np.clip(clean, 0.0, None)) * rng.standard_normal(clean.shape)
        noisy = clean + shot + spec.sigma * rng.standard_normal(clean.shape)
    return np.clip(noisy, 0.0, 1.0).astype(clean.dtype, copy=False)


def apply_augmentation(img, op):
    """Pixel permutation on the last two axes; ``op`` is one of AUGMENTATIONS."""
    if op == "identity":
        return img
    if op == "hflip":
        return img[..., ::-1]
    if op.startswith("rot"):
        return np.rot90(img, k=int(op[3:]) // 90, axes=(-2, -1))
    raise ValueError(f"unknown augmentation {op!r}")


def augment(pair: PatchPair, seed):
    op = AUGMENTATIONS[int(_rng(seed, 104729).integers(len(AUGMENTATIONS)))]
    meta = dict(pair.meta, augmentation=op)
    return PatchPair(
        np.ascontiguousarray(apply_augmentation(pair.noisy, op)),
        np.ascontiguousarray(apply_augmentation(pair.clean, op)),
        meta,
    )


def random_crop(images, size, rng):
    """Crop the same window from each (3, H, W) array."""
    _, h, w = images[0].shape
    if h < size or w < size:
        raise ValueError(f"cannot crop {size}x{size} from {h}x{w}")
    y = int(rng.integers(0, h - size + 1))
    x = int(rng.integers(0, w - size + 1))
    return [im[:, y : y + size, x : x + size] for im in images]


# ------------------------------------------------------------------ PPM files

_TOKEN = re.compile(rb"\s*(?:#[^\n]*\n\s*)*(\S+)")


def _read_header(buf):
    pos, values = 0, []
    for _ in range(4):
        m = _TOKEN.match(buf, pos)
        if not m:
            raise ImageFormatError("truncated PPM header")
        values.append(m.group(1))
        pos = m.end()
    if pos >= len(buf) or buf[pos : pos + 1] not in (b" ", b"\n", b"\r", b"\t"):
        raise ImageFormatError("PPM header must end with a single whitespace byte")
    return values, pos + 1


def load_image(path):
    """Read a binary 8-bit PPM (P6) into a (3, H, W) float32 array in [0, 1]."""
    buf = Path(path).read_bytes()
    values, start = _read_header(buf)
    if values[0] != b"P6":
        raise ImageFormatError(f"{path}: not a binary PPM (magic {values[0][:8]!r})")
    try:
        w, h, maxval = (int(v) for v in values[1:])
    except ValueError:
        raise ImageFormatError(f"{path}: malformed PPM header") from None
    if w <= 0 or h <= 0 or maxval != 255:
        raise ImageFormatError(f"{path}: unsupported PPM geometry {w}x{h} maxval {maxval}")
    payload = buf[start:]
    if len(payload) != w * h * 3:
        raise ImageFormatError(f"{path}: expected {w * h * 3} pixel bytes, found {len(payload)}")
    pixels = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return (pixels.transpose(2, 0, 1).astype(np.float32)) / np.float32(255.0)


def quantize(img):
    """Map [0, 1] floats to 0..255 bytes, rounding halves up."""
    img = np.asarray(img, dtype=np.float64)
    return np.floor(np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)


def save_image(img, path):
    img = np.asarray(img.data if isinstance(img, Tensor) else img)
    if img.ndim == 4 and img.shape[0] == 1:
        img = img[0]
    if img.ndim != 3 or img.shape[0] != 3:
        raise ValueError(f"save_image expects a (3, H, W) image, got {img.shape}")
    _, h, w = img.shape
    data = quantize(img).transpose(1, 2, 0).tobytes()
    with open(path, "wb") as fh:
        fh.write(b"P6\n%d %d\n255\n" % (w, h))
        fh.write(data)


# ------------------------------------------------------------------ datasets


class SyntheticSource:
    """Clean images generated on demand from (seed, index)."""

    def __init__(self, count, size, seed=0, kind="mixed"):
        self.count, self.size, self.seed, self.kind = count, size, seed, kind
        self._cache = {}

    def __len__(self):
        return self.count

    def get(self, index):
        if index not in self._cache:
            self._cache[index] = synth_clean(self.seed * 1_000_003 + index, self.size, self.kind).astype(np.float32)
        return self._cache[index], None, f"synth-{self.seed}-{index}"


class DirectorySource:
    """Pairs ``root/clean/*.ppm`` with ``root/noisy/*.ppm`` by basename.

    If ``root/noisy`` is absent, noise is synthesised on the fly.
    """

    def __init__(self, root):
        root = Path(root)
        clean_dir, noisy_dir = root / "clean", root / "noisy"
        if not clean_dir.is_dir():
            raise FileNotFoundError(f"missing clean image directory: {clean_dir}")
        self.names = sorted(p.name for p in clean_dir.glob("*.ppm"))
        if not self.names:
            raise FileNotFoundError(f"no .ppm files in {clean_dir}")
        self.clean_dir = clean_dir
        self.noisy_dir = noisy_dir if noisy_dir.is_dir() else None
        if self.noisy_dir is not None:
            missing = [n for n in self.names if not (noisy_dir / n).exists()]
            if missing:
                raise FileNotFoundError(f"noisy counterparts missing for {missing[:3]} in {noisy_dir}")
        self._cache = {}

    def __len__(self):
        return len(self.names)

    def get(self, index):
        if index not in self._cache:
            name = self.names[index]
            clean = load_image(self.clean_dir / name)
            noisy = load_image(self.noisy_dir / name) if self.noisy_dir is not None else None
            if noisy is not None and noisy.shape != clean.shape:
                raise ImageFormatError(f"{name}: clean {clean.shape} and noisy {noisy.shape} differ")
            self._cache[index] = (clean, noisy, os.path.splitext(name)[0])
        return self._cache[index]


@dataclass
class DataConfig:
    patch: int = 64
    batch: int = 8
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    augment: bool = True
    multiple: int = 4

    def __post_init__(self):
        if self.patch % self.multiple:
            raise ValueError(f"patch size {self.patch} must be divisible by {self.multiple}")


def make_pair(source, index, config: DataConfig, seed, epoch):
    clean, noisy, sid = source.get(index)
    rng = _rng(seed, epoch, index, 1)
    if noisy is None:
        (clean_p,) = random_crop([clean], config.patch, rng)
        noise_seed = int(rng.integers(0, 2**31))
        noisy_p = add_noise(clean_p, config.noise, noise_seed)
    else:
        clean_p, noisy_p = random_crop([clean, noisy], config.patch, rng)
        noise_seed = None
    pair = PatchPair(
        np.ascontiguousarray(noisy_p, dtype=np.float32),
        np.ascontiguousarray(clean_p, dtype=np.float32),
        {"source": sid, "noise_seed": noise_seed, "sigma": config.noise.sigma},
    )
    if config.augment:
        pair = augment(pair, int(rng.integers(0, 2**31)))
    return pair


def batches_per_epoch(source, config: DataConfig):
    return len(source) // config.batch


def batch_at(source, config: DataConfig, seed, step):
    """The ``step``-th batch of the stream, computable without replaying earlier ones."""
    per_epoch = batches_per_epoch(source, config)
    if per_epoch == 0:
        raise ValueError(f"dataset of {len(source)} images cannot fill a batch of {config.batch}")
    epoch, offset = divmod(step, per_epoch)
    order = _rng(seed, epoch, 0).permutation(len(source))
    idx = order[offset * config.batch : (offset + 1) * config.batch]
    pairs = [make_pair(source, int(i), config, seed, epoch) for i in idx]
    return np.stack([p.noisy for p in pairs]), np.stack([p.clean for p in pairs]), pairs


def dataset_iter(source, config: DataConfig, seed, epoch=0):
    """Yield (noisy, clean) batches for one epoch; the last partial batch is dropped."""
    per_epoch = batches_per_epoch(source, config)
    for k in range(per_epoch):
        noisy, clean, _ = batch_at(source, config, seed, epoch * per_epoch + k)
        yield noisy, clean


class ArraySource:
    """In-memory (clean, noisy) images; ``noisy`` may be None for on-the-fly noise."""

    def __init__(self, clean, noisy=None, prefix="array"):
        self.clean = [np.ascontiguousarray(c, dtype=np.float32) for c in clean]
        self.noisy = None if noisy is None else [np.ascontiguousarray(n, dtype=np.float32) for n in noisy]
        self.prefix = prefix

    def __len__(self):
        return len(self.clean)

    def get(self, index):
        noisy = None if self.noisy is None else self.noisy[index]
        return self.clean[index], noisy, f"{self.prefix}-{index}"
