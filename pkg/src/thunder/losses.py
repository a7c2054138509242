"""Training objective and image-quality metrics."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .autodiff import Tensor, absolute, as_tensor, mean_all, no_grad, sqrt, square
from .conv import box_downsample, filter_valid, gaussian_window

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_C1 = 0.01**2
SSIM_C2 = 0.03**2


@dataclass
class LossWeights:
    alpha: float = 0.6
    beta: float = 0.4

    def __post_init__(self):
        if self.alpha < 0 or self.beta < 0:
            raise ValueError("loss weights must be non-negative")


@dataclass
class LossReport:
    total: Tensor
    l_t: Tensor
    l1_c: Tensor
    l1_t: Tensor
    l_g: Tensor
    l_s: Tensor

    @property
    def refinement(self):
        """Everything except the thumbnail term."""
        return self.total - self.l_t

    def values(self):
        """Plain floats in log order: total, l_t, l1_c, l1_t, l_g, l_s."""
        return tuple(float(t.data) for t in (self.total, self.l_t, self.l1_c, self.l1_t, self.l_g, self.l_s))


def _same_shape(a, b, what):
    if a.shape != b.shape:
        raise ValueError(f"{what}: shape mismatch {a.shape} vs {b.shape}")


def loss_thumbnail(thumb, clean, levels):
    """RMS distance between the thumbnail and the 2^K box-averaged clean image."""
    thumb = as_tensor(thumb)
    target = box_downsample(np.asarray(clean.data if isinstance(clean, Tensor) else clean), 2**levels)
    _same_shape(thumb, target, "loss_thumbnail")
    return sqrt(mean_all(square(thumb - target.astype(thumb.dtype))))


def loss_l1(image, clean):
    image, clean = as_tensor(image), as_tensor(clean, like=as_tensor(image))
    _same_shape(image, clean, "loss_l1")
    return mean_all(absolute(image - clean))


def loss_gradient(image, clean):
    """Mean |dx I - dx X| + mean |dy I - dy X| with forward differences."""
    image = as_tensor(image)
    clean = as_tensor(clean, like=image)
    _same_shape(image, clean, "loss_gradient")
    if image.shape[2] < 2 or image.shape[3] < 2:
        raise ValueError(f"loss_gradient needs extents >= 2, got {image.shape[2:]}")
    diff = image - clean
    dx = diff[:, :, :, 1:] - diff[:, :, :, :-1]
    dy = diff[:, :, 1:, :] - diff[:, :, :-1, :]
    return mean_all(absolute(dx)) + mean_all(absolute(dy))


def ssim_map(a, b):
    a = as_tensor(a)
    b = as_tensor(b, like=a)
    _same_shape(a, b, "ssim")
    if a.shape[2] < SSIM_WINDOW or a.shape[3] < SSIM_WINDOW:
        raise ValueError(f"ssim needs extents >= {SSIM_WINDOW}, got {a.shape[2:]}")
    taps = gaussian_window(SSIM_WINDOW, SSIM_SIGMA, np.float64)
    mu_a, mu_b = filter_valid(a, taps), filter_valid(b, taps)
    var_a = filter_valid(a * a, taps) - mu_a * mu_a
    var_b = filter_valid(b * b, taps) - mu_b * mu_b
    cov = filter_valid(a * b, taps) - mu_a * mu_b
    num = (2.0 * mu_a * mu_b + SSIM_C1) * (2.0 * cov + SSIM_C2)
    den = (mu_a * mu_a + mu_b * mu_b + SSIM_C1) * (var_a + var_b + SSIM_C2)
    return num / den


def ssim(a, b):
    """Mean SSIM (11x11 Gaussian window, sigma 1.5, unit dynamic range)."""
    return mean_all(ssim_map(a, b))


def loss_ssim(image, clean):
    return 1.0 - ssim(image, clean)


def loss_total(outputs, clean, weights=None, no_thumbnail_loss=False, levels=None):
    """Hierarchical objective: L_t + alpha*L1(c) + beta*L1(t) + L_G + L_S."""
    weights = weights or LossWeights()
    i_t, i_c, thumb = outputs.i_t, outputs.i_c, outputs.thumbnail
    clean = as_tensor(clean, like=i_c)
    if levels is None:
        levels = int(round(math.log2(clean.shape[2] // thumb.shape[2])))
    if no_thumbnail_loss:
        l_t = Tensor(np.zeros((), dtype=i_c.dtype))
    else:
        l_t = loss_thumbnail(thumb, clean, levels)
    l1_c = loss_l1(i_c, clean)
    l1_t = loss_l1(i_t, clean)
    l_g = loss_gradient(i_c, clean)
    l_s = loss_ssim(i_c, clean)
    return combine(l_t, l1_c, l1_t, l_g, l_s, weights)


def combine(l_t, l1_c, l1_t, l_g, l_s, weights):
    total = l_t + weights.alpha * l1_c + weights.beta * l1_t + l_g + l_s
    return LossReport(total, l_t, l1_c, l1_t, l_g, l_s)


def psnr(a, b, peak=1.0):
    """Peak signal-to-noise ratio in dB; ``inf`` when the inputs are identical."""
    a = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64)
    _same_shape(a, b, "psnr")
    mse = float(np.mean((a - b) ** 2))
    if mse == 0.0:
        return math.inf
    return 10.0 * math.log10(peak * peak / mse)


def ssim_value(a, b):
    """Plain-float SSIM for evaluation (double precision, no graph)."""
    a = np.asarray(a.data if isinstance(a, Tensor) else a, dtype=np.float64)
    b = np.asarray(b.data if isinstance(b, Tensor) else b, dtype=np.float64)
    if a.ndim == 3:
        a, b = a[None], b[None]
    with no_grad():
        return float(ssim(Tensor(a), Tensor(b)).data)
