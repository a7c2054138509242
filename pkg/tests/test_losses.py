import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from thunder.autodiff import Tensor
from thunder.losses import (
    LossWeights,
    combine,
    loss_gradient,
    loss_l1,
    loss_ssim,
    loss_thumbnail,
    loss_total,
    psnr,
    ssim,
    ssim_value,
)

from oracles import gradient_loss_loops, l1_loops, ssim_loops, thumbnail_loss_loops


def scalar(t):
    return float(t.data)


class Outputs:
    def __init__(self, i_t, i_c, thumbnail):
        self.i_t, self.i_c, self.thumbnail = i_t, i_c, thumbnail


# ---------------------------------------------------------------- thumbnail


def test_thumbnail_zero_at_box_average(double, rng):
    x = rng.random((1, 3, 8, 8))
    t = x.reshape(1, 3, 2, 4, 2, 4).mean(axis=(3, 5))
    assert scalar(loss_thumbnail(Tensor(t), x, 2)) == pytest.approx(0.0, abs=1e-15)


def test_thumbnail_constant_offset(double):
    x = np.full((1, 3, 8, 8), 0.3)
    t = np.full((1, 3, 2, 2), 0.3 - 0.07)
    assert scalar(loss_thumbnail(Tensor(t), x, 2)) == pytest.approx(0.07, rel=1e-12)


def test_thumbnail_matches_loops(double, rng):
    x, t = rng.random((2, 3, 16, 16)), rng.random((2, 3, 4, 4))
    assert scalar(loss_thumbnail(Tensor(t), x, 2)) == pytest.approx(thumbnail_loss_loops(t, x, 2), rel=1e-12)


def test_thumbnail_shape_mismatch():
    with pytest.raises(ValueError, match="mismatch"):
        loss_thumbnail(Tensor(np.zeros((1, 3, 3, 3))), np.zeros((1, 3, 8, 8)), 2)


# ---------------------------------------------------------------- l1 / gradient


def test_l1_examples(double, rng):
    x = rng.random((1, 3, 5, 5))
    assert scalar(loss_l1(Tensor(x), x)) == 0.0
    assert scalar(loss_l1(Tensor(x + 0.5), x)) == pytest.approx(0.5)
    y = rng.random(x.shape)
    assert scalar(loss_l1(Tensor(y), x)) == pytest.approx(l1_loops(y, x), rel=1e-12)
    with pytest.raises(ValueError):
        loss_l1(Tensor(y), x[:, :, :4])


def test_gradient_loss_examples(double, rng):
    x = rng.random((2, 3, 7, 9))
    assert scalar(loss_gradient(Tensor(x), x)) == 0.0
    assert scalar(loss_gradient(Tensor(x + 0.25), x)) == pytest.approx(0.0, abs=1e-15)
    y = rng.random(x.shape)
    assert scalar(loss_gradient(Tensor(y), x)) == pytest.approx(gradient_loss_loops(y, x), rel=1e-12)
    with pytest.raises(ValueError, match="extents"):
        loss_gradient(Tensor(np.zeros((1, 3, 1, 4))), np.zeros((1, 3, 1, 4)))


# ---------------------------------------------------------------- ssim


def test_ssim_identical_is_one(double, rng):
    x = rng.random((1, 3, 16, 16))
    assert scalar(ssim(Tensor(x), x)) == pytest.approx(1.0, abs=1e-12)
    assert scalar(loss_ssim(Tensor(x), x)) == pytest.approx(0.0, abs=1e-12)


def test_ssim_constant_patches_closed_form(double):
    a, b = 0.7, 0.2
    c1 = 0.01**2
    expected = (2 * a * b + c1) / (a * a + b * b + c1)
    got = scalar(ssim(Tensor(np.full((1, 3, 12, 12), a)), np.full((1, 3, 12, 12), b)))
    assert got == pytest.approx(expected, rel=1e-10)


def test_ssim_matches_sliding_window_oracle(double, rng):
    a = rng.random((1, 2, 13, 14))
    b = np.clip(a + 0.1 * rng.standard_normal(a.shape), 0, 1)
    assert abs(scalar(ssim(Tensor(a), b)) - ssim_loops(a, b)) <= 1e-5


def test_ssim_rejects_tiny_images():
    with pytest.raises(ValueError, match="11"):
        ssim(Tensor(np.zeros((1, 3, 10, 16))), np.zeros((1, 3, 10, 16)))


def test_ssim_value_accepts_single_images(rng):
    x = rng.random((3, 12, 12))
    assert ssim_value(x, x) == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------- total


def test_unit_sub_losses():
    one = Tensor(np.ones(()))
    report = combine(one, one, one, one, one, LossWeights())
    # alpha + beta + 1 + 1 for the refinement part, plus the thumbnail term
    assert scalar(report.refinement) == pytest.approx(3.0)
    assert scalar(report.total) == pytest.approx(4.0)


def test_total_zero_at_perfect_outputs(double, rng):
    x = rng.random((1, 3, 16, 16))
    t = x.reshape(1, 3, 4, 4, 4, 4).mean(axis=(3, 5))
    report = loss_total(Outputs(Tensor(x), Tensor(x), Tensor(t)), x)
    assert scalar(report.total) == pytest.approx(0.0, abs=1e-12)


def test_total_decomposition_and_flag(double, rng):
    x = rng.random((1, 3, 16, 16))
    outs = Outputs(Tensor(rng.random(x.shape)), Tensor(rng.random(x.shape)), Tensor(rng.random((1, 3, 4, 4))))
    r = loss_total(outs, x)
    total, l_t, l1_c, l1_t, l_g, l_s = r.values()
    assert total == pytest.approx(l_t + 0.6 * l1_c + 0.4 * l1_t + l_g + l_s, abs=1e-6)
    r2 = loss_total(outs, x, no_thumbnail_loss=True)
    assert r2.values()[1] == 0.0
    assert r2.values()[0] == pytest.approx(total - l_t, abs=1e-12)


@given(st.floats(0.0, 4.0))
def test_total_linear_in_alpha(alpha):
    vals = [Tensor(np.array(v)) for v in (0.3, 0.25, 0.1, 0.2, 0.05)]
    base = scalar(combine(*vals, LossWeights(alpha=alpha)).total)
    doubled = scalar(combine(*vals, LossWeights(alpha=2 * alpha)).total)
    assert doubled - base == pytest.approx(alpha * 0.25, abs=1e-6)


def test_negative_weights_rejected():
    with pytest.raises(ValueError):
        LossWeights(alpha=-0.1)


@given(st.integers(0, 2**31 - 1))
def test_losses_non_negative(seed):
    rng = np.random.default_rng(seed)
    a, b = rng.random((1, 3, 12, 12)), rng.random((1, 3, 12, 12))
    assert scalar(loss_l1(Tensor(a), b)) >= 0
    assert scalar(loss_gradient(Tensor(a), b)) >= 0
    assert scalar(loss_ssim(Tensor(a), b)) >= -1e-7
    assert scalar(loss_thumbnail(Tensor(a[:, :, :3, :3]), b, 2)) >= 0


# ---------------------------------------------------------------- psnr


def test_psnr_examples(rng):
    x = rng.random((3, 8, 8)) * 0.8
    assert psnr(x + 0.1, x) == pytest.approx(20.0, abs=1e-9)
    assert math.isinf(psnr(x, x))
    y = rng.random(x.shape)
    assert psnr(y, x) == pytest.approx(10 * math.log10(1 / np.mean((y - x) ** 2)), rel=1e-12)
    assert psnr(2 * (x + 0.1), 2 * x, peak=2.0) == pytest.approx(20.0, abs=1e-9)
