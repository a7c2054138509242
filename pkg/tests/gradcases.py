"""Finite-difference check cases: every op, block and loss, on small double inputs.

Each builder takes an rng and returns ``(f, tensors)`` where ``f()`` is a
scalar Tensor. Builders must be called under double precision.
"""

import numpy as np

from thunder import autodiff as ad
from thunder.autodiff import Tensor
from thunder.blocks import CSP, NHL, SRes, TSB, GlobalAttention, PairFusion
from thunder.conv import bilinear_upsample, conv2d, filter_valid, gaussian_window, pixel_shuffle
from thunder.linalg import solve_spd
from thunder.losses import loss_gradient, loss_l1, loss_ssim, loss_thumbnail, loss_total
from thunder.network import AttentionRefiner, BasisEstimator, ModelConfig, Thunder, project
from thunder.wavelet import SubbandGroup, haar_forward, haar_inverse


def leaf(rng, *shape, low=None):
    data = rng.standard_normal(shape)
    if low is not None:
        data = low + rng.random(shape)
    return Tensor(data, requires_grad=True)


def randomize(module, rng, scale=0.2):
    """Overwrite every parameter with noise so no branch is trivially zero."""
    for p in module.parameters():
        p.assign(p.data + scale * rng.standard_normal(p.shape))
    return module


def probe(out, rng):
    """Scalar <out, r> with a fixed random r, so every output entry matters."""
    r = rng.standard_normal(out.shape)
    return lambda y: ad.sum_all(ad.mul(y, r))


def _unary(op, low=None, shape=(3, 4)):
    def build(rng):
        x = leaf(rng, *shape, low=low)
        if low is None:
            # keep clear of kinks in abs / leaky_relu
            x.data[np.abs(x.data) < 0.05] += 0.2
        p = probe(op(x), rng)
        return (lambda: p(op(x))), [x]

    return build


def _binary(op):
    def build(rng):
        a, b = leaf(rng, 3, 4), leaf(rng, 3, 4, low=0.5)
        p = probe(op(a, b), rng)
        return (lambda: p(op(a, b))), [a, b]

    return build


def _scalar(op, low=None):
    def build(rng):
        x = leaf(rng, 3, 4, low=low)
        x.data[np.abs(x.data) < 0.05] += 0.2
        return (lambda: op(x)), [x]

    return build


def _module_case(make, inputs, call=None):
    def build(rng):
        module = randomize(make(rng), rng)
        xs = [leaf(rng, *shape) for shape in inputs]
        fn = call or (lambda m, *a: m(*a))
        out = fn(module, *xs)
        p = probe(out, rng)
        return (lambda: p(fn(module, *xs))), xs + module.parameters()

    return build


def _conv(rng):
    x, w, b = leaf(rng, 2, 3, 6, 6), leaf(rng, 4, 3, 3, 3), leaf(rng, 4)
    p = probe(conv2d(x, w, b, 1, 1), rng)
    return (lambda: p(conv2d(x, w, b, 1, 1))), [x, w, b]


def _conv_strided(rng):
    x, w = leaf(rng, 1, 2, 7, 7), leaf(rng, 3, 2, 3, 3)
    p = probe(conv2d(x, w, None, 2, 1), rng)
    return (lambda: p(conv2d(x, w, None, 2, 1))), [x, w]


def _solve(rng):
    m = rng.standard_normal((2, 4, 4))
    a = Tensor(m @ m.transpose(0, 2, 1) + 4 * np.eye(4), requires_grad=True)
    b = leaf(rng, 2, 4, 3)
    p = probe(solve_spd(a, b), rng)
    return (lambda: p(solve_spd(a, b))), [a, b]


def _filter(rng):
    x = leaf(rng, 1, 2, 13, 12)
    taps = gaussian_window()
    p = probe(filter_valid(x, taps), rng)
    return (lambda: p(filter_valid(x, taps))), [x]


def _group_call(module, x):
    return module(SubbandGroup.from_tensor(x, 1)).merged()


def _tsb_call(module, ht, g):
    group, g_out = module(ht, g)
    return ad.concat([group.merged(), g_out], axis=1)


def _project(rng):
    h, v = leaf(rng, 2, 5, 6, 6), leaf(rng, 2, 36, 4)
    p = probe(project(h, v), rng)
    return (lambda: p(project(h, v))), [h, v]


def _basis(rng):
    est = randomize(BasisEstimator("basis", 9, 4, rng), rng)
    h, g = leaf(rng, 1, 9, 6, 6), leaf(rng, 1, 9, 6, 6)
    p = probe(est(h, g).V, rng)
    return (lambda: p(est(h, g).V)), [h, g] + est.parameters()


def _image_pair(rng, size=16, batch=1):
    clean = 0.2 + 0.6 * rng.random((batch, 3, size, size))
    image = Tensor(np.clip(clean + 0.1 * rng.standard_normal(clean.shape), 0, 1), requires_grad=True)
    return image, clean


def _loss_thumb(rng):
    clean = rng.random((1, 3, 16, 16))
    t = leaf(rng, 1, 3, 4, 4)
    return (lambda: loss_thumbnail(t, clean, 2)), [t]


def _loss_l1(rng):
    image, clean = _image_pair(rng)
    return (lambda: loss_l1(image, clean)), [image]


def _loss_grad(rng):
    image, clean = _image_pair(rng)
    return (lambda: loss_gradient(image, clean)), [image]


def _loss_ssim(rng):
    image, clean = _image_pair(rng)
    return (lambda: loss_ssim(image, clean)), [image]


class _Outputs:
    def __init__(self, i_t, i_c, thumbnail):
        self.i_t, self.i_c, self.thumbnail = i_t, i_c, thumbnail


def _loss_total(rng):
    i_c, clean = _image_pair(rng)
    i_t, _ = _image_pair(rng)
    thumb = leaf(rng, 1, 3, 4, 4)
    return (lambda: loss_total(_Outputs(i_t, i_c, thumb), clean, levels=2).total), [i_t, i_c, thumb]


def _thunder_loss(rng):
    model = randomize(Thunder(ModelConfig(K=2, M=1, Q=4, nhl_per_spb=1)), rng, scale=0.05)
    clean = 0.2 + 0.6 * rng.random((1, 3, 16, 16))
    noisy = clean + 0.1 * rng.standard_normal(clean.shape)
    return (lambda: loss_total(model(Tensor(noisy)), clean).total), model.parameters()


OPS = {
    "add": _binary(ad.add),
    "sub": _binary(ad.sub),
    "mul": _binary(ad.mul),
    "div": _binary(ad.div),
    "matmul": _binary(lambda a, b: ad.matmul(a, ad.transpose(b, (1, 0)))),
    "square": _unary(ad.square),
    "sqrt": _unary(ad.sqrt, low=0.5),
    "absolute": _unary(ad.absolute),
    "sigmoid": _unary(ad.sigmoid),
    "leaky_relu": _unary(ad.leaky_relu),
    "sum_axis": _unary(lambda x: ad.sum_axis(x, 0)),
    "reshape": _unary(lambda x: ad.reshape(x, (2, 6))),
    "transpose": _unary(lambda x: ad.transpose(x, (1, 0))),
    "getitem": _unary(lambda x: x[1:, ::2]),
    "concat": _unary(lambda x: ad.concat([x, ad.square(x)], axis=1)),
    "split": _unary(lambda x: ad.split(x, [1, 3], axis=1)[1]),
    "sum_all": _scalar(ad.sum_all),
    "mean_all": _scalar(ad.mean_all),
    "l1_mean": _scalar(ad.l1_mean),
    "l2_mean": _scalar(ad.l2_mean),
    "conv2d": _conv,
    "conv2d_strided": _conv_strided,
    "pixel_shuffle": _unary(lambda x: pixel_shuffle(x, 2), shape=(1, 8, 3, 3)),
    "haar_forward": _unary(haar_forward, shape=(1, 3, 4, 6)),
    "haar_inverse": _unary(haar_inverse, shape=(1, 12, 2, 3)),
    "bilinear_upsample": _unary(lambda x: bilinear_upsample(x, 2), shape=(1, 3, 3, 3)),
    "filter_valid": _filter,
    "solve_spd": _solve,
}

BLOCKS = {
    "sres": _module_case(lambda rng: SRes("sres", 4, rng), [(1, 4, 6, 6)]),
    "pair_fusion": _module_case(lambda rng: PairFusion("pair_fusion", 6, 3, rng), [(1, 6, 5, 5), (1, 3, 5, 5)]),
    "nhl": _module_case(lambda rng: NHL("nhl", 12, rng), [(1, 12, 4, 4)], _group_call),
    "tsb": _module_case(lambda rng: TSB("tsb", 12, rng, level=1), [(1, 12, 4, 4), (1, 12, 4, 4)], _tsb_call),
    "tsb_no_global": _module_case(
        lambda rng: TSB("tsb", 12, rng, uses_global=False, level=1),
        [(1, 12, 4, 4)],
        lambda m, x: m(x)[0].merged(),
    ),
    "global_attention": _module_case(lambda rng: GlobalAttention("ga", 12, 9, rng), [(1, 12, 4, 4), (1, 9, 4, 4)]),
    "csp": _module_case(lambda rng: CSP("csp", 1, rng), [(1, 3, 3, 3)]),
    "estimate_basis": _basis,
    "project": _project,
    "attention_refiner": _module_case(lambda rng: AttentionRefiner("att", 9, rng), [(1, 9, 4, 4), (1, 9, 4, 4)]),
}

LOSSES = {
    "loss_thumbnail": _loss_thumb,
    "loss_l1": _loss_l1,
    "loss_gradient": _loss_grad,
    "loss_ssim": _loss_ssim,
    "loss_total": _loss_total,
}

MODEL = {"thunder_training_loss": _thunder_loss}

ALL = {**OPS, **BLOCKS, **LOSSES}
