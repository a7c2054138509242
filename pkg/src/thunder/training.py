"""Training loop, evaluation helpers and model/checkpoint glue."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from .autodiff import Tensor, backward, no_grad, precision
from .checkpoint import load_checkpoint, save_checkpoint
from .data import DataConfig, NoiseSpec, batch_at
from .losses import LossWeights, loss_total, psnr, ssim_value
from .network import ModelConfig, Thunder
from .optim import AdamState, adam_step, clip_grad_norm, lr_at

logger = logging.getLogger(__name__)

LOG_COLUMNS = ("iter", "lr", "total", "l_t", "l1_c", "l1_t", "l_g", "l_s")


class NumericalError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    lr0: float = 2e-4
    batch: int = 8
    iters: int = 5000
    decay_every: int = 2000
    patch: int = 64
    alpha: float = 0.6
    beta: float = 0.4
    sigma: float = 25.0 / 255.0
    seed: int = 0
    clip_norm: float = 5.0
    augment: bool = True
    ckpt_every: int = 0
    val_every: int = 0

    def __post_init__(self):
        if self.lr0 <= 0:
            raise ValueError("lr0 must be positive")
        if self.batch < 1 or self.iters < 0:
            raise ValueError("batch must be >= 1 and iters >= 0")

    def data_config(self, model_config):
        return DataConfig(
            patch=self.patch,
            batch=self.batch,
            noise=NoiseSpec("gaussian", self.sigma),
            augment=self.augment,
            multiple=model_config.multiple,
        )


# --------------------------------------------------------------- model <-> checkpoint


def model_meta(config: ModelConfig):
    return {k: float(v) for k, v in config.to_dict().items()}


def config_from_meta(meta):
    kwargs = {}
    for f in fields(ModelConfig):
        if f.name in meta:
            value = meta[f.name]
            kwargs[f.name] = bool(value) if f.type in ("bool", bool) else int(value)
    return ModelConfig(**kwargs)


def load_model(path):
    """Rebuild a model from a checkpoint; returns (model, optim state, step)."""
    params, optim, meta = load_checkpoint(path)
    config = config_from_meta(meta)
    dtypes = {a.dtype for a in params.values()}
    name = "double" if np.dtype(np.float64) in dtypes else "single"
    with precision(name):
        model = Thunder(config)
    model.load_state_dict(params)
    step = int(meta.get("step", optim.t if optim is not None else 0))
    return model, optim, step


def save_model(model, optim, path, step):
    meta = model_meta(model.config)
    meta["step"] = float(step)
    save_checkpoint(model.state_dict(), optim, path, meta)


# --------------------------------------------------------------- inference


def denoise(model, noisy):
    """Run the model on (3, H, W) or (B, 3, H, W) arrays of any extent.

    Inputs are reflect-padded to a multiple of 2^K and the output is cropped
    back and clipped to [0, 1].
    """
    noisy = np.asarray(noisy)
    single = noisy.ndim == 3
    if single:
        noisy = noisy[None]
    _, _, h, w = noisy.shape
    m = model.config.multiple
    ph, pw = (-h) % m, (-w) % m
    if ph or pw:
        mode = "reflect" if h > ph and w > pw else "edge"
        noisy = np.pad(noisy, ((0, 0), (0, 0), (0, ph), (0, pw)), mode=mode)
    dtype = model.parameters()[0].dtype
    with no_grad():
        out = model(Tensor(noisy.astype(dtype))).i_c.data
    out = np.clip(out[:, :, :h, :w], 0.0, 1.0)
    return out[0] if single else out


def evaluate(model, pairs, batch=8):
    """Mean PSNR/SSIM of the model and of the noisy input over (noisy, clean) pairs."""
    scores = {"psnr": [], "ssim": [], "psnr_noisy": [], "ssim_noisy": []}
    for start in range(0, len(pairs), batch):
        chunk = pairs[start : start + batch]
        noisy = np.stack([p[0] for p in chunk])
        clean = np.stack([p[1] for p in chunk])
        out = denoise(model, noisy)
        for o, n, c in zip(out, noisy, clean):
            scores["psnr"].append(psnr(o, c))
            scores["ssim"].append(ssim_value(o, c))
            scores["psnr_noisy"].append(psnr(n, c))
            scores["ssim_noisy"].append(ssim_value(n, c))
    return {k: float(np.mean(v)) for k, v in scores.items()}


# --------------------------------------------------------------- training


@dataclass
class TrainResult:
    model: Thunder
    optim: AdamState
    step: int
    losses: list
    validation: list


def _format_row(step, lr, values):
    return "\t".join([str(step), f"{lr:.6e}"] + [f"{v:.8e}" for v in values])


def train_step(model, optim, noisy, clean, lr, weights, clip_norm, no_thumbnail_loss):
    model.zero_grad()
    out = model(Tensor(noisy))
    report = loss_total(out, clean, weights, no_thumbnail_loss=no_thumbnail_loss, levels=model.config.K)
    values = report.values()
    if not all(math.isfinite(v) for v in values):
        raise NumericalError(f"non-finite loss {values}")
    backward(report.total)
    params = model.named_parameters()
    grads = {name: (p.grad if p.grad is not None else np.zeros_like(p.data)) for name, p in params.items()}
    norm = clip_grad_norm(grads, clip_norm)
    if not math.isfinite(norm):
        raise NumericalError("non-finite gradient norm")
    adam_step(params, grads, optim, lr)
    model.zero_grad()
    return values


def train(
    model_config: ModelConfig,
    train_config: TrainConfig,
    source,
    out_dir=None,
    resume=None,
    val_pairs=None,
    log_stream=None,
    stop_at=None,
):
    """Train a model; returns a :class:`TrainResult`.

    ``source`` supplies clean (and optionally noisy) images, see
    :mod:`thunder.data`. With ``out_dir`` set, the per-iteration log goes
    to ``train_log.tsv`` (and to ``log_stream`` too, if given), validation scores to ``val_log.tsv`` and
    checkpoints to ``ckpt_<step>.thdr`` / ``latest.thdr``. ``resume`` is a
    checkpoint path to continue from. ``stop_at`` halts early (for
    interrupted-run tests) without changing the schedule.
    """
    out_dir = Path(out_dir) if out_dir is not None else None
    if out_dir is not None:
        out_dir.mkdir(parents=True, exist_ok=True)
    if resume is not None:
        model, optim, step = load_model(resume)
        if optim is None:
            optim = AdamState()
        model_config = model.config
    else:
        model, optim, step = Thunder(model_config), AdamState(), 0
    weights = LossWeights(train_config.alpha, train_config.beta)
    data_cfg = train_config.data_config(model_config)
    end = train_config.iters if stop_at is None else min(stop_at, train_config.iters)

    log_fh = open(out_dir / "train_log.tsv", "a" if resume is not None else "w") if out_dir is not None else None
    if log_fh is not None and resume is None:
        log_fh.write("\t".join(LOG_COLUMNS) + "\n")
    sinks = [s for s in (log_fh, log_stream) if s is not None]
    val_fh = open(out_dir / "val_log.tsv", "a" if resume is not None else "w") if out_dir is not None and val_pairs else None

    losses, validation = [], []
    try:
        if step == 0 and out_dir is not None:
            save_model(model, optim, out_dir / "ckpt_0.thdr", 0)
        while step < end:
            noisy, clean, _ = batch_at(source, data_cfg, train_config.seed, step)
            lr = lr_at(step, train_config.lr0, train_config.decay_every)
            try:
                values = train_step(
                    model, optim, noisy, clean, lr, weights, train_config.clip_norm, model_config.no_thumbnail_loss
                )
            except NumericalError:
                if out_dir is not None:
                    save_model(model, optim, out_dir / "last_good.thdr", step)
                raise
            step += 1
            losses.append(values)
            row = _format_row(step, lr, values) + "\n"
            for sink in sinks:
                sink.write(row)
            if out_dir is not None and train_config.ckpt_every and step % train_config.ckpt_every == 0:
                save_model(model, optim, out_dir / f"ckpt_{step}.thdr", step)
            if val_pairs and train_config.val_every and step % train_config.val_every == 0:
                scores = evaluate(model, val_pairs)
                validation.append((step, scores))
                if val_fh is not None:
                    val_fh.write(f"{step}\t{scores['psnr']:.4f}\t{scores['ssim']:.5f}\n")
                logger.info("step %d: val psnr %.3f ssim %.4f", step, scores["psnr"], scores["ssim"])
        if out_dir is not None:
            save_model(model, optim, out_dir / "latest.thdr", step)
    finally:
        if log_fh is not None:
            log_fh.close()
        if val_fh is not None:
            val_fh.close()
    return TrainResult(model, optim, step, losses, validation)
