"""Thunder: a thumbnail-based lightweight image denoiser on a numpy autodiff core."""

from .analysis import CostReport, build_report, count_flops, count_params, pca_rank, subspace_ranks
from .autodiff import Parameter, Tensor, backward, no_grad, precision, set_precision
from .checkpoint import CheckpointError, load_checkpoint, save_checkpoint
from .conv import conv2d, pixel_shuffle
from .data import DataConfig, NoiseSpec, PatchPair, add_noise, load_image, save_image, synth_clean
from .kernels import BACKEND
from .losses import LossWeights, loss_total, psnr, ssim, ssim_value
from .network import ModelConfig, Thunder, project
from .optim import AdamState, adam_step, lr_at
from .training import TrainConfig, denoise, evaluate, load_model, train
from .wavelet import SubbandGroup, haar_forward, haar_inverse

__version__ = "0.1.0"

__all__ = [
    "BACKEND",
    "AdamState",
    "CheckpointError",
    "CostReport",
    "DataConfig",
    "LossWeights",
    "ModelConfig",
    "NoiseSpec",
    "Parameter",
    "PatchPair",
    "SubbandGroup",
    "Tensor",
    "Thunder",
    "TrainConfig",
    "adam_step",
    "add_noise",
    "backward",
    "build_report",
    "conv2d",
    "count_flops",
    "count_params",
    "denoise",
    "evaluate",
    "haar_forward",
    "haar_inverse",
    "load_checkpoint",
    "load_image",
    "load_model",
    "loss_total",
    "lr_at",
    "no_grad",
    "pca_rank",
    "pixel_shuffle",
    "precision",
    "project",
    "psnr",
    "save_checkpoint",
    "save_image",
    "set_precision",
    "ssim",
    "ssim_value",
    "subspace_ranks",
    "synth_clean",
    "train",
]
