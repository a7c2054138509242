"""Command-line entry point: train, denoise, eval, inspect, analyze-subspace.

Exit codes: 0 success, 1 usage, 2 I/O, 3 numerical failure. Reports go to
standard output as tab-separated text.
"""

from __future__ import annotations

import argparse
import logging
import math
import sys
from pathlib import Path

import numpy as np

from .analysis import build_report, subspace_ranks
from .checkpoint import CheckpointError
from .data import DirectorySource, ImageFormatError, NoiseSpec, SyntheticSource, add_noise, load_image, save_image
from .losses import psnr, ssim_value
from .network import ABLATIONS, ModelConfig
from .training import LOG_COLUMNS, NumericalError, TrainConfig, denoise, load_model, train

EXIT_OK, EXIT_USAGE, EXIT_IO, EXIT_NUMERIC = 0, 1, 2, 3

PUBLISHED_PARAMS_M = 2.68
PUBLISHED_GFLOPS = 18.81


class UsageError(Exception):
    pass


# key -> (section, field, type)
CONFIG_KEYS = {
    "model.k": ("model", "K", int),
    "model.m": ("model", "M", int),
    "model.q": ("model", "Q", int),
    "model.nhl_per_spb": ("model", "nhl_per_spb", int),
    "model.nhl_per_tsb": ("model", "nhl_per_tsb", int),
    "train.lr0": ("train", "lr0", float),
    "train.batch": ("train", "batch", int),
    "train.iters": ("train", "iters", int),
    "train.decay_every": ("train", "decay_every", int),
    "train.patch": ("train", "patch", int),
    "train.ckpt_every": ("train", "ckpt_every", int),
    "train.val_every": ("train", "val_every", int),
    "train.augment": ("train", "augment", bool),
    "train.out": ("run", "out", str),
    "loss.alpha": ("train", "alpha", float),
    "loss.beta": ("train", "beta", float),
    "data.sigma": ("train", "sigma", float),
    "data.root": ("run", "root", str),
    "data.synthetic": ("run", "synthetic", int),
    "data.size": ("run", "size", int),
    "data.val": ("run", "val", int),
    "seed": ("both", "seed", int),
}

RUN_DEFAULTS = {"out": "runs/thunder", "root": None, "synthetic": 200, "size": 96, "val": 0}


def _parse_value(key, text, kind):
    try:
        if kind is bool:
            low = text.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(text)
            return low in ("true", "1", "yes")
        return kind(text)
    except ValueError:
        raise UsageError(f"config key {key}: cannot parse {text!r} as {kind.__name__}") from None


def parse_config(text):
    """Parse flat ``key = value`` lines into (ModelConfig kwargs, TrainConfig kwargs, run options)."""
    model, train_kw, run = {}, {}, dict(RUN_DEFAULTS)
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"config line {lineno}: expected 'key = value', got {raw.strip()!r}")
        key, value = (part.strip() for part in line.split("=", 1))
        key = key.lower()
        if key not in CONFIG_KEYS:
            raise UsageError(f"config line {lineno}: unknown key {key!r}")
        section, name, kind = CONFIG_KEYS[key]
        parsed = _parse_value(key, value, kind)
        if section == "model":
            model[name] = parsed
        elif section == "train":
            train_kw[name] = parsed
        elif section == "run":
            run[name] = parsed
        else:
            model[name] = train_kw[name] = parsed
    return model, train_kw, run


def load_config(path, args):
    model_kw, train_kw, run = ({}, {}, dict(RUN_DEFAULTS)) if path is None else parse_config(_read_text(path))
    for flag in ABLATIONS:
        if getattr(args, flag, False):
            model_kw[flag] = True
    try:
        return ModelConfig(**model_kw), TrainConfig(**train_kw), run
    except ValueError as exc:
        raise UsageError(str(exc)) from None


def _read_text(path):
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(f"config file not found: {path}")
    return path.read_text()


def _require(path, what="file"):
    path = Path(path)
    ok = path.is_dir() if what == "directory" else path.exists()
    if not ok:
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _ppm_files(path):
    path = _require(path, "input")
    if path.is_dir():
        files = sorted(path.glob("*.ppm"))
        if not files:
            raise FileNotFoundError(f"no .ppm files in {path}")
        return files
    return [path]


def _fmt(x):
    return "inf" if math.isinf(x) else f"{x:.4f}"


# ----------------------------------------------------------------- subcommands


def cmd_train(args, out):
    model_cfg, train_cfg, run = load_config(args.config, args)
    out_dir = Path(args.out or run["out"])
    if run["root"] is not None:
        source = DirectorySource(_require(run["root"], "directory"))
    else:
        source = SyntheticSource(run["synthetic"], run["size"], seed=model_cfg.seed)
    val_pairs = None
    if run["val"]:
        # held-out images come from a different generator seed than the training set
        val_src = SyntheticSource(run["val"], run["size"], seed=model_cfg.seed + 1)
        spec = NoiseSpec("gaussian", train_cfg.sigma)
        val_pairs = []
        for i in range(len(val_src)):
            clean = val_src.get(i)[0]
            val_pairs.append((add_noise(clean, spec, 10_000 + i), clean))
    resume = _require(args.resume) if args.resume else None
    if resume is None:
        out.write("\t".join(LOG_COLUMNS) + "\n")
    result = train(model_cfg, train_cfg, source, out_dir=out_dir, resume=resume, val_pairs=val_pairs, log_stream=out)
    logging.getLogger(__name__).info("finished at step %d, checkpoint %s", result.step, out_dir / "latest.thdr")
    return EXIT_OK


def cmd_denoise(args, out):
    model, _, _ = load_model(_require(args.ckpt))
    inputs = _ppm_files(args.input)
    dest = Path(args.output)
    to_dir = len(inputs) > 1 or Path(args.input).is_dir() or dest.is_dir()
    if to_dir:
        dest.mkdir(parents=True, exist_ok=True)
    out.write("file\toutput\n")
    for src in inputs:
        result = denoise(model, load_image(src))
        target = dest / src.name if to_dir else dest
        save_image(result, target)
        out.write(f"{src}\t{target}\n")
    return EXIT_OK


def cmd_eval(args, out):
    model, _, _ = load_model(_require(args.ckpt))
    clean_dir = _require(args.clean_dir, "directory")
    noisy_dir = _require(args.noisy_dir, "directory")
    names = sorted(p.name for p in clean_dir.glob("*.ppm"))
    if not names:
        raise FileNotFoundError(f"no .ppm files in {clean_dir}")
    out.write("image\tpsnr\tssim\tpsnr_noisy\tssim_noisy\n")
    totals = []
    for name in names:
        clean = load_image(clean_dir / name)
        noisy = load_image(_require(noisy_dir / name))
        if noisy.shape != clean.shape:
            raise ImageFormatError(f"{name}: clean {clean.shape} and noisy {noisy.shape} differ")
        result = denoise(model, noisy)
        row = (psnr(result, clean), ssim_value(result, clean), psnr(noisy, clean), ssim_value(noisy, clean))
        totals.append(row)
        out.write(name + "\t" + "\t".join(_fmt(v) for v in row) + "\n")
    means = np.mean(np.array(totals, dtype=np.float64), axis=0)
    out.write("mean\t" + "\t".join(_fmt(float(v)) for v in means) + "\n")
    return EXIT_OK


def cmd_inspect(args, out):
    model_cfg, _, _ = load_config(args.config, args)
    try:
        report = build_report(model_cfg, args.input_size)
    except ValueError as exc:
        raise UsageError(str(exc)) from None
    out.write(report.to_tsv() + "\n")
    out.write(f"summary\tparams\t{report.params}\tflops\t{report.flops}\tinput\t{args.input_size}x{args.input_size}\n")
    out.write("# flops count multiplies and adds separately (2 x MACs)\n")
    out.write(
        f"diagnostic\tthis_build\t{report.params / 1e6:.3f}M params\t{report.flops / 1e9:.3f} GFlops"
        f"\tpublished\t{PUBLISHED_PARAMS_M}M params\t{PUBLISHED_GFLOPS} GFlops\tnot asserted\n"
    )
    return EXIT_OK


def cmd_analyze(args, out):
    model, _, _ = load_model(_require(args.ckpt))
    m = model.config.multiple
    out.write("image\tlevel\trank_input\trank_projected\tenergy\n")
    for src in _ppm_files(args.input):
        img = load_image(src)
        h, w = img.shape[1] - img.shape[1] % m, img.shape[2] - img.shape[2] % m
        if h == 0 or w == 0:
            raise ImageFormatError(f"{src}: image smaller than {m}x{m}")
        try:
            rows = subspace_ranks(model, img[:, :h, :w], args.energy)
        except ValueError as exc:
            raise UsageError(str(exc)) from None
        for level, pre, post in rows:
            out.write(f"{src.name}\t{level}\t{pre}\t{post}\t{args.energy}\n")
    return EXIT_OK


# ----------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _add_ablations(p):
    for flag in ABLATIONS:
        p.add_argument("--" + flag.replace("_", "-"), dest=flag, action="store_true")


def build_parser():
    parser = _Parser(prog="thunder", description="Thunder denoiser")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)

    p = sub.add_parser("train", help="train a model from a config file")
    p.add_argument("--config", required=True)
    p.add_argument("--resume")
    p.add_argument("--out", help="output directory (overrides train.out)")
    _add_ablations(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("denoise", help="denoise a PPM file or a directory of them")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--out", dest="output", required=True)
    p.set_defaults(func=cmd_denoise)

    p = sub.add_parser("eval", help="PSNR/SSIM table over matching clean/noisy PPMs")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--clean-dir", required=True)
    p.add_argument("--noisy-dir", required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("inspect", help="parameter and FLOP accounting")
    p.add_argument("--config")
    p.add_argument("--input-size", type=int, default=256)
    _add_ablations(p)
    p.set_defaults(func=cmd_inspect)

    p = sub.add_parser("analyze-subspace", help="principal-component ranks before and after projection")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", dest="input", required=True)
    p.add_argument("--energy", type=float, default=0.99)
    p.set_defaults(func=cmd_analyze)
    return parser


def main(argv=None, stdout=None, stderr=None):
    stdout = stdout or sys.stdout
    stderr = stderr or sys.stderr
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError(parser.format_usage().strip())
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, stream=stderr)
        return args.func(args, stdout)
    except UsageError as exc:
        stderr.write(f"usage error: {exc}\n")
        return EXIT_USAGE
    except (FileNotFoundError, ImageFormatError, CheckpointError, OSError) as exc:
        stderr.write(f"i/o error: {exc}\n")
        return EXIT_IO
    except NumericalError as exc:
        stderr.write(f"numerical failure: {exc}\n")
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
