"""Command-line entry point: ``freqvae <command> [--flags]``.

Exit codes: 0 ok, 1 bad input (flags, paths, data), 2 failure while running.
"""

import argparse
import contextlib
import json
import os
import sys
from dataclasses import fields

import numpy as np

from . import data as datamod
from . import eval_audit, favae, fusion_diffusion, imageio, spectrum
from . import nncore as nn
from . import wavelet as wv
from .errors import (ArgumentError, ConfigError, DataError, DimensionError, FavaeError,
                     StateError, TrainingError)
from .features import RandomFeatureProvider
from .nncore import gradcheck
from .nncore.checkpoint import atomic_write_bytes

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2
VALIDATION_ERRORS = (ArgumentError, ConfigError, DataError, DimensionError, FileNotFoundError)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    # argparse exits 2 on bad flags; here that is a validation error (1)
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _write_text(path, text):
    atomic_write_bytes(path, text.encode("utf-8"))


def _need_file(path, flag):
    if not os.path.isfile(path):
        raise FileNotFoundError(f"{flag}: no such file {path!r}")
    return path


def _need_dir(path, flag):
    if not os.path.isdir(path):
        raise FileNotFoundError(f"{flag}: no such directory {path!r}")
    return path


def _ensure_dir(path):
    os.makedirs(path, exist_ok=True)
    return path


# datasets ------------------------------------------------------------------

def load_dataset(source, seed=0):
    """``source`` is a directory of PPM/PGM files, a manifest file, or ``synthetic:N[:size]``.

    Returns (images (N, C, H, W), names, labels or None).
    """
    if source.startswith("synthetic:"):
        parts = source.split(":")[1:]
        try:
            n = int(parts[0])
            size = int(parts[1]) if len(parts) > 1 else 32
        except (ValueError, IndexError):
            raise DataError(f"bad synthetic dataset {source!r}; use synthetic:N or synthetic:N:SIZE") from None
        if n < 1:
            raise DataError("synthetic dataset needs N >= 1")
        imgs, labels = datamod.synthetic_textures(n, size=size, seed=seed, labels=True)
        return imgs, [f"img_{i:05d}" for i in range(n)], [int(v) for v in labels]
    if os.path.isdir(source):
        paths = imageio.list_images(source)
        if not paths:
            raise DataError(f"{source}: no .ppm/.pgm images found")
        labels = None
    elif os.path.isfile(source):
        root, entries = datamod.read_manifest(source)
        paths = [os.path.join(root, rel) for rel, _ in entries]
        labels = [c for _, c in entries]
        if any(c is None for c in labels):
            labels = None
    else:
        raise FileNotFoundError(f"--data: {source!r} is neither a directory, a manifest, nor synthetic:N")
    imgs = [imageio.read_image(p) for p in paths]
    shapes = {im.shape for im in imgs}
    if len(shapes) != 1:
        raise DataError(f"images must share one shape, found {sorted(shapes)}")
    names = [os.path.splitext(os.path.basename(p))[0] for p in paths]
    return np.stack(imgs), names, labels


def _paired_dirs(orig_dir, recon_dir):
    a = {os.path.basename(p): p for p in imageio.list_images(orig_dir)}
    b = {os.path.basename(p): p for p in imageio.list_images(recon_dir)}
    if not a:
        raise DataError(f"{orig_dir}: no .ppm/.pgm images found")
    missing = sorted(set(a) - set(b))
    if missing:
        raise DataError(f"{recon_dir}: no reconstruction for {missing[0]} ({len(missing)} missing)")
    names = sorted(a)
    x = [imageio.read_image(a[n]) for n in names]
    xh = [imageio.read_image(b[n]) for n in names]
    return names, x, xh


# config flags --------------------------------------------------------------

def _add_config_flags(p):
    p.add_argument("--config", help="key = value file; explicit flags override it")
    g = p.add_argument_group("model/training settings")
    defaults = favae.FaVaeConfig()
    for f in fields(favae.FaVaeConfig):
        kind = favae._field_kinds()[f.name]
        flag = "--" + f.name.replace("_", "-")
        g.add_argument(flag, dest=f"cfg_{f.name}", default=None, metavar=kind.upper(),
                       type={"int": int, "float": float, "str": str}[kind],
                       help=f"(default: {getattr(defaults, f.name)})")


def _config_from_args(args):
    cfg = favae.FaVaeConfig()
    if args.config:
        with open(_need_file(args.config, "--config"), encoding="utf-8") as fh:
            cfg = favae.parse_config(fh.read())
    updates = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    cfg = favae.config_with(cfg, updates)
    if cfg.value_range not in wv.VALUE_RANGES:
        raise ConfigError(f"value_range must be one of {sorted(wv.VALUE_RANGES)}")
    if cfg.norm_scheme not in ("none", "affine_per_subband"):
        raise ConfigError("norm_scheme must be none or affine_per_subband")
    return cfg


# commands ------------------------------------------------------------------

def cmd_dwt(args):
    img = imageio.read_image(_need_file(args.input, "--in"))
    s = wv.dwt2_haar(img)
    _ensure_dir(args.out_dir)
    tensors = {name: band.astype(np.float32) for name, band in zip(wv.SUBBANDS, s.bands())}
    nn.save_tensors(os.path.join(args.out_dir, "subbands.fvt"), tensors)
    for name, band in tensors.items():
        imageio.write_image(os.path.join(args.out_dir, f"{name}.pgm"), imageio.heatmap(band.mean(axis=0)))
    print(f"wrote {args.out_dir}/subbands.fvt and 4 heatmaps, subband shape {s.shape}")


def cmd_idwt(args):
    path = os.path.join(_need_dir(args.in_dir, "--in-dir"), "subbands.fvt")
    t = nn.load_tensors(_need_file(path, "--in-dir"))
    missing = [n for n in wv.SUBBANDS if n not in t]
    if missing:
        raise DataError(f"{path}: missing subband tensors {missing}")
    x = wv.idwt2_haar(wv.SubbandSet(*(t[n] for n in wv.SUBBANDS)))
    imageio.write_image(args.out, x, args.value_range)
    print(f"wrote {args.out} {x.shape}")


def cmd_train(args):
    cfg = _config_from_args(args)
    imgs, _, _ = load_dataset(args.data, cfg.seed)
    model = favae.FaVaeModel(cfg)
    trainer = favae.Trainer(model, cfg.steps)

    def report(step, out):
        if args.print_every and (step + 1) % args.print_every == 0:
            print(f"step {step + 1}: low {out['low'].total:.5f}  high {out['high'].total:.5f}", flush=True)

    log = trainer.fit(imgs, checkpoint_path=args.out, callback=report)
    favae.save_model(args.out, model)
    log_path = args.log or args.out + ".csv"
    _write_text(log_path, favae.loss_log_csv(log))
    print(f"{cfg.tokenizer_tag()} trained {cfg.steps} steps on {len(imgs)} images -> {args.out} (log {log_path})")


def cmd_reconstruct(args):
    model = favae.load_model(_need_file(args.checkpoint, "--checkpoint"))
    imgs, names, _ = load_dataset(args.data, args.seed)
    rec = favae.reconstruct(imgs, model)
    _ensure_dir(args.out_dir)
    if args.write_originals:
        _ensure_dir(args.write_originals)
    for name, x, r in zip(names, imgs, rec):
        ext = ".ppm" if r.shape[0] == 3 else ".pgm"
        imageio.write_image(os.path.join(args.out_dir, name + ext), r, model.cfg.value_range)
        if args.write_originals:
            imageio.write_image(os.path.join(args.write_originals, name + ext), x, model.cfg.value_range)
    print(f"wrote {len(rec)} reconstructions to {args.out_dir}")


def _labels_for(names, manifest):
    _, entries = datamod.read_manifest(_need_file(manifest, "--labels"))
    by_name = {os.path.splitext(os.path.basename(rel))[0]: c for rel, c in entries}
    out = []
    for n in names:
        stem = os.path.splitext(n)[0]
        if by_name.get(stem) is None:
            raise DataError(f"--labels: no class id for {n}")
        out.append(by_name[stem])
    return out


def cmd_audit(args):
    orig, recon = (_need_dir(d, "--pairs") for d in args.pairs)
    names, x, xh = _paired_dirs(orig, recon)
    labels = _labels_for(names, args.labels) if args.labels else None
    if args.top_k and labels is None:
        raise ArgumentError("--top-k needs --labels")
    for a, b, n in zip(x, xh, names):
        if a.shape != b.shape:
            raise DimensionError(f"{n}: shapes differ {a.shape} vs {b.shape}")
    shapes = {a.shape for a in x}
    if len(shapes) != 1:
        raise DataError(f"audit needs one image shape, found {sorted(shapes)}")
    provider = RandomFeatureProvider(x[0].shape[0], seed=args.feature_seed)
    report = eval_audit.audit(np.stack(x), np.stack(xh), labels, provider)
    if args.top_k:
        eval_audit.top_k(report.per_class, args.top_k)  # validates k
    _write_text(args.report, report.to_json())
    if args.text:
        _write_text(args.text, report.to_text(args.name, args.model_config))
    if args.class_csv:
        if labels is None:
            raise ArgumentError("--class-csv needs --labels")
        _write_text(args.class_csv, report.class_csv(args.top_k))
    print(report.to_text(args.name, args.model_config), end="")


def cmd_spectrum(args):
    if bool(args.pairs) == bool(args.images):
        raise ArgumentError("give exactly one of --pairs ORIG RECON or --images DIR")
    if args.pairs:
        _, x, xh = _paired_dirs(*(_need_dir(d, "--pairs") for d in args.pairs))
    else:
        d = _need_dir(args.images, "--images")
        x = [imageio.read_image(p) for p in imageio.list_images(d)]
        if not x:
            raise DataError(f"{d}: no .ppm/.pgm images found")
        xh = [np.zeros_like(a) for a in x]
    shape = x[0].shape
    crop = None
    if any(n & (n - 1) for n in shape[-2:]):
        x = [spectrum.center_crop_pow2(a)[0] for a in x]
        xh = [spectrum.center_crop_pow2(a)[0] for a in xh]
        crop = list(x[0].shape[-2:])
    g = spectrum.average_spectra(zip(x, xh))
    prof = spectrum.radial_profile(g, args.bins)
    low, high = spectrum.band_energy(g, args.cutoff)
    lines = ["radius,mean_power"] + [f"{r!r},{p!r}" for r, p in prof]
    _write_text(args.csv, "\n".join(lines) + "\n")
    if args.pgm:
        imageio.write_image(args.pgm, imageio.heatmap(spectrum.log_view(g).psd))
    meta = {"count": g.count, "input_shape": list(shape[-2:]), "center_crop": crop,
            "cutoff": args.cutoff, "low_energy": low, "high_energy": high, "bins": args.bins}
    if args.meta:
        _write_text(args.meta, json.dumps(meta, indent=2) + "\n")
    if crop:
        print(f"note: center-cropped {list(shape[-2:])} -> {crop} (power-of-two FFT)")
    print(f"{g.count} spectra, band energy low {low:.6g} high {high:.6g} at cutoff {args.cutoff}")


def cmd_extract_latents(args):
    model = favae.load_model(_need_file(args.checkpoint, "--checkpoint"))
    imgs, _, _ = load_dataset(args.data, args.seed)
    lat = fusion_diffusion.extract_latents(imgs, model)
    nn.save_tensors(args.out, lat.tensors())
    print(f"wrote {len(lat)} fused latents {lat.data.shape[1:]} (split at {lat.split_index}) to {args.out}")


def cmd_train_diff(args):
    lat = fusion_diffusion.LatentSet.from_tensors(nn.load_tensors(_need_file(args.latents, "--latents")))
    log = []
    dm = fusion_diffusion.diffusion_train(lat, fusion_diffusion.NoiseSchedule.linear(args.timesteps),
                                          width=args.width, emb_dim=args.emb_dim, steps=args.steps,
                                          batch=args.batch, lr=args.lr, seed=args.seed, log=log)
    nn.save_tensors(args.out, dm.state_tensors())
    if args.log:
        _write_text(args.log, "step,loss\n" + "".join(f"{i},{v!r}\n" for i, v in enumerate(log)))
    tail = np.mean(log[-50:]) if log else float("nan")
    print(f"trained denoiser {args.steps} steps, final eps-loss ~{tail:.4f} -> {args.out}")


def cmd_sample(args):
    model = favae.load_model(_need_file(args.checkpoint, "--checkpoint"))
    dm = fusion_diffusion.DiffusionModel.from_tensors(nn.load_tensors(_need_file(args.denoiser, "--denoiser")))
    if args.n < 1:
        raise ArgumentError("--n must be >= 1")
    imgs = fusion_diffusion.generate_images(dm, model, args.n, seed=args.seed)
    _ensure_dir(args.out_dir)
    for i, im in enumerate(imgs):
        ext = ".ppm" if im.shape[0] == 3 else ".pgm"
        imageio.write_image(os.path.join(args.out_dir, f"sample_{i:04d}{ext}"), im, model.cfg.value_range)
    print(f"wrote {len(imgs)} samples to {args.out_dir}")


def cmd_grad_check(args):
    dtype = np.dtype(args.dtype)
    res = gradcheck.run_suite(dtype, seed=args.seed)
    tol = gradcheck.TOLERANCE[dtype.name]
    for name, err in res.items():
        print(f"{name:24s} {err:.3e}")
    worst = max(res.values())
    print(f"max relative error: {worst:.3e} (tolerance {tol:g}, {dtype.name})")
    if not worst < tol:
        raise StateError(f"gradient check failed: {worst:.3e} >= {tol:g}")


# parser --------------------------------------------------------------------

def build_parser():
    fmt = argparse.ArgumentDefaultsHelpFormatter
    p = _Parser(prog="freqvae", description="Frequency-split VAE toolkit (numpy only).")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True

    def cmd(name, fn, helptext):
        sp = sub.add_parser(name, help=helptext, description=helptext, formatter_class=fmt)
        sp.set_defaults(fn=fn)
        return sp

    sp = cmd("dwt", cmd_dwt, "level-1 Haar analysis of one PPM/PGM image")
    sp.add_argument("--in", dest="input", required=True, help="input image")
    sp.add_argument("--out-dir", required=True, help="writes subbands.fvt plus ll/lh/hl/hh.pgm heatmaps")

    sp = cmd("idwt", cmd_idwt, "synthesize an image from a dwt output directory")
    sp.add_argument("--in-dir", required=True, help="directory holding subbands.fvt")
    sp.add_argument("--out", required=True, help="output .ppm/.pgm")
    sp.add_argument("--value-range", default="unit", choices=sorted(wv.VALUE_RANGES),
                    help="pixel range the subbands were computed in")

    sp = cmd("train", cmd_train, "train the two-branch model")
    sp.add_argument("--data", required=True, help="image dir, manifest file, or synthetic:N[:SIZE]")
    sp.add_argument("--out", required=True, help="checkpoint path (.fvt)")
    sp.add_argument("--log", default=None, help="loss CSV path (default: <out>.csv)")
    sp.add_argument("--print-every", type=int, default=50, help="progress line interval, 0 for silent")
    _add_config_flags(sp)

    sp = cmd("reconstruct", cmd_reconstruct, "encode/decode a dataset with a checkpoint")
    sp.add_argument("--checkpoint", required=True, help="model checkpoint from train")
    sp.add_argument("--data", required=True, help="image dir, manifest file, or synthetic:N[:SIZE]")
    sp.add_argument("--out-dir", required=True, help="output image directory")
    sp.add_argument("--write-originals", default=None, metavar="DIR",
                    help="also write the inputs here (handy for synthetic data)")
    sp.add_argument("--seed", type=int, default=0, help="seed for synthetic data")

    sp = cmd("audit", cmd_audit, "metric report over paired original/reconstruction dirs")
    sp.add_argument("--pairs", nargs=2, required=True, metavar=("ORIG", "RECON"),
                    help="original and reconstruction dirs, matched by file name")
    sp.add_argument("--report", required=True, help="JSON report path")
    sp.add_argument("--text", default=None, help="plain-text table path")
    sp.add_argument("--class-csv", default=None, help="per-class NMSE CSV (needs --labels)")
    sp.add_argument("--labels", default=None, help="manifest with class ids, matched by file stem")
    sp.add_argument("--top-k", type=int, default=0, help="keep only the k worst classes in the CSV")
    sp.add_argument("--feature-seed", type=int, default=1234, help="seed of the random feature provider")
    sp.add_argument("--name", default="model", help="model label for the text table")
    sp.add_argument("--model-config", default="", help="config label for the text table")

    sp = cmd("spectrum", cmd_spectrum, "dataset-averaged residual (or image) power spectrum")
    sp.add_argument("--pairs", nargs=2, default=None, metavar=("ORIG", "RECON"),
                    help="spectrum of the residual orig - recon")
    sp.add_argument("--images", default=None, help="spectrum of the images themselves")
    sp.add_argument("--csv", required=True, help="radial profile CSV")
    sp.add_argument("--pgm", default=None, help="log-PSD heatmap")
    sp.add_argument("--meta", default=None, help="JSON metadata (crop, band energies)")
    sp.add_argument("--bins", type=int, default=16, help="radial profile bins")
    sp.add_argument("--cutoff", type=float, default=0.5, help="band split radius, 1 = Nyquist corner")

    sp = cmd("extract-latents", cmd_extract_latents, "encode a dataset to standardized fused latents")
    sp.add_argument("--checkpoint", required=True, help="model checkpoint from train")
    sp.add_argument("--data", required=True, help="image dir, manifest file, or synthetic:N[:SIZE]")
    sp.add_argument("--out", required=True, help="output tensor file (.fvt)")
    sp.add_argument("--seed", type=int, default=0, help="seed for synthetic data")

    sp = cmd("train-diff", cmd_train_diff, "fit a latent DDPM denoiser")
    sp.add_argument("--latents", required=True, help="output of extract-latents")
    sp.add_argument("--out", required=True, help="output tensor file (.fvt)")
    sp.add_argument("--log", default=None, help="per-step loss CSV path")
    sp.add_argument("--steps", type=int, default=2000, help="optimizer steps")
    sp.add_argument("--batch", type=int, default=32, help="latents per step")
    sp.add_argument("--lr", type=float, default=1e-3, help="Adam learning rate")
    sp.add_argument("--width", type=int, default=32, help="denoiser base channels")
    sp.add_argument("--emb-dim", type=int, default=32, help="timestep embedding size")
    sp.add_argument("--timesteps", type=int, default=200, help="diffusion steps T (linear betas 1e-4..0.02)")
    sp.add_argument("--seed", type=int, default=0, help="random seed")

    sp = cmd("sample", cmd_sample, "ancestral sampling, then decode to images")
    sp.add_argument("--checkpoint", required=True, help="model checkpoint from train")
    sp.add_argument("--denoiser", required=True, help="output of train-diff")
    sp.add_argument("--n", type=int, default=8, help="number of images")
    sp.add_argument("--out-dir", required=True, help="output image directory")
    sp.add_argument("--seed", type=int, default=0, help="random seed")

    sp = cmd("grad-check", cmd_grad_check, "finite-difference check of every autodiff op")
    sp.add_argument("--dtype", default="float32", choices=["float32", "float64"],
                    help="precision of the check (tolerance 1e-3 / 1e-6)")
    sp.add_argument("--seed", type=int, default=0, help="random seed")
    return p


def _thread_limit():
    val = os.environ.get("FAVAE_THREADS")
    if not val:
        return contextlib.nullcontext()
    try:
        n = int(val)
        if n < 1:
            raise ValueError
    except ValueError:
        raise ArgumentError(f"FAVAE_THREADS must be a positive integer, got {val!r}") from None
    from threadpoolctl import threadpool_limits
    return threadpool_limits(limits=n)


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        with _thread_limit():
            args.fn(args)
    except UsageError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except VALIDATION_ERRORS as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_INVALID
    except (TrainingError, StateError, FavaeError, OSError, FloatingPointError) as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
