"""Command-line surface.

Subcommands: pretrain, finetune, eval, gradcheck, augment-preview,
filters-dump. Every run is replayable from its config file plus seed; train
commands copy the config verbatim into the output directory next to the
metrics CSV and checkpoint.

Exit codes are a stable contract: 0 success, 1 divergence (including "no
viable learning rate" and failed gradient checks), 2 input error, 3
internal error. Failures print one machine-readable line to stderr:
``error=<slug> <detail>``.
"""

import argparse
import os
import shutil
import sys

import numpy as np

from zbcae import augment as aug
from zbcae import data as datamod
from zbcae import ppm, train
from zbcae.checkpoint import Checkpoint, load_checkpoint, metrics_csv, save_checkpoint
from zbcae.config import PRESETS, load_config
from zbcae.errors import (
    ConfigError,
    CorruptSwitchError,
    DivergenceError,
    FormatError,
    NoViableRateError,
    ShapeError,
)

EXIT_OK = 0
EXIT_DIVERGED = 1
EXIT_INPUT = 2
EXIT_INTERNAL = 3


class CliError(Exception):
    def __init__(self, slug, detail, code=EXIT_INPUT):
        super().__init__(f"error={slug} {detail}")
        self.slug = slug
        self.detail = detail
        self.code = code


def _fail(slug, detail, code=EXIT_INPUT):
    raise CliError(slug, detail, code)


def _read_config(path):
    if not os.path.exists(path):
        _fail("config-not-found", path)
    try:
        return load_config(path)
    except ConfigError as exc:
        _fail("config-invalid", str(exc))


def _out_dir(args, cfg):
    out = args.out or cfg.out_dir
    if not out:
        _fail("config-invalid", "no output directory (--out or [output] dir)")
    os.makedirs(out, exist_ok=True)
    shutil.copyfile(args.config, os.path.join(out, "config.ini"))
    return out


def _seed(args, cfg):
    return args.seed if args.seed is not None else cfg.seed


def _require_paths(paths, what):
    if not paths:
        _fail("dataset-not-found", f"config names no {what} data")
    for p in paths:
        if not os.path.exists(p):
            _fail("dataset-not-found", p)


def _apply_class_filter(ds, class_filter):
    if not class_filter:
        return ds
    keep = np.isin(ds.labels, class_filter)
    relabel = {c: i for i, c in enumerate(class_filter)}
    labels = np.array([relabel[int(l)] for l in ds.labels[keep]], np.int64)
    return datamod.LabeledDataset(ds.images[keep], labels, len(class_filter))


def _load_labeled(cfg, split, seed):
    dc = cfg.data
    if dc.format == "synthetic":
        n = dc.synthetic_n if split == "train" else dc.synthetic_test_n
        ds = datamod.make_synthetic(
            dc.synthetic_kind, n, dc.synthetic_dims,
            seed=[seed, 100 if split == "train" else 101],
            num_classes=cfg.network.num_classes,
        )
    elif dc.format == "cifar10":
        paths = dc.train if split == "train" else dc.test
        _require_paths(paths, split)
        ds = datamod.read_cifar10(paths)
    else:
        paths = dc.train if split == "train" else dc.test
        labels = dc.train_labels if split == "train" else dc.test_labels
        _require_paths(paths, split)
        if labels is None or not os.path.exists(labels):
            _fail("dataset-not-found", f"{split} label file {labels}")
        ds = datamod.read_stl10(paths[0], labels)
    ds = _apply_class_filter(ds, dc.class_filter)
    if split == "train" and dc.samples_per_class:
        ds = datamod.sample_subset(ds, dc.samples_per_class, seed)
    return ds


def _load_unlabeled(cfg, seed):
    dc = cfg.data
    if dc.format == "synthetic":
        return datamod.make_synthetic(
            dc.synthetic_kind, dc.synthetic_n, dc.synthetic_dims,
            seed=[seed, 102], num_classes=cfg.network.num_classes,
        ).images
    _require_paths(dc.unlabeled, "unlabeled")
    if dc.format == "cifar10":
        return datamod.read_cifar10(dc.unlabeled).images
    return datamod.read_stl10(dc.unlabeled[0]).images


def _check_compatible(ckpt_net, cfg_net):
    if ckpt_net == cfg_net:
        return
    for i, (a, b) in enumerate(zip(ckpt_net.conv, cfg_net.conv), start=1):
        if a != b:
            _fail(
                "checkpoint-mismatch",
                f"conv{i}: checkpoint has {a}, config wants {b}",
            )
    _fail("checkpoint-mismatch", "network descriptions differ")


def cmd_pretrain(args):
    cfg = _read_config(args.config)
    out = _out_dir(args, cfg)
    seed = _seed(args, cfg)
    raw = _load_unlabeled(cfg, seed)
    stack = cfg.network.build_stack(seed, patch_images=raw)
    images = aug.standardize(raw)

    metrics = []
    code = EXIT_OK
    try:
        state = train.greedy_pretrain(stack, images, cfg.pretrain, seed, metrics=metrics)
    except DivergenceError as exc:
        print(f"error=divergence {exc}", file=sys.stderr)
        state, code = None, EXIT_DIVERGED
    finally:
        with open(os.path.join(out, "metrics.csv"), "w", encoding="utf-8") as fh:
            fh.write(metrics_csv(metrics))
    if code != EXIT_OK:
        return code

    ckpt = Checkpoint(
        network=cfg.network,
        params={f"conv{i}.filters": e.filters for i, e in enumerate(stack.encoders, 1)},
        velocities=state.velocities,
        state=state,
        trained_depth=stack.trained_depth,
        seed=seed,
    )
    path = os.path.join(out, "pretrain.zcae")
    save_checkpoint(path, ckpt)
    print(f"checkpoint={path}")
    return EXIT_OK


def cmd_finetune(args):
    cfg = _read_config(args.config)
    out = _out_dir(args, cfg)
    seed = _seed(args, cfg)

    if args.init == "random":
        stack = cfg.network.build_stack(seed)
    else:
        if not os.path.exists(args.init):
            _fail("checkpoint-not-found", args.init)
        ckpt = load_checkpoint(args.init)
        _check_compatible(ckpt.network, cfg.network)
        stack = cfg.network.build_stack(seed)
        for i, enc in enumerate(stack.encoders, start=1):
            name = f"conv{i}.filters"
            if name not in ckpt.params:
                _fail("checkpoint-mismatch", f"{name} missing from checkpoint")
            if ckpt.params[name].shape != enc.filters.shape:
                _fail(
                    "checkpoint-mismatch",
                    f"{name}: checkpoint {ckpt.params[name].shape} vs "
                    f"config {enc.filters.shape}",
                )
            enc.filters = ckpt.params[name].copy()

    train_ds = _load_labeled(cfg, "train", seed)
    test_ds = _load_labeled(cfg, "test", seed)
    if train_ds.num_classes != cfg.network.num_classes:
        _fail(
            "config-invalid",
            f"dataset has {train_ds.num_classes} classes, network predicts "
            f"{cfg.network.num_classes}",
        )
    input_hw = train_ds.images.shape[2:]
    classifier = cfg.network.build_classifier(
        stack.encoders, seed, dropout_p=cfg.augment.dropout_p, input_hw=input_hw
    )

    metrics = []
    code = EXIT_OK
    try:
        state = train.finetune(
            classifier, train_ds, cfg.finetune, cfg.augment, seed, val_ds=test_ds,
            metrics=metrics,
        )
    except (DivergenceError, NoViableRateError) as exc:
        print(f"error=divergence {exc}", file=sys.stderr)
        state, code = None, EXIT_DIVERGED
    finally:
        with open(os.path.join(out, "metrics.csv"), "w", encoding="utf-8") as fh:
            fh.write(metrics_csv(metrics))
    if code != EXIT_OK:
        return code

    params = classifier.parameters()
    ckpt = Checkpoint(
        network=cfg.network,
        params=params,
        velocities=state.velocities,
        state=state,
        trained_depth=len(stack.encoders),
        seed=seed,
    )
    path = os.path.join(out, "model.zcae")
    save_checkpoint(path, ckpt)
    overall, _ = train.evaluate(classifier, test_ds)
    print(f"model={path}")
    print(f"overall={100.0 * overall:.2f}")
    return EXIT_OK


def _classifier_from_checkpoint(ckpt, input_hw=None):
    stack = ckpt.network.build_stack(seed=ckpt.seed)
    for i, enc in enumerate(stack.encoders, start=1):
        name = f"conv{i}.filters"
        if name not in ckpt.params:
            _fail("checkpoint-mismatch", f"{name} missing from checkpoint")
        enc.filters = ckpt.params[name].copy()
    clf = ckpt.network.build_classifier(stack.encoders, ckpt.seed, input_hw=input_hw)
    for name in ("head.w_hidden", "head.b_hidden", "head.w_out", "head.b_out"):
        if name not in ckpt.params:
            _fail("checkpoint-mismatch", f"{name} missing from checkpoint (not a model?)")
    clf.set_parameters({k: v.copy() for k, v in ckpt.params.items()})
    return clf


def cmd_eval(args):
    cfg = _read_config(args.config)
    if not os.path.exists(args.model):
        _fail("checkpoint-not-found", args.model)
    ckpt = load_checkpoint(args.model)
    seed = _seed(args, cfg)
    ds = _load_labeled(cfg, "test", seed)
    if ds.num_classes != ckpt.network.num_classes:
        _fail(
            "checkpoint-mismatch",
            f"dataset has {ds.num_classes} classes, model predicts "
            f"{ckpt.network.num_classes}",
        )
    clf = _classifier_from_checkpoint(ckpt, input_hw=ds.images.shape[2:])
    overall, per_class = train.evaluate(clf, ds)
    print(f"overall={100.0 * overall:.2f}")
    for k, acc in enumerate(per_class):
        print(f"class_{k}={100.0 * acc:.2f}")
    return EXIT_OK


GRADCHECK_INPUT_HW = {"cifar10": (32, 32), "stl10": (48, 48)}


def cmd_gradcheck(args):
    if args.preset not in PRESETS:
        _fail("config-invalid", f"unknown preset {args.preset!r}")
    net = PRESETS[args.preset]
    dtype = np.float64 if args.f64 else np.float32
    step = 1e-6 if args.f64 else 1e-3
    tolerance = args.tolerance if args.tolerance else (1e-5 if args.f64 else 3e-2)
    hw = (args.input_size, args.input_size) if args.input_size else GRADCHECK_INPUT_HW[args.preset]
    rng = np.random.default_rng(args.seed)
    x = rng.standard_normal((args.batch, net.in_channels, *hw)).astype(dtype)
    labels = rng.integers(0, net.num_classes, size=args.batch)

    failed = False
    stack = net.build_stack(args.seed, dtype=dtype)
    for depth in range(1, len(stack) + 1):
        enc = stack.encoders[depth - 1]
        report = train.gradcheck(
            {f"conv{depth}.filters": enc.filters},
            lambda d=depth: stack.cost_and_grads(x, d),
            loss_fn=lambda d=depth: stack.cost(x, d),
            seed=args.seed, max_per_tensor=args.samples, step=step, tolerance=tolerance,
        )
        for line in report.lines():
            print(f"cae_depth{depth} {line}")
        failed |= not report.passed

    clf = net.build_classifier(
        net.build_stack([args.seed, 1], dtype=dtype).encoders,
        args.seed, dropout_p=0.0, dtype=dtype, input_hw=hw,
    )
    report = train.gradcheck(
        clf.parameters(),
        lambda: clf.loss_and_grads(x, labels, train_mode=False)[:2],
        loss_fn=lambda: clf.loss(x, labels),
        seed=args.seed, max_per_tensor=args.samples, step=step, tolerance=tolerance,
    )
    for line in report.lines():
        print(f"classifier {line}")
    failed |= not report.passed
    return EXIT_DIVERGED if failed else EXIT_OK


def cmd_augment_preview(args):
    if not os.path.exists(args.image):
        _fail("dataset-not-found", args.image)
    image = ppm.read_ppm(args.image)
    os.makedirs(args.out, exist_ok=True)
    rng = np.random.default_rng(args.seed)
    out = aug.augment_example(
        image, rng, flip=args.flip,
        translate_frac=args.translate_frac if args.translate else 0.0,
        color=args.color, contrast=args.contrast,
    )
    before = os.path.join(args.out, "before.ppm")
    after = os.path.join(args.out, "after.ppm")
    ppm.write_ppm(before, image)
    ppm.write_ppm(after, out)
    print(f"before={before}")
    print(f"after={after}")
    return EXIT_OK


def cmd_filters_dump(args):
    if not os.path.exists(args.checkpoint):
        _fail("checkpoint-not-found", args.checkpoint)
    ckpt = load_checkpoint(args.checkpoint)
    name = f"conv{args.layer}.filters"
    if name not in ckpt.params:
        _fail("checkpoint-mismatch", f"layer {name} not present in checkpoint")
    grid = ppm.filter_grid(ckpt.params[name])
    ppm.write_ppm(args.out, grid)
    print(f"image={args.out}")
    return EXIT_OK


def build_parser():
    parser = argparse.ArgumentParser(
        prog="zbcae",
        description="Zero-bias convolutional auto-encoder training tools",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p, config=True):
        if config:
            p.add_argument("--config", required=True, help="experiment config file")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--threads", type=int, default=1,
                       help="worker threads (only 1 is implemented; kept for compatibility)")

    p = sub.add_parser("pretrain", help="greedy layer-wise unsupervised pretraining")
    common(p)
    p.add_argument("--out", default=None, help="output directory")
    p.set_defaults(fn=cmd_pretrain)

    p = sub.add_parser("finetune", help="supervised fine-tuning")
    common(p)
    p.add_argument("--init", required=True,
                   help="'random' or path to a pretraining checkpoint")
    p.add_argument("--out", default=None)
    p.set_defaults(fn=cmd_finetune)

    p = sub.add_parser("eval", help="evaluate a fine-tuned model")
    common(p)
    p.add_argument("--model", required=True, help="model checkpoint from finetune")
    p.set_defaults(fn=cmd_eval)

    p = sub.add_parser("gradcheck", help="finite-difference check of every gradient")
    p.add_argument("--preset", default="cifar10", help="network preset to check")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--f64", action="store_true", help="64-bit precision mode")
    p.add_argument("--batch", type=int, default=2)
    p.add_argument("--samples", type=int, default=24,
                   help="parameters sampled per tensor (max 200)")
    p.add_argument("--input-size", type=int, default=None,
                   help="square input size (default: preset-specific)")
    p.add_argument("--tolerance", type=float, default=None)
    p.set_defaults(fn=cmd_gradcheck)

    p = sub.add_parser("augment-preview", help="write before/after augmentation images")
    p.add_argument("--image", required=True, help="input P6 PPM image")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--flip", action="store_true")
    p.add_argument("--translate", action="store_true")
    p.add_argument("--translate-frac", type=float, default=0.05)
    p.add_argument("--color", action="store_true")
    p.add_argument("--contrast", action="store_true")
    p.set_defaults(fn=cmd_augment_preview)

    p = sub.add_parser("filters-dump", help="render a layer's filters as a PPM grid")
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--layer", type=int, default=1)
    p.add_argument("--out", required=True, help="output PPM path")
    p.set_defaults(fn=cmd_filters_dump)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    if getattr(args, "samples", 1) > 200:
        print("error=config-invalid --samples capped at 200", file=sys.stderr)
        return EXIT_INPUT
    if getattr(args, "threads", 1) < 1:
        print("error=config-invalid --threads must be >= 1", file=sys.stderr)
        return EXIT_INPUT
    try:
        return args.fn(args)
    except CliError as exc:
        print(f"error={exc.slug} {exc.detail}", file=sys.stderr)
        return exc.code
    except (DivergenceError, NoViableRateError) as exc:
        print(f"error=divergence {exc}", file=sys.stderr)
        return EXIT_DIVERGED
    except FileNotFoundError as exc:
        print(f"error=dataset-not-found {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, FormatError, ShapeError, CorruptSwitchError) as exc:
        slug = "config-invalid" if isinstance(exc, ConfigError) else "bad-format"
        print(f"error={slug} {exc}", file=sys.stderr)
        return EXIT_INPUT
    except Exception as exc:  # noqa: BLE001 - the CLI boundary reports and exits
        print(f"error=internal {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
