"""Network descriptions, presets, and experiment config files.

The config file is INI-style with a fixed key set (sections: network, data,
pretrain, finetune, augment, seeds, output). Unknown sections or keys are
rejected outright so a typo cannot silently change an experiment.

Presets:

* ``cifar10``: conv 96@5x5 + pool2, conv 144@5x5 + pool2, conv 192@3x3,
  fully-connected 300, softmax 10, input 3x32x32.
* ``stl10``: conv 64@5x5 + pool2, conv 128@5x5 + pool2, conv 256@3x3 +
  quadrant pool, fully-connected 512, softmax 10, input 3x96x96.
"""

import configparser
import io
import os
from dataclasses import dataclass, field

import numpy as np

from zbcae.errors import ConfigError
from zbcae.initializers import (
    apply_hamming,
    gaussian_head_init,
    patch_init,
    svd_orthogonal_init,
)
from zbcae.layers import CAEStack, Classifier, ClassifierHead, EncoderModule


@dataclass(frozen=True)
class ConvLayerSpec:
    filters: int
    kernel: int
    pool: object = None  # None, int window, or "quadrant"


@dataclass(frozen=True)
class NetworkSpec:
    conv: tuple
    fc_units: int
    num_classes: int
    in_channels: int = 3
    input_hw: tuple = (32, 32)

    def feature_shape(self, input_hw=None):
        """(channels, h, w) of the last encoder output for a given input."""
        h, w = input_hw or self.input_hw
        c = self.in_channels
        for layer in self.conv:
            h, w = h - layer.kernel + 1, w - layer.kernel + 1
            if h < 1 or w < 1:
                raise ConfigError(
                    f"input {input_hw or self.input_hw} too small for network"
                )
            if layer.pool == "quadrant":
                h = w = 2
            elif layer.pool:
                h, w = h // layer.pool, w // layer.pool
            c = layer.filters
        return c, h, w

    def feature_count(self, input_hw=None):
        c, h, w = self.feature_shape(input_hw)
        return c * h * w

    def to_text(self):
        pools = ",".join(
            "none" if l.pool is None else str(l.pool) for l in self.conv
        )
        return (
            f"filters={','.join(str(l.filters) for l in self.conv)}\n"
            f"kernels={','.join(str(l.kernel) for l in self.conv)}\n"
            f"pools={pools}\n"
            f"fc={self.fc_units}\n"
            f"classes={self.num_classes}\n"
            f"channels={self.in_channels}\n"
            f"input={self.input_hw[0]}x{self.input_hw[1]}\n"
        )

    @classmethod
    def from_text(cls, text):
        kv = {}
        for line in text.strip().splitlines():
            key, _, val = line.partition("=")
            kv[key.strip()] = val.strip()
        try:
            filters = [int(v) for v in kv["filters"].split(",")]
            kernels = [int(v) for v in kv["kernels"].split(",")]
            pools = [_parse_pool(v) for v in kv["pools"].split(",")]
            hw = tuple(int(v) for v in kv["input"].split("x"))
            if not len(filters) == len(kernels) == len(pools):
                raise ConfigError("filters/kernels/pools length mismatch")
            return cls(
                conv=tuple(
                    ConvLayerSpec(f, k, p) for f, k, p in zip(filters, kernels, pools)
                ),
                fc_units=int(kv["fc"]),
                num_classes=int(kv["classes"]),
                in_channels=int(kv["channels"]),
                input_hw=hw,
            )
        except (KeyError, ValueError) as exc:
            raise ConfigError(f"bad network description: {exc}") from exc

    def build_stack(self, seed, patch_images=None, dtype=np.float32):
        """Encoders with the zero-bias initialization schemes.

        Layer 1 starts as dataset patches when `patch_images` is given
        (pretraining); otherwise, and for all deeper layers, filters start
        SVD-orthonormal with Hamming tapering. Where orthonormal rows cannot
        exist (more filters than fan-in) a scaled Gaussian with the head
        formula's std stands in. Each layer draws from its own (seed, layer)
        stream, so one layer's scheme never shifts another's weights.
        """
        encoders = []
        c = self.in_channels
        for li, layer in enumerate(self.conv):
            rng = np.random.default_rng(_entropy(seed, 0xE, li))
            dims = (layer.filters, c, layer.kernel, layer.kernel)
            if li == 0 and patch_images is not None:
                bank = patch_init(patch_images, dims, rng, dtype)
            else:
                fan_in = c * layer.kernel * layer.kernel
                if layer.filters <= fan_in:
                    bank = apply_hamming(svd_orthogonal_init(dims, rng, dtype))
                else:
                    k = float(rng.uniform(0.2, 1.2))
                    bank = (
                        rng.standard_normal(dims) * (k / np.sqrt(fan_in))
                    ).astype(dtype)
            encoders.append(EncoderModule(bank, activation="relu", pool=layer.pool))
            c = layer.filters
        return CAEStack(encoders)

    def build_classifier(self, encoders, seed, dropout_p=0.5, dtype=np.float32,
                         input_hw=None):
        """Attach a freshly initialized fully-connected + softmax head."""
        rng = np.random.default_rng(_entropy(seed, 0xF))
        feat = self.feature_count(input_hw)
        w1, b1 = gaussian_head_init(feat, self.fc_units, rng, dtype)
        w2, b2 = gaussian_head_init(self.fc_units, self.num_classes, rng, dtype)
        head = ClassifierHead(w1, b1, w2, b2, dropout_p)
        return Classifier(encoders, head)


def _entropy(seed, *salt):
    if isinstance(seed, (list, tuple)):
        return [*(int(s) for s in seed), *salt]
    return [int(seed), *salt]


def _parse_pool(text):
    text = text.strip().lower()
    if text in ("none", ""):
        return None
    if text == "quadrant":
        return "quadrant"
    return int(text)


PRESETS = {
    "cifar10": NetworkSpec(
        conv=(
            ConvLayerSpec(96, 5, 2),
            ConvLayerSpec(144, 5, 2),
            ConvLayerSpec(192, 3, None),
        ),
        fc_units=300,
        num_classes=10,
        in_channels=3,
        input_hw=(32, 32),
    ),
    "stl10": NetworkSpec(
        conv=(
            ConvLayerSpec(64, 5, 2),
            ConvLayerSpec(128, 5, 2),
            ConvLayerSpec(256, 3, "quadrant"),
        ),
        fc_units=512,
        num_classes=10,
        in_channels=3,
        input_hw=(96, 96),
    ),
}


@dataclass
class PhaseConfig:
    epochs: int = 0
    batch_size: int = 128
    learning_rate: float | None = None  # None -> probe
    momentum: float = 0.9
    weight_decay: float = 1e-5
    probe_epochs: int = 2


@dataclass
class AugmentConfig:
    translations: bool = False  # A: translate + horizontal flip
    color: bool = False  # C: color + contrast
    dropout: bool = False  # D
    translate_frac: float = 0.05
    dropout_p: float = 0.5
    contrast_value_from_saturation: bool = True


@dataclass
class DataConfig:
    format: str = "synthetic"
    train: list = field(default_factory=list)
    test: list = field(default_factory=list)
    unlabeled: list = field(default_factory=list)
    train_labels: str | None = None  # stl10 only
    test_labels: str | None = None
    samples_per_class: int | None = None
    class_filter: list | None = None
    synthetic_kind: str = "oriented-bars"
    synthetic_n: int = 500
    synthetic_test_n: int = 100
    synthetic_dims: tuple = (1, 12, 12)


@dataclass
class ExperimentConfig:
    network: NetworkSpec
    data: DataConfig
    pretrain: PhaseConfig
    finetune: PhaseConfig
    augment: AugmentConfig
    seed: int = 0
    out_dir: str | None = None
    raw_text: str = ""


_SCHEMA = {
    "network": {"preset", "filters", "kernels", "pools", "fc", "classes", "channels", "input"},
    "data": {
        "format", "train", "test", "unlabeled", "train_labels", "test_labels",
        "samples_per_class", "class_filter", "synthetic_kind", "synthetic_n",
        "synthetic_test_n", "synthetic_dims",
    },
    "pretrain": {"epochs", "batch_size", "learning_rate", "probe_epochs"},
    "finetune": {"epochs", "batch_size", "learning_rate", "probe_epochs"},
    "augment": {
        "translations", "color", "dropout", "translate_frac", "dropout_p",
        "contrast_value_from_saturation",
    },
    "seeds": {"master"},
    "output": {"dir"},
}

_BOOLS = {"true": True, "false": False, "1": True, "0": False, "yes": True, "no": False}


def _bool(section, key, text):
    try:
        return _BOOLS[text.strip().lower()]
    except KeyError:
        raise ConfigError(f"[{section}] {key}: expected a boolean, got {text!r}") from None


def _paths(text):
    return [p.strip() for p in text.split(",") if p.strip()]


def load_config(path):
    """Parse and validate an experiment config file."""
    with open(path, "r", encoding="utf-8") as fh:
        text = fh.read()
    return parse_config(text)


def parse_config(text):
    parser = configparser.ConfigParser(interpolation=None)
    try:
        parser.read_file(io.StringIO(text))
    except configparser.Error as exc:
        raise ConfigError(f"config parse error: {exc}") from exc

    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")

    net = parser["network"] if parser.has_section("network") else {}
    if "preset" in net:
        name = net["preset"].strip().lower()
        if name not in PRESETS:
            raise ConfigError(f"unknown network preset {name!r}")
        extra = set(net) - {"preset"}
        if extra:
            raise ConfigError(f"preset networks take no extra keys, got {sorted(extra)}")
        network = PRESETS[name]
    elif net:
        body = "\n".join(
            f"{k}={net.get(k, d)}"
            for k, d in (
                ("filters", ""), ("kernels", ""), ("pools", ""), ("fc", ""),
                ("classes", "10"), ("channels", "3"), ("input", "32x32"),
            )
        )
        network = NetworkSpec.from_text(body)
    else:
        raise ConfigError("config needs a [network] section")

    dc = DataConfig()
    if parser.has_section("data"):
        src = parser["data"]
        dc.format = src.get("format", dc.format).strip().lower()
        if dc.format not in ("cifar10", "stl10", "synthetic"):
            raise ConfigError(f"unknown data format {dc.format!r}")
        dc.train = _paths(src.get("train", ""))
        dc.test = _paths(src.get("test", ""))
        dc.unlabeled = _paths(src.get("unlabeled", ""))
        dc.train_labels = src.get("train_labels", "").strip() or None
        dc.test_labels = src.get("test_labels", "").strip() or None
        if src.get("samples_per_class"):
            dc.samples_per_class = int(src["samples_per_class"])
        if src.get("class_filter"):
            dc.class_filter = [int(v) for v in src["class_filter"].split(",")]
        dc.synthetic_kind = src.get("synthetic_kind", dc.synthetic_kind).strip()
        dc.synthetic_n = int(src.get("synthetic_n", dc.synthetic_n))
        dc.synthetic_test_n = int(src.get("synthetic_test_n", dc.synthetic_test_n))
        if src.get("synthetic_dims"):
            dims = tuple(int(v) for v in src["synthetic_dims"].split("x"))
            if len(dims) != 3:
                raise ConfigError("synthetic_dims must be CxHxW")
            dc.synthetic_dims = dims

    phases = {}
    for phase in ("pretrain", "finetune"):
        pc = PhaseConfig()
        if parser.has_section(phase):
            src = parser[phase]
            pc.epochs = int(src.get("epochs", pc.epochs))
            pc.batch_size = int(src.get("batch_size", pc.batch_size))
            lr = src.get("learning_rate", "probe").strip().lower()
            pc.learning_rate = None if lr == "probe" else float(lr)
            pc.probe_epochs = int(src.get("probe_epochs", pc.probe_epochs))
            if pc.batch_size < 1 or pc.epochs < 0:
                raise ConfigError(f"[{phase}] epochs/batch_size out of range")
        phases[phase] = pc

    ac = AugmentConfig()
    if parser.has_section("augment"):
        src = parser["augment"]
        for key in ("translations", "color", "dropout", "contrast_value_from_saturation"):
            if key in src:
                setattr(ac, key, _bool("augment", key, src[key]))
        ac.translate_frac = float(src.get("translate_frac", ac.translate_frac))
        ac.dropout_p = float(src.get("dropout_p", ac.dropout_p))
        if not 0 <= ac.dropout_p < 1:
            raise ConfigError("[augment] dropout_p must be in [0,1)")

    seed = 0
    if parser.has_section("seeds"):
        seed = int(parser["seeds"].get("master", "0"))

    out_dir = None
    if parser.has_section("output"):
        out_dir = parser["output"].get("dir", "").strip() or None

    return ExperimentConfig(
        network=network,
        data=dc,
        pretrain=phases["pretrain"],
        finetune=phases["finetune"],
        augment=ac,
        seed=seed,
        out_dir=out_dir,
        raw_text=text,
    )


def validate_paths(cfg, need_train=False, need_test=False, need_unlabeled=False):
    """Check every referenced dataset path exists before training starts."""
    if cfg.data.format == "synthetic":
        return
    wanted = []
    if need_train:
        wanted += cfg.data.train or [None]
        if cfg.data.format == "stl10":
            wanted.append(cfg.data.train_labels)
    if need_test:
        wanted += cfg.data.test or [None]
        if cfg.data.format == "stl10":
            wanted.append(cfg.data.test_labels)
    if need_unlabeled:
        wanted += cfg.data.unlabeled or [None]
    for p in wanted:
        if p is None:
            raise FileNotFoundError("config does not name a required dataset path")
        if not os.path.exists(p):
            raise FileNotFoundError(p)
