import numpy as np
import numpy.testing as npt
import pytest

from zbcae import cli, ppm
from zbcae.checkpoint import load_checkpoint, parse_metrics_csv
from zbcae.config import parse_config
from zbcae.errors import ConfigError


BARS_CONFIG = """\
[network]
filters = 4,6
kernels = 3,2
pools = 2,none
fc = 8
classes = 2
channels = 1
input = 12x12

[data]
format = synthetic
synthetic_kind = oriented-bars
synthetic_n = 60
synthetic_test_n = 40
synthetic_dims = 1x12x12

[pretrain]
epochs = 2
batch_size = 20
learning_rate = 0.05

[finetune]
epochs = 3
batch_size = 20
learning_rate = 0.05

[seeds]
master = 11
"""


@pytest.fixture
def bars_config(tmp_path):
    path = tmp_path / "exp.ini"
    path.write_text(BARS_CONFIG)
    return path


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_config_rejects_unknown_keys():
    with pytest.raises(ConfigError):
        parse_config("[network]\npreset = cifar10\n\n[data]\nformart = cifar10\n")
    with pytest.raises(ConfigError):
        parse_config("[networks]\npreset = cifar10\n")


def test_config_presets_and_inline():
    cfg = parse_config("[network]\npreset = cifar10\n")
    assert [l.filters for l in cfg.network.conv] == [96, 144, 192]
    assert cfg.network.fc_units == 300
    cfg = parse_config("[network]\npreset = stl10\n")
    assert cfg.network.conv[2].pool == "quadrant"
    assert cfg.network.input_hw == (96, 96)
    cfg = parse_config(BARS_CONFIG)
    assert cfg.network.num_classes == 2
    assert cfg.pretrain.epochs == 2
    assert cfg.finetune.learning_rate == 0.05
    assert cfg.seed == 11


def test_config_rejects_unknown_preset_and_bad_bool():
    with pytest.raises(ConfigError):
        parse_config("[network]\npreset = imagenet\n")
    with pytest.raises(ConfigError):
        parse_config("[network]\npreset = cifar10\n\n[augment]\ndropout = maybe\n")


# ---------------------------------------------------------------------------
# pretrain / finetune / eval pipeline
# ---------------------------------------------------------------------------

def test_pretrain_writes_checkpoint_and_metrics(bars_config, tmp_path, capsys):
    out = tmp_path / "run"
    code = cli.main(["pretrain", "--config", str(bars_config), "--out", str(out)])
    assert code == 0
    assert (out / "config.ini").read_text() == BARS_CONFIG
    ckpt = load_checkpoint(out / "pretrain.zcae")
    assert ckpt.trained_depth == 2
    assert set(ckpt.params) == {"conv1.filters", "conv2.filters"}
    rows = parse_metrics_csv((out / "metrics.csv").read_text())
    assert [r.phase for r in rows] == ["pretrain1", "pretrain1", "pretrain2", "pretrain2"]
    assert "checkpoint=" in capsys.readouterr().out


def test_pretrain_epochs_zero_keeps_initialization(bars_config, tmp_path):
    text = BARS_CONFIG.replace("epochs = 2", "epochs = 0", 1)
    cfgfile = tmp_path / "zero.ini"
    cfgfile.write_text(text)
    out = tmp_path / "zero_run"
    assert cli.main(["pretrain", "--config", str(cfgfile), "--out", str(out)]) == 0
    ckpt = load_checkpoint(out / "pretrain.zcae")
    cfg = parse_config(text)
    stack = cfg.network.build_stack(11, patch_images=None)
    # layer 2 is data-independent (SVD+Hamming), layer 1 is patch-initialized
    npt.assert_array_equal(ckpt.params["conv2.filters"], stack.encoders[1].filters)


def test_pretrain_missing_dataset_exits_2(tmp_path, capsys):
    text = BARS_CONFIG.replace("format = synthetic", "format = cifar10")
    cfgfile = tmp_path / "missing.ini"
    cfgfile.write_text(text)
    code = cli.main(["pretrain", "--config", str(cfgfile), "--out", str(tmp_path / "o")])
    assert code == 2
    assert "error=dataset-not-found" in capsys.readouterr().err


def test_pretrain_rerun_is_bit_identical(bars_config, tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert cli.main(["pretrain", "--config", str(bars_config), "--out", str(out1)]) == 0
    assert cli.main(["pretrain", "--config", str(bars_config), "--out", str(out2)]) == 0
    assert (out1 / "pretrain.zcae").read_bytes() == (out2 / "pretrain.zcae").read_bytes()


def test_finetune_random_and_from_checkpoint(bars_config, tmp_path, capsys):
    pre = tmp_path / "pre"
    assert cli.main(["pretrain", "--config", str(bars_config), "--out", str(pre)]) == 0
    capsys.readouterr()

    ft1 = tmp_path / "ft_random"
    code = cli.main(["finetune", "--config", str(bars_config), "--init", "random",
                     "--out", str(ft1)])
    assert code == 0
    out = capsys.readouterr().out
    assert "overall=" in out

    ft2 = tmp_path / "ft_ckpt"
    code = cli.main(["finetune", "--config", str(bars_config),
                     "--init", str(pre / "pretrain.zcae"), "--out", str(ft2)])
    assert code == 0
    ckpt = load_checkpoint(ft2 / "model.zcae")
    assert "head.w_out" in ckpt.params


def test_finetune_with_augmentations_and_dropout(bars_config, tmp_path, capsys):
    text = BARS_CONFIG + "\n[augment]\ntranslations = true\ndropout = true\n"
    cfgfile = tmp_path / "aug.ini"
    cfgfile.write_text(text)
    code = cli.main(["finetune", "--config", str(cfgfile), "--init", "random",
                     "--out", str(tmp_path / "aug_out")])
    assert code == 0
    assert "overall=" in capsys.readouterr().out


def test_stl10_format_end_to_end(tmp_path, capsys):
    rng = np.random.default_rng(0)
    n_train, n_test, n_unl = 8, 6, 10
    for name, count, labeled in (("train", n_train, True), ("test", n_test, True),
                                 ("unl", n_unl, False)):
        raw = rng.integers(0, 256, size=count * 27648, dtype=np.uint8)
        (tmp_path / f"{name}.bin").write_bytes(raw.tobytes())
        if labeled:
            labels = (np.arange(count) % 2 + 1).astype(np.uint8)  # classes 1,2
            (tmp_path / f"{name}_y.bin").write_bytes(labels.tobytes())
    config = f"""\
[network]
filters = 2,4
kernels = 5,5
pools = 2,quadrant
fc = 8
classes = 10
channels = 3
input = 96x96

[data]
format = stl10
train = {tmp_path / 'train.bin'}
test = {tmp_path / 'test.bin'}
train_labels = {tmp_path / 'train_y.bin'}
test_labels = {tmp_path / 'test_y.bin'}
unlabeled = {tmp_path / 'unl.bin'}

[pretrain]
epochs = 1
batch_size = 5
learning_rate = 0.01

[finetune]
epochs = 1
batch_size = 4
learning_rate = 0.01

[seeds]
master = 2
"""
    cfgfile = tmp_path / "stl.ini"
    cfgfile.write_text(config)
    pre = tmp_path / "pre"
    assert cli.main(["pretrain", "--config", str(cfgfile), "--out", str(pre)]) == 0
    ft = tmp_path / "ft"
    assert cli.main(["finetune", "--config", str(cfgfile),
                     "--init", str(pre / "pretrain.zcae"), "--out", str(ft)]) == 0
    assert "overall=" in capsys.readouterr().out


def test_finetune_checkpoint_mismatch_names_layer(bars_config, tmp_path, capsys):
    pre = tmp_path / "pre"
    assert cli.main(["pretrain", "--config", str(bars_config), "--out", str(pre)]) == 0
    other = BARS_CONFIG.replace("filters = 4,6", "filters = 4,8")
    cfgfile = tmp_path / "other.ini"
    cfgfile.write_text(other)
    code = cli.main(["finetune", "--config", str(cfgfile),
                     "--init", str(pre / "pretrain.zcae"), "--out", str(tmp_path / "x")])
    assert code == 2
    err = capsys.readouterr().err
    assert "error=checkpoint-mismatch" in err and "conv2" in err


def test_eval_report_format(bars_config, tmp_path, capsys):
    ft = tmp_path / "ft"
    assert cli.main(["finetune", "--config", str(bars_config), "--init", "random",
                     "--out", str(ft)]) == 0
    capsys.readouterr()
    code = cli.main(["eval", "--config", str(bars_config), "--model", str(ft / "model.zcae")])
    assert code == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert lines[0].startswith("overall=")
    assert lines[1].startswith("class_0=") and lines[2].startswith("class_1=")
    float(lines[0].split("=")[1])


@pytest.mark.filterwarnings("ignore::RuntimeWarning")  # divergence is the point
def test_finetune_divergence_exits_1(bars_config, tmp_path, capsys):
    text = BARS_CONFIG.replace("learning_rate = 0.05\n\n[seeds]",
                               "learning_rate = 1e6\n\n[seeds]")
    cfgfile = tmp_path / "div.ini"
    cfgfile.write_text(text)
    code = cli.main(["finetune", "--config", str(cfgfile), "--init", "random",
                     "--out", str(tmp_path / "d")])
    assert code == 1
    assert "error=divergence" in capsys.readouterr().err
    rows = parse_metrics_csv((tmp_path / "d" / "metrics.csv").read_text())
    assert rows and rows[-1].diverged


# ---------------------------------------------------------------------------
# gradcheck command (small custom sizes; the full presets run in acceptance)
# ---------------------------------------------------------------------------

def test_gradcheck_command_passes_f64(capsys):
    code = cli.main(["gradcheck", "--preset", "cifar10", "--f64", "--batch", "1",
                     "--input-size", "24", "--samples", "2", "--seed", "3"])
    out = capsys.readouterr().out
    assert code == 0
    assert "gradcheck: PASS" in out


# ---------------------------------------------------------------------------
# augment-preview / filters-dump
# ---------------------------------------------------------------------------

def test_augment_preview_all_off_is_byte_identical(tmp_path, capsys):
    rng = np.random.default_rng(0)
    src = tmp_path / "in.ppm"
    ppm.write_ppm(src, rng.random((3, 9, 7)).astype(np.float32))
    out = tmp_path / "prev"
    code = cli.main(["augment-preview", "--image", str(src), "--out", str(out)])
    assert code == 0
    assert (out / "after.ppm").read_bytes() == src.read_bytes()
    assert (out / "before.ppm").read_bytes() == src.read_bytes()


def test_augment_preview_with_toggles_changes_image(tmp_path):
    rng = np.random.default_rng(1)
    src = tmp_path / "in.ppm"
    ppm.write_ppm(src, rng.random((3, 16, 16)).astype(np.float32))
    out = tmp_path / "prev2"
    code = cli.main(["augment-preview", "--image", str(src), "--out", str(out),
                     "--color", "--contrast", "--translate", "--seed", "5"])
    assert code == 0
    assert (out / "after.ppm").read_bytes() != src.read_bytes()
    img = ppm.read_ppm(out / "after.ppm")
    assert img.shape == (3, 16, 16)


def test_filters_dump_renders_patches(bars_config, tmp_path):
    pre = tmp_path / "pre"
    assert cli.main(["pretrain", "--config", str(bars_config), "--out", str(pre)]) == 0
    dump = tmp_path / "filters.ppm"
    code = cli.main(["filters-dump", "--checkpoint", str(pre / "pretrain.zcae"),
                     "--layer", "1", "--out", str(dump)])
    assert code == 0
    img = ppm.read_ppm(dump)
    assert img.shape[0] == 3 and img.max() > 0
    # the rendered tiles are the checkpoint's filters themselves, min-max
    # normalized, up to 8-bit quantization
    bank = load_checkpoint(pre / "pretrain.zcae").params["conv1.filters"]
    grid = ppm.filter_grid(bank)
    npt.assert_allclose(img, grid, atol=1.0 / 255.0)


def test_ablation_script_enumerates_grid(bars_config, tmp_path, capsys):
    import importlib.util
    import pathlib

    script = pathlib.Path(__file__).resolve().parents[1] / "scripts" / "ablation.py"
    spec = importlib.util.spec_from_file_location("ablation", script)
    mod = importlib.util.module_from_spec(spec)
    spec.loader.exec_module(mod)

    import sys
    argv, sys.argv = sys.argv, ["ablation", "--config", str(bars_config),
                                "--out", str(tmp_path / "grid")]
    try:
        assert mod.main() == 0
    finally:
        sys.argv = argv
    out = capsys.readouterr().out.strip().splitlines()
    assert len(out) == 9  # one pretrain + 8 finetune conditions
    assert sum("--init random" in line for line in out) == 4
    assert sum("pretrain.zcae" in line for line in out) == 4
    names = sorted((tmp_path / "grid").glob("exp_*.ini"))
    assert len(names) == 8


def test_filters_dump_missing_layer(bars_config, tmp_path, capsys):
    pre = tmp_path / "pre"
    assert cli.main(["pretrain", "--config", str(bars_config), "--out", str(pre)]) == 0
    code = cli.main(["filters-dump", "--checkpoint", str(pre / "pretrain.zcae"),
                     "--layer", "9", "--out", str(tmp_path / "x.ppm")])
    assert code == 2
    assert "conv9" in capsys.readouterr().err
