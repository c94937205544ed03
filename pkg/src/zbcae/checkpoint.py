"""Checkpoint file format and metrics CSV.

Checkpoint layout (all integers little-endian):

    magic  b"ZCAE"
    u32    format version (currently 1)
    then length-prefixed records, each [u64 length][payload]:
      0                network description, UTF-8 text
      1                weights manifest, UTF-8 lines "name dim0 dim1 ..."
      2 .. 1+P         raw float32 weight payloads, manifest order
      2+P              velocities manifest (may be empty)
      .. end-1         raw float32 velocity payloads
      last             training state, UTF-8 "key=value" lines
                       (phase, depth, epoch, learning_rate, trained_depth,
                       seed - the RNG state, since every random stream is
                       derived from it plus the position counters)

Weights are stored float32 regardless of in-memory dtype; save->load->save
is byte-identical.
"""

import struct
from dataclasses import dataclass, field

import numpy as np

from zbcae.config import NetworkSpec
from zbcae.errors import FormatError
from zbcae.train import MetricsRow, TrainState

MAGIC = b"ZCAE"
VERSION = 1


@dataclass
class Checkpoint:
    network: NetworkSpec
    params: dict
    velocities: dict = field(default_factory=dict)
    state: TrainState = field(default_factory=TrainState)
    trained_depth: int = 0
    seed: int = 0
    version: int = VERSION


def _manifest(arrays):
    return "".join(
        f"{name} {' '.join(str(d) for d in arr.shape)}\n" for name, arr in arrays.items()
    )


def _records(ckpt):
    yield ckpt.network.to_text().encode()
    yield _manifest(ckpt.params).encode()
    for arr in ckpt.params.values():
        yield np.ascontiguousarray(arr, dtype="<f4").tobytes()
    yield _manifest(ckpt.velocities).encode()
    for arr in ckpt.velocities.values():
        yield np.ascontiguousarray(arr, dtype="<f4").tobytes()
    state = (
        f"phase={ckpt.state.phase}\n"
        f"depth={ckpt.state.depth}\n"
        f"epoch={ckpt.state.epoch}\n"
        f"learning_rate={ckpt.state.learning_rate!r}\n"
        f"trained_depth={ckpt.trained_depth}\n"
        f"seed={ckpt.seed}\n"
    )
    yield state.encode()


def save_checkpoint(path, ckpt):
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<I", ckpt.version))
        for payload in _records(ckpt):
            fh.write(struct.pack("<Q", len(payload)))
            fh.write(payload)


def _read_exact(fh, count, what):
    blob = fh.read(count)
    if len(blob) != count:
        raise FormatError(f"truncated checkpoint while reading {what}")
    return blob


def _read_record(fh, what):
    (length,) = struct.unpack("<Q", _read_exact(fh, 8, f"{what} length"))
    return _read_exact(fh, length, what)


def _parse_manifest(text, fh):
    arrays = {}
    for line in text.strip().splitlines():
        parts = line.split()
        name, dims = parts[0], tuple(int(d) for d in parts[1:])
        count = int(np.prod(dims)) if dims else 1
        blob = _read_record(fh, f"payload for {name}")
        if len(blob) != 4 * count:
            raise FormatError(
                f"{name}: payload is {len(blob)} bytes, dims {dims} need {4 * count}"
            )
        arrays[name] = np.frombuffer(blob, "<f4").reshape(dims).copy()
    return arrays


def load_checkpoint(path):
    with open(path, "rb") as fh:
        magic = fh.read(4)
        if magic != MAGIC:
            raise FormatError(
                f"bad magic at offset 0: expected {MAGIC!r}, got {magic!r}"
            )
        (version,) = struct.unpack("<I", _read_exact(fh, 4, "version"))
        if version != VERSION:
            raise FormatError(f"unsupported checkpoint version {version}")
        network = NetworkSpec.from_text(_read_record(fh, "network description").decode())
        params = _parse_manifest(_read_record(fh, "weights manifest").decode(), fh)
        velocities = _parse_manifest(_read_record(fh, "velocity manifest").decode(), fh)
        kv = {}
        for line in _read_record(fh, "state").decode().strip().splitlines():
            key, _, val = line.partition("=")
            kv[key] = val
        state = TrainState(
            phase=kv.get("phase", "pretrain"),
            depth=int(kv.get("depth", 1)),
            epoch=int(kv.get("epoch", 0)),
            learning_rate=float(kv.get("learning_rate", 0.0)),
            velocities=velocities,
        )
        return Checkpoint(
            network=network,
            params=params,
            velocities=velocities,
            state=state,
            trained_depth=int(kv.get("trained_depth", 0)),
            seed=int(kv.get("seed", 0)),
            version=version,
        )


def _fmt(value):
    if isinstance(value, float):
        return repr(value)
    return str(value)


def metrics_csv(rows):
    """Render metric rows as the append-only CSV contract."""
    lines = ["phase,epoch,loss,accuracy,seconds,diverged"]
    for r in rows:
        lines.append(
            f"{r.phase},{r.epoch},{_fmt(r.loss)},{_fmt(r.accuracy)},"
            f"{_fmt(r.seconds)},{int(r.diverged)}"
        )
    return "\n".join(lines) + "\n"


def parse_metrics_csv(text):
    rows = []
    lines = text.strip().splitlines()
    if lines and lines[0] == "phase,epoch,loss,accuracy,seconds,diverged":
        lines = lines[1:]
    for line in lines:
        phase, epoch, loss, acc, secs, div = line.split(",")
        rows.append(MetricsRow(phase, int(epoch), float(loss), float(acc),
                               float(secs), bool(int(div))))
    return rows
