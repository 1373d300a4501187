"""Versioned binary checkpoint container for a GanModel.

Layout (all integers little-endian)::

    offset  size  field
    0       8     magic  b"GTSNCKPT"
    8       4     uint32 format version (currently 1)
    12      4     uint32 reserved, zero
    16      8     uint64 header length H in bytes
    24      H     UTF-8 JSON header, keys sorted, no whitespace
    24+H    ...   float64 little-endian arrays, concatenated in the order of
                  header["arrays"]; each entry gives {"name", "shape"}

The header holds the training config, layer widths/activations, Adam
hyper-parameters and step counts, the per-epoch history, the class label
and the training RNG state. Arrays are the network parameters (W then b per
layer, generator first) followed by the Adam first and second moments in
the same order. Floats in the header use shortest round-trip repr, so a
load/save cycle reproduces the file byte for byte.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np

from .errors import FormatError, TruncatedError
from .neural import Activation, AdamState, DenseNet, Layer

__all__ = ["MAGIC", "FORMAT_VERSION", "save_checkpoint", "load_checkpoint"]

MAGIC = b"GTSNCKPT"
FORMAT_VERSION = 1
_PREFIX = struct.Struct("<8sIIQ")


def _net_meta(net: DenseNet) -> list[dict]:
    return [
        {"n_in": l.n_in, "n_out": l.n_out, "activation": l.activation.value, "slope": l.slope}
        for l in net.layers
    ]


def _opt_meta(opt: AdamState) -> dict:
    return {
        "step_count": opt.step_count,
        "learning_rate": opt.learning_rate,
        "beta1": opt.beta1,
        "beta2": opt.beta2,
        "epsilon": opt.epsilon,
    }


def save_checkpoint(model, path) -> None:
    arrays: list[tuple[str, np.ndarray]] = []
    for net_name, net in (("generator", model.generator), ("discriminator", model.discriminator)):
        for k, layer in enumerate(net.layers):
            arrays.append((f"{net_name}.{k}.weights", layer.weights))
            arrays.append((f"{net_name}.{k}.biases", layer.biases))
    for opt_name, opt in (("gen_opt", model.gen_opt), ("disc_opt", model.disc_opt)):
        for k, m in enumerate(opt.first_moment):
            arrays.append((f"{opt_name}.m.{k}", m))
        for k, v in enumerate(opt.second_moment):
            arrays.append((f"{opt_name}.v.{k}", v))

    header = {
        "format": "gantsne-checkpoint",
        "version": FORMAT_VERSION,
        "config": model.config.to_dict(),
        "class_label": model.class_label,
        "networks": {"generator": _net_meta(model.generator), "discriminator": _net_meta(model.discriminator)},
        "optimizers": {"gen_opt": _opt_meta(model.gen_opt), "disc_opt": _opt_meta(model.disc_opt)},
        "history": [list(s.row()) for s in model.history],
        "snapshot_epochs": list(model.snapshot_epochs),
        "rng_state": model.rng_state,
        "arrays": [{"name": name, "shape": list(a.shape)} for name, a in arrays],
    }
    blob = json.dumps(header, sort_keys=True, separators=(",", ":"), allow_nan=False).encode("utf-8")
    with open(path, "wb") as f:
        f.write(_PREFIX.pack(MAGIC, FORMAT_VERSION, 0, len(blob)))
        f.write(blob)
        for _, a in arrays:
            f.write(np.ascontiguousarray(a, dtype="<f8").tobytes())


def load_checkpoint(path):
    from .gan import EpochStats, GanModel, TrainConfig

    buf = Path(path).read_bytes()
    if len(buf) < _PREFIX.size:
        raise TruncatedError(f"{path}: too short for a checkpoint header")
    magic, version, _, hlen = _PREFIX.unpack_from(buf)
    if magic != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (magic {magic!r})")
    if version != FORMAT_VERSION:
        raise FormatError(f"{path}: unsupported checkpoint version {version}")
    start = _PREFIX.size
    if len(buf) < start + hlen:
        raise TruncatedError(f"{path}: header truncated")
    header = json.loads(buf[start:start + hlen].decode("utf-8"))
    offset = start + hlen
    arrays = {}
    for entry in header["arrays"]:
        shape = tuple(entry["shape"])
        count = int(np.prod(shape))
        end = offset + 8 * count
        if end > len(buf):
            raise TruncatedError(f"{path}: array {entry['name']} truncated")
        arrays[entry["name"]] = np.frombuffer(buf, dtype="<f8", count=count, offset=offset).reshape(shape).astype(np.float64)
        offset = end
    if offset != len(buf):
        raise FormatError(f"{path}: {len(buf) - offset} trailing bytes")

    def net(name: str) -> DenseNet:
        layers = []
        for k, meta in enumerate(header["networks"][name]):
            layers.append(
                Layer(
                    arrays[f"{name}.{k}.weights"],
                    arrays[f"{name}.{k}.biases"],
                    Activation(meta["activation"]),
                    meta["slope"],
                )
            )
        return DenseNet(layers)

    def opt(name: str, n_params: int) -> AdamState:
        meta = header["optimizers"][name]
        return AdamState(
            [arrays[f"{name}.m.{k}"] for k in range(n_params)],
            [arrays[f"{name}.v.{k}"] for k in range(n_params)],
            **meta,
        )

    gen, disc = net("generator"), net("discriminator")
    return GanModel(
        generator=gen,
        discriminator=disc,
        gen_opt=opt("gen_opt", len(gen.parameters())),
        disc_opt=opt("disc_opt", len(disc.parameters())),
        config=TrainConfig.from_dict(header["config"]),
        history=[EpochStats(int(r[0]), *map(float, r[1:])) for r in header["history"]],
        class_label=header["class_label"],
        rng_state=header["rng_state"],
        snapshot_epochs=list(header["snapshot_epochs"]),
    )
