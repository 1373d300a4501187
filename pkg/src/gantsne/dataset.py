"""MNIST ingestion: IDX and 785-column CSV readers/writers, pixel
normalisation, class filtering and seeded sampling."""

from __future__ import annotations

import struct
from dataclasses import dataclass
from enum import Enum
from pathlib import Path
from typing import Union

import numpy as np

from .errors import (
    ConsistencyError,
    FormatError,
    InputError,
    LabelRangeError,
    ParseError,
    ShapeError,
    TruncatedError,
)

__all__ = [
    "IMAGE_SIDE",
    "IMAGE_SIZE",
    "PixelRange",
    "LabeledDataset",
    "load_idx",
    "save_idx",
    "load_csv",
    "save_csv",
    "load_any",
    "normalize",
    "filter_by_label",
    "sample_n",
    "concat",
]

IMAGE_SIDE = 28
IMAGE_SIZE = IMAGE_SIDE * IMAGE_SIDE
IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801

PathLike = Union[str, Path]


class PixelRange(str, Enum):
    RAW = "raw0_255"
    UNIT = "unit0_1"
    SYM = "sym1_1"

    @property
    def bounds(self) -> tuple[float, float]:
        return {"raw0_255": (0.0, 255.0), "unit0_1": (0.0, 1.0), "sym1_1": (-1.0, 1.0)}[self.value]


@dataclass(frozen=True)
class LabeledDataset:
    """N x 784 pixel matrix plus N digit labels."""

    images: np.ndarray
    labels: np.ndarray
    pixel_range: PixelRange = PixelRange.RAW

    def __post_init__(self):
        images = np.asarray(self.images, dtype=np.float64)
        if images.ndim == 1 and images.size == 0:
            images = images.reshape(0, IMAGE_SIZE)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if images.ndim != 2:
            raise ShapeError(f"images must be 2-D, got shape {images.shape}")
        if images.shape[0] != labels.shape[0]:
            raise ConsistencyError(f"{images.shape[0]} images but {labels.shape[0]} labels")
        if labels.size and (labels.min() < 0 or labels.max() > 9):
            bad = labels[(labels < 0) | (labels > 9)][0]
            raise LabelRangeError(f"label {bad} outside 0..9")
        lo, hi = self.pixel_range.bounds
        if images.size and (images.min() < lo or images.max() > hi):
            raise InputError(f"pixels outside [{lo}, {hi}] for range {self.pixel_range.value}")
        images.flags.writeable = False
        labels.flags.writeable = False
        object.__setattr__(self, "images", images)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return self.labels.shape[0]

    @property
    def n(self) -> int:
        return len(self)

    def subset(self, idx) -> "LabeledDataset":
        idx = np.asarray(idx, dtype=np.int64)
        return LabeledDataset(self.images[idx], self.labels[idx], self.pixel_range)


def _read_header(buf: bytes, path: PathLike, magic: int, n_dims: int) -> tuple[int, ...]:
    need = 4 * (1 + n_dims)
    if len(buf) < need:
        raise TruncatedError(f"{path}: header needs {need} bytes, file has {len(buf)}")
    fields = struct.unpack(f">{1 + n_dims}I", buf[:need])
    if fields[0] != magic:
        raise FormatError(f"{path}: bad magic 0x{fields[0]:08x}, expected 0x{magic:08x}")
    return fields[1:]


def load_idx(images_path: PathLike, labels_path: PathLike) -> LabeledDataset:
    """Read an MNIST image/label IDX pair (uncompressed, big-endian)."""
    img_buf = Path(images_path).read_bytes()
    lab_buf = Path(labels_path).read_bytes()
    n_img, rows, cols = _read_header(img_buf, images_path, IDX_IMAGES_MAGIC, 3)
    (n_lab,) = _read_header(lab_buf, labels_path, IDX_LABELS_MAGIC, 1)
    if rows * cols != IMAGE_SIZE:
        raise FormatError(f"{images_path}: images are {rows}x{cols}, expected {IMAGE_SIDE}x{IMAGE_SIDE}")
    if len(img_buf) - 16 < n_img * IMAGE_SIZE:
        raise TruncatedError(
            f"{images_path}: header declares {n_img} images but payload has {len(img_buf) - 16} bytes"
        )
    if len(lab_buf) - 8 < n_lab:
        raise TruncatedError(f"{labels_path}: header declares {n_lab} labels but payload has {len(lab_buf) - 8} bytes")
    if n_img != n_lab:
        raise ConsistencyError(f"{images_path} holds {n_img} images but {labels_path} holds {n_lab} labels")
    pixels = np.frombuffer(img_buf, dtype=np.uint8, count=n_img * IMAGE_SIZE, offset=16)
    labels = np.frombuffer(lab_buf, dtype=np.uint8, count=n_lab, offset=8)
    return LabeledDataset(pixels.reshape(n_img, IMAGE_SIZE).astype(np.float64), labels.astype(np.int64))


def _raw_bytes(ds: LabeledDataset) -> np.ndarray:
    if ds.pixel_range is not PixelRange.RAW:
        ds = normalize(ds, PixelRange.RAW)
    px = np.rint(ds.images)
    if not np.array_equal(px, ds.images):
        raise InputError("IDX output requires integral raw pixel values")
    return px.astype(np.uint8)


def save_idx(ds: LabeledDataset, images_path: PathLike, labels_path: PathLike) -> None:
    px = _raw_bytes(ds)
    with open(images_path, "wb") as f:
        f.write(struct.pack(">IIII", IDX_IMAGES_MAGIC, ds.n, IMAGE_SIDE, IMAGE_SIDE))
        f.write(px.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">II", IDX_LABELS_MAGIC, ds.n))
        f.write(ds.labels.astype(np.uint8).tobytes())


def _is_number(s: str) -> bool:
    try:
        float(s)
    except ValueError:
        return False
    return True


def load_csv(path: PathLike) -> LabeledDataset:
    """Read the 785-column layout: label, then 784 raw pixels.

    A single leading header row is skipped when its first field is not numeric.
    """
    labels: list[int] = []
    rows: list[list[float]] = []
    with open(path, "r", encoding="ascii", newline="") as f:
        for lineno, line in enumerate(f, start=1):
            line = line.strip()
            if not line:
                continue
            fields = line.split(",")
            if lineno == 1 and not _is_number(fields[0].strip()):
                continue
            if len(fields) != IMAGE_SIZE + 1:
                raise FormatError(f"{path}: row {lineno} has {len(fields)} fields, expected {IMAGE_SIZE + 1}")
            try:
                label = float(fields[0])
            except ValueError:
                raise ParseError(f"{path}: row {lineno}: label {fields[0]!r} is not numeric") from None
            if label != int(label) or not 0 <= label <= 9:
                raise LabelRangeError(f"{path}: row {lineno}: label {fields[0]} outside 0..9")
            try:
                px = [float(v) for v in fields[1:]]
            except ValueError:
                bad = next(v for v in fields[1:] if not _is_number(v))
                raise ParseError(f"{path}: row {lineno}: pixel {bad!r} is not numeric") from None
            labels.append(int(label))
            rows.append(px)
    images = np.array(rows, dtype=np.float64).reshape(len(rows), IMAGE_SIZE)
    lo, hi = PixelRange.RAW.bounds
    if images.size and (images.min() < lo or images.max() > hi):
        raise FormatError(f"{path}: pixel values outside [0, 255]")
    return LabeledDataset(images, np.array(labels, dtype=np.int64), PixelRange.RAW)


def _fmt(v: float) -> str:
    if v == int(v):
        return str(int(v))
    return repr(float(v))


def save_csv(ds: LabeledDataset, path: PathLike) -> None:
    """Write label-first rows with no header, pixels in the raw 0..255 range."""
    if ds.pixel_range is not PixelRange.RAW:
        ds = normalize(ds, PixelRange.RAW)
    with open(path, "w", encoding="ascii", newline="") as f:
        for label, row in zip(ds.labels, ds.images):
            f.write(str(int(label)))
            f.write(",")
            f.write(",".join(_fmt(v) for v in row))
            f.write("\n")


def load_any(paths) -> LabeledDataset:
    """One ``.csv`` path, or an IDX ``images labels`` pair."""
    if isinstance(paths, (str, Path)):
        paths = [paths]
    paths = list(paths)
    if len(paths) == 1:
        return load_csv(paths[0])
    if len(paths) == 2:
        return load_idx(paths[0], paths[1])
    raise InputError(f"expected a CSV path or an IDX images/labels pair, got {len(paths)} paths")


def normalize(ds: LabeledDataset, target: PixelRange) -> LabeledDataset:
    target = PixelRange(target)
    if target is ds.pixel_range:
        return ds
    x = ds.images
    # Route everything through raw 0..255.
    if ds.pixel_range is PixelRange.UNIT:
        x = x * 255.0
    elif ds.pixel_range is PixelRange.SYM:
        x = (x + 1.0) * 127.5
    if target is PixelRange.UNIT:
        x = x / 255.0
    elif target is PixelRange.SYM:
        x = x / 127.5 - 1.0
    lo, hi = target.bounds
    return LabeledDataset(np.clip(x, lo, hi), ds.labels, target)


def filter_by_label(ds: LabeledDataset, digit: int) -> LabeledDataset:
    if not 0 <= digit <= 9:
        raise InputError(f"digit must be in 0..9, got {digit}")
    return ds.subset(np.flatnonzero(ds.labels == digit))


def sample_n(ds: LabeledDataset, n: int, rng: np.random.Generator) -> LabeledDataset:
    """Uniform sample without replacement, in random order."""
    if not 0 <= n <= ds.n:
        raise InputError(f"cannot sample {n} rows from a dataset of {ds.n}")
    return ds.subset(rng.permutation(ds.n)[:n])


def concat(*parts: LabeledDataset) -> LabeledDataset:
    if not parts:
        raise InputError("nothing to concatenate")
    rng_ = parts[0].pixel_range
    parts = tuple(normalize(p, rng_) for p in parts)
    return LabeledDataset(
        np.vstack([p.images for p in parts]),
        np.concatenate([p.labels for p in parts]),
        rng_,
    )
