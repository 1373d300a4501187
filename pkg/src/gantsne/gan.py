"""Dense-network GAN: construction, adversarial training, snapshots and
labelled sample generation.

One unconditional model is trained per digit class; generated samples carry
the class label of the model that produced them.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .dataset import IMAGE_SIZE, LabeledDataset, PixelRange, save_csv
from .errors import ContractError, InputError, NumericalError
from .neural import (
    Activation,
    AdamState,
    DenseNet,
    adam_apply,
    backward,
    bce_loss,
    build_net,
    forward,
)
from .numerics import make_rng, rand_normal, rng_state
from .plotting import mosaic, write_pgm

__all__ = [
    "TrainConfig",
    "EpochStats",
    "GanModel",
    "HISTORY_COLUMNS",
    "build_gan",
    "disc_step",
    "gen_step",
    "train",
    "generate",
    "write_history",
]

HISTORY_COLUMNS = ("epoch", "L_G", "L_D", "mean_D_real", "mean_D_fake")

# Stream words for make_rng(seed, ...); keeps init, training and snapshot
# randomness independent of one another.
STREAM_INIT = 1
STREAM_TRAIN = 2
STREAM_SNAPSHOT = 3


@dataclass(frozen=True)
class TrainConfig:
    epochs: int = 2400
    batch_size: int = 128
    learning_rate: float = 0.0002
    noise_dim: int = 100
    snapshot_every: int = 50
    snapshot_samples: int = 100
    snapshot_mosaic: int = 25
    snapshot_initial: bool = False
    max_batches: Optional[int] = None
    seed: int = 0
    beta1: float = 0.5
    beta2: float = 0.999
    gen_hidden: tuple[int, ...] = (256, 512, 1024)
    disc_hidden: tuple[int, ...] = (512, 256)
    image_dim: int = IMAGE_SIZE
    init: str = "normal"

    def __post_init__(self):
        object.__setattr__(self, "gen_hidden", tuple(self.gen_hidden))
        object.__setattr__(self, "disc_hidden", tuple(self.disc_hidden))
        counts = ("epochs", "batch_size", "noise_dim", "snapshot_every", "snapshot_samples", "image_dim")
        for name in counts:
            if getattr(self, name) < 1:
                raise InputError(f"{name} must be at least 1, got {getattr(self, name)}")
        if not 1 <= self.snapshot_mosaic <= self.snapshot_samples:
            raise InputError("snapshot_mosaic must lie in 1..snapshot_samples")
        if self.max_batches is not None and self.max_batches < 1:
            raise InputError("max_batches must be at least 1")
        if not self.learning_rate > 0:
            raise InputError(f"learning_rate must be positive, got {self.learning_rate}")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["gen_hidden"] = list(self.gen_hidden)
        d["disc_hidden"] = list(self.disc_hidden)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "TrainConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})


@dataclass(frozen=True)
class EpochStats:
    epoch: int
    loss_g: float
    loss_d: float
    mean_d_real: float
    mean_d_fake: float

    def row(self) -> tuple:
        return (self.epoch, self.loss_g, self.loss_d, self.mean_d_real, self.mean_d_fake)


@dataclass
class GanModel:
    generator: DenseNet
    discriminator: DenseNet
    gen_opt: AdamState
    disc_opt: AdamState
    config: TrainConfig
    history: list[EpochStats] = field(default_factory=list)
    class_label: Optional[int] = None
    rng_state: Optional[dict] = None
    snapshot_epochs: list[int] = field(default_factory=list)

    def copy(self) -> "GanModel":
        return GanModel(
            self.generator.copy(),
            self.discriminator.copy(),
            self.gen_opt.copy(),
            self.disc_opt.copy(),
            self.config,
            list(self.history),
            self.class_label,
            None if self.rng_state is None else dict(self.rng_state),
            list(self.snapshot_epochs),
        )


def build_gan(config: TrainConfig = TrainConfig()) -> GanModel:
    """Generator noise -> 256 -> 512 -> 1024 -> 784 (tanh out) and
    discriminator 784 -> 512 -> 256 -> 1 (sigmoid out), LeakyReLU hidden."""
    rng = make_rng(config.seed, STREAM_INIT)
    g_sizes = [config.noise_dim, *config.gen_hidden, config.image_dim]
    d_sizes = [config.image_dim, *config.disc_hidden, 1]
    gen = build_net(g_sizes, [Activation.LEAKY_RELU] * len(config.gen_hidden) + [Activation.TANH], rng, init=config.init)
    disc = build_net(d_sizes, [Activation.LEAKY_RELU] * len(config.disc_hidden) + [Activation.SIGMOID], rng, init=config.init)
    hyper = dict(learning_rate=config.learning_rate, beta1=config.beta1, beta2=config.beta2)
    return GanModel(gen, disc, AdamState.for_net(gen, **hyper), AdamState.for_net(disc, **hyper), config)


def _disc_update(model: GanModel, real_batch: np.ndarray, rng: np.random.Generator) -> tuple[float, float, float]:
    b = real_batch.shape[0]
    z = rand_normal(rng, b, model.config.noise_dim)
    fake, _ = forward(model.generator, z)
    # Real and fake go through the discriminator as one stacked batch; the
    # two BCE terms are still averaged separately.
    out, tape = forward(model.discriminator, np.vstack([real_batch, fake]))
    d_real, d_fake = out[:b], out[b:]
    loss_r, g_r = bce_loss(d_real, np.ones_like(d_real))
    loss_f, g_f = bce_loss(d_fake, np.zeros_like(d_fake))
    grads = backward(model.discriminator, tape, np.vstack([g_r, g_f]))
    adam_apply(model.discriminator, grads, model.disc_opt)
    return loss_r + loss_f, float(d_real.mean()), float(d_fake.mean())


def disc_step(model: GanModel, real_batch, rng: np.random.Generator) -> float:
    """L_D = BCE(D(x), 1) + BCE(D(G(z)), 0); updates the discriminator only."""
    return _disc_update(model, np.asarray(real_batch, dtype=np.float64), rng)[0]


def generator_loss_and_grads(model: GanModel, z: np.ndarray):
    """L_G = BCE(D(G(z)), 1) and its gradients w.r.t. generator parameters."""
    fake, g_tape = forward(model.generator, z)
    pred, d_tape = forward(model.discriminator, fake)
    loss, dpred = bce_loss(pred, np.ones_like(pred))
    d_grads = backward(model.discriminator, d_tape, dpred, param_grads=False)
    return loss, backward(model.generator, g_tape, d_grads.input)


def gen_step(model: GanModel, batch_size: int, rng: np.random.Generator) -> float:
    """Non-saturating generator update through a frozen discriminator."""
    if batch_size < 1:
        raise InputError(f"batch_size must be at least 1, got {batch_size}")
    z = rand_normal(rng, batch_size, model.config.noise_dim)
    loss, grads = generator_loss_and_grads(model, z)
    adam_apply(model.generator, grads, model.gen_opt)
    return loss


def _to_raw(images: np.ndarray) -> np.ndarray:
    return np.clip(np.rint((images + 1.0) * 127.5), 0.0, 255.0)


def generate(model: GanModel, n: int, rng: np.random.Generator) -> LabeledDataset:
    if model.class_label is None:
        raise ContractError("model has no class_label; train it on a single digit class")
    if n < 0:
        raise InputError(f"n must be non-negative, got {n}")
    if n == 0:
        return LabeledDataset(np.zeros((0, model.config.image_dim)), np.zeros(0, dtype=np.int64))
    z = rand_normal(rng, n, model.config.noise_dim)
    out, _ = forward(model.generator, z)
    return LabeledDataset(_to_raw(out), np.full(n, model.class_label, dtype=np.int64), PixelRange.RAW)


def _write_snapshot(model: GanModel, epoch: int, rng: np.random.Generator, snap_dir: Path) -> None:
    cfg = model.config
    z = rand_normal(rng, cfg.snapshot_samples, cfg.noise_dim)
    raw = _to_raw(forward(model.generator, z)[0])
    label = 0 if model.class_label is None else model.class_label
    save_csv(LabeledDataset(raw, np.full(len(raw), label)), snap_dir / f"epoch_{epoch}.csv")
    pick = np.sort(rng.choice(len(raw), size=cfg.snapshot_mosaic, replace=False))
    side = int(round(np.sqrt(cfg.image_dim)))
    cols = int(np.ceil(np.sqrt(cfg.snapshot_mosaic)))
    write_pgm(mosaic(raw[pick], cols=cols, side=side), snap_dir / f"epoch_{epoch}.pgm")


def _fmt_row(values) -> str:
    return ",".join(str(v) if isinstance(v, int) else repr(float(v)) for v in values)


def write_history(history: list[EpochStats], path) -> None:
    with open(path, "w", encoding="ascii", newline="") as f:
        f.write(",".join(HISTORY_COLUMNS) + "\n")
        for s in history:
            f.write(_fmt_row(s.row()) + "\n")


def train(
    ds: LabeledDataset,
    config: TrainConfig = TrainConfig(),
    run_dir=None,
    class_label: Optional[int] = None,
    progress: Optional[Callable[[EpochStats], None]] = None,
) -> GanModel:
    """Adversarial training: per epoch shuffle, then one discriminator and
    one generator step per full batch (the trailing partial batch is dropped).

    With *run_dir*, writes ``history.csv``, ``checkpoint.bin`` and
    ``snapshots/epoch_{k}.csv|.pgm`` every ``snapshot_every`` epochs (plus
    ``epoch_0`` before training when ``snapshot_initial`` is set).
    """
    if ds.n == 0:
        raise InputError("cannot train on an empty dataset")
    if ds.pixel_range is not PixelRange.SYM:
        raise InputError(f"training data must be in the sym1_1 range, got {ds.pixel_range.value}")
    if ds.images.shape[1] != config.image_dim:
        raise InputError(f"images have {ds.images.shape[1]} pixels, config expects {config.image_dim}")
    if ds.n < config.batch_size:
        raise InputError(f"dataset has {ds.n} rows, fewer than one batch of {config.batch_size}")
    if class_label is None:
        uniq = np.unique(ds.labels)
        if len(uniq) == 1:
            class_label = int(uniq[0])

    model = build_gan(config)
    model.class_label = class_label
    rng = make_rng(config.seed, STREAM_TRAIN)
    snap_rng = make_rng(config.seed, STREAM_SNAPSHOT)

    snap_dir = None
    if run_dir is not None:
        run_dir = Path(run_dir)
        snap_dir = run_dir / "snapshots"
        snap_dir.mkdir(parents=True, exist_ok=True)

    def snapshot(epoch: int) -> None:
        model.snapshot_epochs.append(epoch)
        if snap_dir is not None:
            _write_snapshot(model, epoch, snap_rng, snap_dir)

    if config.snapshot_initial:
        snapshot(0)

    x = ds.images
    b = config.batch_size
    n_batches = ds.n // b
    if config.max_batches is not None:
        n_batches = min(n_batches, config.max_batches)
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(ds.n)
        lg = ld = dr = df = 0.0
        for k in range(n_batches):
            batch = x[order[k * b:(k + 1) * b]]
            loss_d, d_real, d_fake = _disc_update(model, batch, rng)
            loss_g = gen_step(model, b, rng)
            if not (np.isfinite(loss_d) and np.isfinite(loss_g)):
                raise NumericalError(f"non-finite loss at epoch {epoch}, batch {k} (L_D={loss_d}, L_G={loss_g})")
            lg += loss_g
            ld += loss_d
            dr += d_real
            df += d_fake
        stats = EpochStats(epoch, lg / n_batches, ld / n_batches, dr / n_batches, df / n_batches)
        model.history.append(stats)
        if progress is not None:
            progress(stats)
        if epoch % config.snapshot_every == 0:
            snapshot(epoch)

    model.rng_state = rng_state(rng)
    if run_dir is not None:
        from .checkpoint import save_checkpoint

        write_history(model.history, run_dir / "history.csv")
        save_checkpoint(model, run_dir / "checkpoint.bin")
    return model
