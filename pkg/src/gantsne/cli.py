"""Command-line pipeline: train, generate, embed, compare.

Exit codes: 0 success, 1 usage error, 2 I/O or data error, 3 numerical
failure. Settings resolve as flags > ``--config`` JSON file > defaults, and
the resolved values are recorded in a manifest written before any long
computation starts.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from concurrent.futures import ThreadPoolExecutor
from datetime import datetime, timezone
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import __version__
from .checkpoint import load_checkpoint
from .compare import compare_embedding
from .dataset import (
    PixelRange,
    concat,
    filter_by_label,
    load_any,
    load_csv,
    normalize,
    sample_n,
    save_csv,
)
from .errors import ContractError, DataError, GanTsneError, InputError, NumericalError
from .gan import TrainConfig, generate, train
from .numerics import make_rng
from .plotting import render_svg
from .tsne import TsneConfig, run_tsne

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3

# Stream words for seeds derived inside the CLI.
STREAM_SAMPLE = 11
STREAM_SAMPLE_SYNTH = 12
STREAM_GENERATE = 13

DEFAULTS = {
    "train": {
        "epochs": 2400,
        "batch_size": 128,
        "lr": 0.0002,
        "seed": 0,
        "snapshot_every": 50,
        "snapshot_samples": 100,
        "snapshot_initial": False,
        "max_batches": None,
        "sample": None,
        "workers": 1,
        "init": "normal",
    },
    "generate": {"n": 4800, "seed": 0},
    "embed": {
        "dims": 2,
        "perplexity": 30.0,
        "iterations": 1000,
        "learning_rate": 200.0,
        "seed": 0,
        "digit": None,
        "sample": None,
        "svg": None,
        "tag": "data",
    },
    "compare": {
        "dims": 2,
        "perplexity": 30.0,
        "iterations": 1000,
        "learning_rate": 200.0,
        "seed": 0,
        "digit": None,
        "n_real": None,
        "n_synth": None,
    },
}
REQUIRED = {
    "train": ("data", "out"),
    "generate": ("model", "out"),
    "embed": ("data", "out"),
    "compare": ("real", "synthetic", "out_prefix"),
}


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="gantsne", description="GAN synthetic MNIST digits vs. real data, compared with exact t-SNE.")
    p.add_argument("--version", action="version", version=f"gantsne {__version__}")
    sub = p.add_subparsers(dest="command", parser_class=_Parser)

    def common(sp):
        sp.add_argument("--version", action="version", version=f"gantsne {__version__}")
        sp.add_argument("--config", help="JSON file of settings; explicit flags take precedence")
        sp.add_argument("--seed", type=int)

    t = sub.add_parser("train", help="train per-class GANs")
    common(t)
    t.add_argument("--data", nargs="+", metavar="PATH", help="CSV file, or IDX images and labels files")
    t.add_argument("--out", help="run directory")
    g = t.add_mutually_exclusive_group()
    g.add_argument("--digit", type=int)
    g.add_argument("--all-digits", action="store_true", default=None)
    t.add_argument("--epochs", type=int)
    t.add_argument("--batch-size", type=int)
    t.add_argument("--lr", type=float)
    t.add_argument("--snapshot-every", type=int)
    t.add_argument("--snapshot-samples", type=int)
    t.add_argument("--snapshot-initial", action="store_true", default=None, help="also snapshot before training")
    t.add_argument("--max-batches", type=int, help="cap on batches per epoch")
    t.add_argument("--sample", type=int, help="train on n randomly drawn images per class")
    t.add_argument("--workers", type=int, help="classes trained concurrently")
    t.add_argument("--init", choices=("normal", "glorot_uniform"))

    gen = sub.add_parser("generate", help="sample labelled synthetic digits")
    common(gen)
    gen.add_argument("--model", help="checkpoint file or run directory")
    gen.add_argument("--n", type=int)
    gen.add_argument("--out", help="output CSV")

    def tsne_flags(sp):
        sp.add_argument("--dims", type=int, choices=(2, 3))
        sp.add_argument("--perplexity", type=float)
        sp.add_argument("--iterations", type=int)
        sp.add_argument("--learning-rate", type=float)
        sp.add_argument("--digit", type=int)

    e = sub.add_parser("embed", help="t-SNE embedding of one dataset")
    common(e)
    tsne_flags(e)
    e.add_argument("--data", nargs="+", metavar="PATH")
    e.add_argument("--sample", type=int)
    e.add_argument("--out", help="embedding CSV")
    e.add_argument("--svg")
    e.add_argument("--tag", help="source_tag column value")

    c = sub.add_parser("compare", help="joint t-SNE of real and synthetic data")
    common(c)
    tsne_flags(c)
    c.add_argument("--real", nargs="+", metavar="PATH")
    c.add_argument("--synthetic", help="synthetic CSV")
    c.add_argument("--n-real", type=int)
    c.add_argument("--n-synth", type=int)
    c.add_argument("--out-prefix")
    p.subcommands = {"train": t, "generate": gen, "embed": e, "compare": c}
    return p


def _resolve(args) -> dict:
    cmd = args.command
    cfg = dict(DEFAULTS[cmd])
    if args.config:
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, ValueError) as exc:
            raise DataError(f"cannot read config {args.config}: {exc}") from None
        cfg.update({k.replace("-", "_"): v for k, v in loaded.items()})
    cfg.update({k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config")})
    missing = [name for name in REQUIRED[cmd] if cfg.get(name) in (None, [])]
    if missing:
        raise UsageError(", ".join("--" + m.replace("_", "-") for m in missing) + " required")
    return cfg


def _sha256(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as f:
        for chunk in iter(lambda: f.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def _write_manifest(path: Path, command: str, cfg: dict, inputs: Sequence) -> None:
    manifest = {
        "command": command,
        "config": cfg,
        "seed": cfg.get("seed"),
        "inputs": {str(p): _sha256(p) for p in inputs},
        "tool_version": __version__,
        "started_at": datetime.now(timezone.utc).isoformat(timespec="seconds"),
    }
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def _as_paths(v) -> list[str]:
    return [v] if isinstance(v, str) else list(v)


def cmd_train(cfg: dict) -> int:
    data_paths = _as_paths(cfg["data"])
    if cfg.get("digit") is not None:
        digits = [int(cfg["digit"])]
    elif cfg.get("all_digits"):
        digits = list(range(10))
    else:
        raise UsageError("one of --digit or --all-digits is required")
    for d in digits:
        if not 0 <= d <= 9:
            raise UsageError(f"--digit must be in 0..9, got {d}")

    def train_config(seed: int) -> TrainConfig:
        return TrainConfig(
            epochs=int(cfg["epochs"]),
            batch_size=int(cfg["batch_size"]),
            learning_rate=float(cfg["lr"]),
            snapshot_every=int(cfg["snapshot_every"]),
            snapshot_samples=int(cfg["snapshot_samples"]),
            snapshot_mosaic=min(25, int(cfg["snapshot_samples"])),
            snapshot_initial=bool(cfg["snapshot_initial"]),
            max_batches=cfg.get("max_batches"),
            seed=seed,
            init=cfg["init"],
        )

    try:
        train_config(int(cfg["seed"]))
    except InputError as exc:
        raise UsageError(str(exc)) from None
    ds = normalize(load_any(data_paths), PixelRange.SYM)
    out = Path(cfg["out"])
    _write_manifest(out / "manifest.json", "train", cfg, data_paths)

    def run_one(d: int) -> None:
        seed = int(cfg["seed"]) + d
        part = filter_by_label(ds, d)
        if cfg.get("sample") is not None:
            part = sample_n(part, int(cfg["sample"]), make_rng(seed, STREAM_SAMPLE))
        tc = train_config(seed)

        def progress(s):
            print(
                f"class {d} epoch {s.epoch} L_G={s.loss_g:.4f} L_D={s.loss_d:.4f} "
                f"D(x)={s.mean_d_real:.3f} D(G(z))={s.mean_d_fake:.3f}",
                flush=True,
            )

        train(part, tc, run_dir=out / f"class_{d}", class_label=d, progress=progress)

    workers = max(1, int(cfg["workers"]))
    if workers == 1 or len(digits) == 1:
        for d in digits:
            run_one(d)
    else:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            for fut in [pool.submit(run_one, d) for d in digits]:
                fut.result()
    return EXIT_OK


def _find_checkpoints(model_path: Path) -> list[Path]:
    if model_path.is_file():
        return [model_path]
    if (model_path / "checkpoint.bin").is_file():
        return [model_path / "checkpoint.bin"]
    found = sorted(model_path.glob("class_*/checkpoint.bin"), key=lambda p: int(p.parent.name.split("_")[1]))
    if not found:
        raise DataError(f"no checkpoint found at {model_path}")
    return found


def cmd_generate(cfg: dict) -> int:
    n = int(cfg["n"])
    if n < 0:
        raise UsageError("--n must be non-negative")
    ckpts = _find_checkpoints(Path(cfg["model"]))
    out = Path(cfg["out"])
    _write_manifest(out.with_name(out.name + ".manifest.json"), "generate", cfg, ckpts)
    models = [load_checkpoint(p) for p in ckpts]
    # Even split; the first n % k classes get one extra row.
    k = len(models)
    counts = [n // k + (1 if i < n % k else 0) for i in range(k)]
    parts = []
    for model, count in zip(models, counts):
        if model.class_label is None:
            raise ContractError("checkpoint has no class label")
        rng = make_rng(int(cfg["seed"]) + model.class_label, STREAM_GENERATE)
        parts.append(generate(model, count, rng))
    save_csv(concat(*parts), out)
    return EXIT_OK


def _tsne_config(cfg: dict) -> TsneConfig:
    tc = TsneConfig(
        out_dims=int(cfg["dims"]),
        perplexity=float(cfg["perplexity"]),
        iterations=int(cfg["iterations"]),
        learning_rate=float(cfg["learning_rate"]),
        seed=int(cfg["seed"]),
    )
    try:
        tc.validate()
    except InputError as exc:
        raise UsageError(str(exc)) from None
    return tc


def _write_embedding(path: Path, tags: Sequence[str], labels, points: np.ndarray) -> None:
    dims = points.shape[1]
    with open(path, "w", encoding="ascii", newline="") as f:
        f.write(",".join(["source_tag", "label"] + [f"y{i + 1}" for i in range(dims)]) + "\n")
        for tag, label, row in zip(tags, labels, points):
            f.write(",".join([tag, str(int(label))] + [repr(float(v)) for v in row]) + "\n")


def _write_kl(path: Path, trace: Sequence[float]) -> None:
    with open(path, "w", encoding="ascii", newline="") as f:
        f.write("iteration,kl\n")
        for i, v in enumerate(trace):
            f.write(f"{i},{v!r}\n")


def _tsne_progress(it: int, kl: float) -> None:
    print(f"iteration {it} KL={kl:.6f}", flush=True)


def cmd_embed(cfg: dict) -> int:
    paths = _as_paths(cfg["data"])
    tcfg = _tsne_config(cfg)
    out = Path(cfg["out"])
    ds = load_any(paths)
    if cfg.get("digit") is not None:
        ds = filter_by_label(ds, int(cfg["digit"]))
    if cfg.get("sample") is not None:
        ds = sample_n(ds, int(cfg["sample"]), make_rng(int(cfg["seed"]), STREAM_SAMPLE))
    _write_manifest(out.with_name(out.name + ".manifest.json"), "embed", cfg, paths)
    x = normalize(ds, PixelRange.UNIT).images
    emb = run_tsne(x, tcfg, progress=_tsne_progress)
    tags = [cfg["tag"]] * ds.n
    _write_embedding(out, tags, ds.labels, emb.points)
    _write_kl(out.with_name(out.name + ".kl.csv"), emb.kl_trace)
    if cfg.get("svg"):
        render_svg(emb.points, cfg["svg"], labels=ds.labels)
    return EXIT_OK


def cmd_compare(cfg: dict) -> int:
    real_paths = _as_paths(cfg["real"])
    tcfg = _tsne_config(cfg)
    seed = int(cfg["seed"])
    prefix = cfg["out_prefix"]
    real = load_any(real_paths)
    synth = load_csv(cfg["synthetic"])
    digit = cfg.get("digit")
    if digit is not None:
        digit = int(digit)
        real = filter_by_label(real, digit)
        matching = filter_by_label(synth, digit)
        if matching.n == 0:
            raise DataError(f"synthetic data has no rows labelled {digit} (labels: {sorted(set(synth.labels.tolist()))})")
        synth = matching
    if cfg.get("n_real") is not None:
        real = sample_n(real, int(cfg["n_real"]), make_rng(seed, STREAM_SAMPLE))
    if cfg.get("n_synth") is not None:
        synth = sample_n(synth, int(cfg["n_synth"]), make_rng(seed, STREAM_SAMPLE_SYNTH))
    _write_manifest(Path(prefix + ".manifest.json"), "compare", cfg, real_paths + [cfg["synthetic"]])

    both = concat(normalize(real, PixelRange.UNIT), normalize(synth, PixelRange.UNIT))
    tags = ["real"] * real.n + ["synthetic"] * synth.n
    emb = run_tsne(both.images, tcfg, progress=_tsne_progress)
    _write_embedding(Path(prefix + ".csv"), tags, both.labels, emb.points)
    _write_kl(Path(prefix + ".kl.csv"), emb.kl_trace)
    render_svg(emb.points, prefix + ".svg", sources=tags)
    report = compare_embedding(emb.points, tags)
    Path(prefix + ".report.json").write_text(report.to_json())
    print(
        f"overlap_ratio={report.overlap_ratio:.4f} knn_real_fraction={report.knn_real_fraction:.4f}",
        flush=True,
    )
    return EXIT_OK


COMMANDS = {"train": cmd_train, "generate": cmd_generate, "embed": cmd_embed, "compare": cmd_compare}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = _build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE
    try:
        cfg = _resolve(args)
        return COMMANDS[args.command](cfg)
    except UsageError as exc:
        parser.subcommands[args.command].print_usage(sys.stderr)
        print(f"gantsne {args.command}: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NumericalError as exc:
        print(f"gantsne {args.command}: numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (GanTsneError, OSError) as exc:
        print(f"gantsne {args.command}: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
