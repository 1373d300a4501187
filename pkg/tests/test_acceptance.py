"""Acceptance gate: one test per criterion, each printing a PASS/FAIL line.

Run alone with ``pytest tests/test_acceptance.py -v``; the summary lines
appear at the end of the pytest output. Criterion 4 needs the MNIST IDX
files (see ``GANTSNE_MNIST_DIR``) and takes several minutes.
"""

import csv
import json
import math
import struct
import time

import numpy as np
import pytest

import oracles
from conftest import ACCEPTANCE_LINES, make_digits, mnist_paths
from gantsne.cli import main
from gantsne.dataset import PixelRange, load_csv, load_idx, normalize, save_csv
from gantsne.errors import FormatError, TruncatedError
from gantsne.gan import TrainConfig, train
from gantsne.neural import Activation, DenseNet, Layer, backward, bce_loss, forward
from gantsne.tsne import TsneConfig, conditional_p, joint_p, joint_q, kl_divergence, kl_gradient, run_tsne, symmetrize_p


def verdict(num, title, checks, detail="", elapsed=None):
    ok = all(checks.values())
    timing = f" [{elapsed:.1f}s]" if elapsed is not None else ""
    line = f"{'PASS' if ok else 'FAIL'}  criterion {num}: {title}{timing} {detail}".rstrip()
    ACCEPTANCE_LINES.append(line)
    print(line)
    failed = [name for name, good in checks.items() if not good]
    assert not failed, f"criterion {num}: failed {failed}; {detail}"


def read_rows(path):
    with open(path, newline="") as f:
        return list(csv.reader(f))


# 1 ---------------------------------------------------------------------------

def rel_err(a, b):
    scale = max(abs(a), abs(b))
    return abs(a - b) / scale if scale > 1e-6 else 0.0


def test_criterion_1_gradient_oracles():
    t0 = time.perf_counter()
    worst_net = 0.0
    net_ok = True
    acts = [Activation.LEAKY_RELU, Activation.TANH, Activation.IDENTITY]
    for seed in range(40):
        r = np.random.default_rng(seed)
        depth = int(r.integers(1, 4))
        sizes = [int(v) for v in r.integers(2, 7, size=depth)] + [1]
        layers = []
        for k, (a, b) in enumerate(zip(sizes, sizes[1:])):
            act = Activation.SIGMOID if k == depth - 1 else acts[int(r.integers(0, 3))]
            # Unit-variance pre-activations keep the sigmoid away from the
            # loss clamp, where central differences lose their precision.
            layers.append(Layer(r.normal(size=(a, b)) / math.sqrt(a), r.normal(size=(1, b)), act))
        net = DenseNet(layers)
        batch = int(r.integers(1, 9))
        x = r.normal(size=(batch, sizes[0]))
        t = r.integers(0, 2, size=(batch, 1)).astype(float)
        out, tape = forward(net, x)
        grads = backward(net, tape, bce_loss(out, t)[1]).as_list()
        for param, grad in zip(net.parameters(), grads):
            for idx in np.ndindex(param.shape):
                num = oracles.central_diff(lambda: bce_loss(forward(net, x)[0], t)[0], param, idx, 1e-5)
                net_ok &= oracles.grad_close(grad[idx], num)
                worst_net = max(worst_net, rel_err(grad[idx], num))

    worst_kl = 0.0
    kl_ok = True
    for seed in range(12):
        r = np.random.default_rng(1000 + seed)
        n = int(r.integers(3, 11))
        d = 2 + seed % 2
        p = joint_p(r.normal(size=(n, 5)), min(2.0, n - 1.0))
        y = r.normal(size=(n, d))
        g = kl_gradient(p, y)
        for idx in np.ndindex(y.shape):
            num = oracles.central_diff(lambda: kl_divergence(p, joint_q(y)[0]), y, idx, 1e-6)
            kl_ok &= oracles.grad_close(g[idx], num)
            worst_kl = max(worst_kl, rel_err(g[idx], num))
    elapsed = time.perf_counter() - t0
    verdict(
        1, "gradient oracles",
        {"neural": net_ok, "tsne": kl_ok, "runtime<10s": elapsed < 10},
        f"worst relative error (|grad| > 1e-6) neural={worst_net:.2e} tsne={worst_kl:.2e}",
        elapsed,
    )


# 2 ---------------------------------------------------------------------------

def test_criterion_2_affinity_normalisation():
    t0 = time.perf_counter()
    r = np.random.default_rng(2)
    worst = {"cond_rows": 0.0, "joint_sum": 0.0, "joint_sym": 0.0, "kl_self": 0.0}
    min_kl = math.inf
    for _ in range(100):
        n = int(r.integers(3, 40))
        x = r.normal(size=(n, 6))
        cond, _ = conditional_p(x, min(5.0, n - 1.0))
        p = symmetrize_p(cond)
        q, _ = joint_q(r.normal(size=(n, 2 + int(r.integers(0, 2)))))
        worst["cond_rows"] = max(worst["cond_rows"], np.abs(cond.values.sum(axis=1) - 1).max())
        for m in (p.values, q.values):
            worst["joint_sum"] = max(worst["joint_sum"], abs(m.sum() - 1))
            worst["joint_sym"] = max(worst["joint_sym"], np.abs(m - m.T).max())
        worst["kl_self"] = max(worst["kl_self"], abs(kl_divergence(p, p)), abs(kl_divergence(q, q)))
        min_kl = min(min_kl, kl_divergence(p, q))
    elapsed = time.perf_counter() - t0
    verdict(
        2, "affinity normalisation",
        {
            "rows": worst["cond_rows"] <= 1e-10,
            "sum": worst["joint_sum"] <= 1e-10,
            "symmetry": worst["joint_sym"] <= 1e-12,
            "kl_self": worst["kl_self"] <= 1e-12,
            "gibbs": min_kl >= -1e-12,
            "runtime<5s": elapsed < 5,
        },
        " ".join(f"{k}={v:.1e}" for k, v in worst.items()) + f" min_kl={min_kl:.3f}",
        elapsed,
    )


# 3 ---------------------------------------------------------------------------

def separation_fixture(seed=0):
    """Two 10-D Gaussian blobs of 30 points, 10 apart along the first axis,
    with most of the variance in two directions."""
    r = np.random.default_rng(seed)
    scale = np.array([1.0, 1.0] + [0.1] * 8)
    a = r.normal(size=(30, 10)) * scale
    b = r.normal(size=(30, 10)) * scale
    b[:, 0] += 10.0
    return np.vstack([a, b]), np.repeat([0, 1], 30)


def test_criterion_3_tsne_separation():
    t0 = time.perf_counter()
    x, labels = separation_fixture(0)
    cfg = TsneConfig(perplexity=10, iterations=500, learning_rate=10, seed=0)
    emb = run_tsne(x, cfg)
    ratio = emb.kl_trace[-1] / emb.initial_kl
    purity = oracles.one_nn_purity(emb.points.tolist(), labels.tolist())
    elapsed = time.perf_counter() - t0
    verdict(
        3, "t-SNE separation fixture",
        {"kl_ratio<0.25": ratio < 0.25, "purity==1": purity == 1.0, "runtime<30s": elapsed < 30},
        f"KL {emb.initial_kl:.4f} -> {emb.kl_trace[-1]:.4f} (ratio {ratio:.3f}), 1-NN purity {purity:.0%}",
        elapsed,
    )


# 4 ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def desk_run(tmp_path_factory):
    train_imgs, train_labs = mnist_paths("train")
    test_imgs, test_labs = mnist_paths("test")
    root = tmp_path_factory.mktemp("desk")
    t0 = time.perf_counter()
    code = main([
        "train", "--data", str(train_imgs), str(train_labs), "--out", str(root / "run"),
        "--digit", "5", "--sample", "1000", "--epochs", "300", "--batch-size", "128",
        "--lr", "0.0002", "--seed", "0",
    ])
    assert code == 0
    code = main(["generate", "--model", str(root / "run"), "--n", "150", "--out", str(root / "synth.csv"),
                 "--seed", "0"])
    assert code == 0
    code = main([
        "compare", "--real", str(test_imgs), str(test_labs), "--synthetic", str(root / "synth.csv"),
        "--digit", "5", "--n-real", "600", "--n-synth", "150", "--perplexity", "30", "--seed", "0",
        "--out-prefix", str(root / "cmp"),
    ])
    assert code == 0
    return root, time.perf_counter() - t0


@pytest.mark.slow
def test_criterion_4_desk_scale_reproduction(desk_run):
    root, elapsed = desk_run
    report = json.loads((root / "cmp.report.json").read_text())
    hist = read_rows(root / "run" / "class_5" / "history.csv")
    header, rows = hist[0], hist[1:]
    fake = np.array([float(r[header.index("mean_D_fake")]) for r in rows])
    early, late = fake[:10].mean(), fake[-10:].mean()
    verdict(
        4, "desk-scale class-5 reproduction",
        {
            "300 epochs": len(rows) == 300,
            "overlap_ratio<1": report["overlap_ratio"] < 1.0,
            "D(G(z)) late>early": late > early,
            "runtime<15min": elapsed < 900,
        },
        f"overlap_ratio={report['overlap_ratio']:.3f} knn_real_fraction={report['knn_real_fraction']:.3f} "
        f"mean D(G(z)) epochs 1-10={early:.4f} final 10={late:.4f}",
        elapsed,
    )


# 5 ---------------------------------------------------------------------------

def test_criterion_5_determinism(tmp_path):
    t0 = time.perf_counter()
    data = tmp_path / "fixture.csv"
    save_csv(make_digits(320, seed=5), data)
    outputs = {}
    for run in ("a", "b"):
        d = tmp_path / run
        assert main(["train", "--data", str(data), "--out", str(d / "run"), "--all-digits", "--epochs", "1",
                     "--batch-size", "32", "--snapshot-every", "1", "--seed", "3"]) == 0
        assert main(["generate", "--model", str(d / "run"), "--n", "40", "--out", str(d / "synth.csv"),
                     "--seed", "3"]) == 0
        assert main(["embed", "--data", str(data), "--out", str(d / "emb.csv"), "--perplexity", "20",
                     "--iterations", "100", "--seed", "3", "--svg", str(d / "emb.svg")]) == 0
        outputs[run] = {
            p.relative_to(d).as_posix(): p.read_bytes()
            for p in sorted(d.rglob("*")) if p.is_file() and not p.name.endswith("manifest.json")
        }
    same = outputs["a"] == outputs["b"]
    elapsed = time.perf_counter() - t0
    verdict(
        5, "byte-identical reruns",
        {"identical": same, "runtime<1min": elapsed < 60},
        f"{len(outputs['a'])} data files compared",
        elapsed,
    )


# 6 ---------------------------------------------------------------------------

def test_criterion_6_format_conformance(tmp_path):
    results = {}

    def expect(name, exc, fn):
        try:
            fn()
        except exc:
            results[name] = True
        except Exception as other:  # wrong class
            results[name] = False
            print(f"{name}: raised {type(other).__name__}: {other}")
        else:
            results[name] = False

    img = tmp_path / "i.idx"
    lab = tmp_path / "l.idx"
    good_img = struct.pack(">IIII", 0x803, 2, 28, 28) + bytes(2 * 784)
    good_lab = struct.pack(">II", 0x801, 2) + bytes([1, 2])

    def idx_case(img_bytes, lab_bytes):
        img.write_bytes(img_bytes)
        lab.write_bytes(lab_bytes)
        return lambda: load_idx(img, lab)

    expect("idx bad image magic", FormatError, idx_case(struct.pack(">I", 0x802) + good_img[4:], good_lab))
    expect("idx bad label magic", FormatError, idx_case(good_img, struct.pack(">I", 0x803) + good_lab[4:]))
    expect("idx truncated images", TruncatedError, idx_case(good_img[:-1], good_lab))
    expect("idx truncated labels", TruncatedError, idx_case(good_img, good_lab[:-1]))
    expect("idx truncated header", TruncatedError, idx_case(good_img[:6], good_lab))

    bad = tmp_path / "bad.csv"
    bad.write_text("3," + ",".join(["0"] * 779) + "\n")
    expect("csv wrong column count", FormatError, lambda: load_csv(bad))

    run = tmp_path / "run"
    ds = normalize(make_digits(16, labels=4, seed=6), PixelRange.SYM)
    train(ds, TrainConfig(epochs=1, batch_size=8), run_dir=run / "class_4", class_label=4)
    out = tmp_path / "synth.csv"
    assert main(["generate", "--model", str(run), "--n", "12", "--out", str(out)]) == 0
    rows = read_rows(out)
    loaded = load_csv(out)
    again = tmp_path / "again.csv"
    save_csv(loaded, again)
    results["generate->load 785 columns"] = (
        all(len(r) == 785 for r in rows)
        and loaded.n == 12
        and np.array_equal(loaded.images, np.array([[float(v) for v in r[1:]] for r in rows]))
        and read_rows(again) == rows
    )
    verdict(6, "format conformance", results, f"{sum(results.values())}/{len(results)} cases")


# 7 ---------------------------------------------------------------------------

def test_criterion_7_schedule_accounting(tmp_path):
    t0 = time.perf_counter()
    ds = normalize(make_digits(128, labels=5, seed=7), PixelRange.SYM)
    model = train(ds, TrainConfig(epochs=200, snapshot_every=50, seed=0), run_dir=tmp_path)
    snaps = tmp_path / "snapshots"
    grids = sorted(snaps.glob("epoch_*.csv"), key=lambda p: int(p.stem.split("_")[1]))
    mosaics = sorted(snaps.glob("epoch_*.pgm"), key=lambda p: int(p.stem.split("_")[1]))
    sizes = [load_csv(p).n for p in grids]
    mosaic_ok = True
    for p in mosaics:
        data = p.read_bytes()
        header = b"P5\n140 140\n255\n"
        mosaic_ok &= data.startswith(header) and len(data) == len(header) + 140 * 140
    elapsed = time.perf_counter() - t0
    verdict(
        7, "snapshot schedule",
        {
            "4 grids": [p.stem for p in grids] == ["epoch_50", "epoch_100", "epoch_150", "epoch_200"],
            "100 samples each": sizes == [100] * 4,
            "4 mosaics of 25": len(mosaics) == 4 and mosaic_ok,
            "history": len(model.history) == 200,
        },
        f"grids={[p.stem for p in grids]} samples={sizes}",
        elapsed,
    )
