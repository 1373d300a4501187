import os
import sys
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).parent))

from gantsne.dataset import LabeledDataset, save_csv  # noqa: E402

MNIST_DIR = Path(os.environ.get("GANTSNE_MNIST_DIR", "/root/data/mnist"))

# Filled by test_acceptance; printed once at the end of the session.
ACCEPTANCE_LINES: list[str] = []


def make_digits(n, labels=None, seed=0):
    """Random 0..255 integer images with cycling or given labels."""
    r = np.random.default_rng(seed)
    imgs = r.integers(0, 256, size=(n, 784)).astype(np.float64)
    if labels is None:
        labs = np.arange(n) % 10
    elif np.isscalar(labels):
        labs = np.full(n, labels)
    else:
        labs = np.asarray(labels)
    return LabeledDataset(imgs, labs)


@pytest.fixture
def digits_csv(tmp_path):
    """Write a small random digit CSV and return its path."""

    def _make(n=40, labels=None, seed=0, name="digits.csv"):
        path = tmp_path / name
        save_csv(make_digits(n, labels, seed), path)
        return path

    return _make


def mnist_paths(split="train"):
    prefix = "train" if split == "train" else "t10k"
    imgs = MNIST_DIR / f"{prefix}-images.idx3-ubyte"
    labs = MNIST_DIR / f"{prefix}-labels.idx1-ubyte"
    if not (imgs.exists() and labs.exists()):
        pytest.skip(f"MNIST {split} files not found under {MNIST_DIR} (set GANTSNE_MNIST_DIR)")
    return imgs, labs


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)
