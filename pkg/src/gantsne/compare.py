"""Numeric summary of how a synthetic cloud sits inside a real one in a
joint embedding.

``overlap_ratio`` is the distance between the two centroids divided by the
mean distance of real points to their own centroid; below 1 the synthetic
centroid lies within one mean radius of the real cloud. ``knn_real_fraction``
averages, over synthetic points, the share of real points among their k
nearest embedding neighbours.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .errors import InputError
from .numerics import as_matrix

__all__ = ["ComparisonReport", "compare_embedding", "knn_real_fraction"]

KNN_K = 10


@dataclass(frozen=True)
class ComparisonReport:
    n_real: int
    n_synthetic: int
    centroid_distance: float
    mean_real_spread: float
    overlap_ratio: float
    knn_real_fraction: float

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"


def knn_real_fraction(points: np.ndarray, is_real: np.ndarray, k: int = KNN_K) -> float:
    n = len(points)
    syn = np.flatnonzero(~is_real)
    if len(syn) == 0:
        return 0.0
    k = min(k, n - 1)
    if k < 1:
        return 0.0
    fractions = []
    # Chunked so memory stays O(chunk * N).
    for start in range(0, len(syn), 512):
        rows = syn[start:start + 512]
        d = ((points[rows, None, :] - points[None, :, :]) ** 2).sum(axis=-1)
        d[np.arange(len(rows)), rows] = np.inf
        nn = np.argsort(d, axis=1, kind="stable")[:, :k]
        fractions.append(is_real[nn].mean(axis=1))
    return float(np.concatenate(fractions).mean())


def compare_embedding(points, sources: Sequence[str], k: int = KNN_K) -> ComparisonReport:
    pts = as_matrix(points)
    tags = np.asarray(sources)
    if len(tags) != len(pts):
        raise InputError(f"{len(pts)} points but {len(tags)} source tags")
    is_real = tags == "real"
    is_syn = tags == "synthetic"
    if not is_real.any() or not is_syn.any():
        raise InputError("need at least one real and one synthetic point")
    real, syn = pts[is_real], pts[is_syn]
    c_real = real.mean(axis=0)
    c_syn = syn.mean(axis=0)
    centroid_distance = float(np.sqrt(((c_syn - c_real) ** 2).sum()))
    spread = float(np.sqrt(((real - c_real) ** 2).sum(axis=1)).mean())
    ratio = centroid_distance / spread if spread > 0 else (0.0 if centroid_distance == 0 else float("inf"))
    return ComparisonReport(
        n_real=int(is_real.sum()),
        n_synthetic=int(is_syn.sum()),
        centroid_distance=centroid_distance,
        mean_real_spread=spread,
        overlap_ratio=ratio,
        knn_real_fraction=knn_real_fraction(pts[is_real | is_syn], is_real[is_real | is_syn], k),
    )
