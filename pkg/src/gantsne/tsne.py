"""Exact O(N^2) t-SNE.

Input affinities are Gaussian conditionals whose bandwidths are calibrated
by bisection to a target perplexity, then symmetrised into a joint
distribution. Output affinities use a Student-t kernel with one degree of
freedom. Coordinates are optimised by momentum gradient descent on the
KL divergence between the two.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional

import numpy as np

from .errors import DegenerateDataError, InputError, NumericalError, ShapeError
from .numerics import as_matrix, make_rng, pairwise_sq_dists

__all__ = [
    "AffinityKind",
    "AffinityMatrix",
    "TsneConfig",
    "Embedding",
    "P_FLOOR",
    "conditional_p",
    "symmetrize_p",
    "joint_p",
    "joint_q",
    "kl_divergence",
    "kl_gradient",
    "initial_embedding",
    "run_tsne",
]

P_FLOOR = 1e-12
Q_DENOM_FLOOR = 1e-12
ENTROPY_TOL = 1e-5
CONVERGED_TOL = 1e-13
MAX_BISECTIONS = 50
MAX_BRACKET_STEPS = 200


class AffinityKind(str, Enum):
    CONDITIONAL_P = "conditional_p"
    JOINT_P = "joint_p"
    JOINT_Q = "joint_q"


@dataclass(frozen=True)
class AffinityMatrix:
    values: np.ndarray
    kind: AffinityKind

    @property
    def n(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True)
class TsneConfig:
    out_dims: int = 2
    perplexity: float = 30.0
    iterations: int = 1000
    learning_rate: float = 200.0
    initial_momentum: float = 0.5
    final_momentum: float = 0.8
    momentum_switch_iter: int = 250
    early_exaggeration: float = 12.0
    exaggeration_iters: int = 250
    init_std: float = 1e-2
    adaptive_gains: bool = True
    min_gain: float = 0.01
    seed: int = 0

    def validate(self, n: Optional[int] = None) -> None:
        if self.out_dims not in (2, 3):
            raise InputError(f"out_dims must be 2 or 3, got {self.out_dims}")
        if not self.perplexity > 1:
            raise InputError(f"perplexity must exceed 1, got {self.perplexity}")
        if n is not None and not self.perplexity < n:
            raise InputError(f"perplexity {self.perplexity} must be below the point count {n}")
        if self.iterations < 1:
            raise InputError("iterations must be at least 1")
        if not self.learning_rate > 0:
            raise InputError("learning_rate must be positive")


@dataclass
class Embedding:
    points: np.ndarray
    kl_trace: list[float] = field(default_factory=list)
    # KL of the starting coordinates, before any update.
    initial_kl: float = float("nan")


def _row_entropy(dist_row: np.ndarray, beta: float) -> tuple[float, np.ndarray]:
    # Shift by the nearest distance so the largest weight is exp(0) = 1.
    shifted = dist_row - dist_row.min()
    w = np.exp(-beta * shifted)
    total = w.sum()
    p = w / total
    h_nats = math.log(total) + beta * float(np.dot(shifted, w)) / total
    return h_nats / math.log(2.0), p


def conditional_p(x, perplexity: float) -> tuple[AffinityMatrix, np.ndarray]:
    """Per-point Gaussian conditionals p_{j|i} calibrated to *perplexity*.

    Returns the affinity matrix and the per-point bandwidths sigma_i, where
    the kernel is ``exp(-d_ij / (2 sigma_i^2))``.
    """
    x = as_matrix(x)
    n = x.shape[0]
    if n < 3:
        raise InputError(f"t-SNE needs at least 3 points, got {n}")
    if not 1 < perplexity < n:
        raise InputError(f"perplexity must lie in (1, {n}), got {perplexity}")
    d = pairwise_sq_dists(x)
    if not d.any():
        raise DegenerateDataError("all input points coincide; pairwise distances are all zero")

    target = math.log2(perplexity)
    p = np.zeros((n, n))
    betas = np.ones(n)
    for i in range(n):
        row = np.delete(d[i], i)
        beta = 1.0 / max(float(np.median(row)), 1e-300)
        h, pi = _row_entropy(row, beta)
        # Entropy falls as beta (precision) grows. Double or halve beta
        # until the target is bracketed, then bisect.
        lo, hi = (beta, None) if h > target else (None, beta)
        for _ in range(MAX_BRACKET_STEPS):
            if lo is not None and hi is not None:
                break
            beta = beta * 2.0 if hi is None else beta / 2.0
            h, pi = _row_entropy(row, beta)
            if h > target:
                lo = beta
            else:
                hi = beta
        if lo is not None and hi is not None:
            # Bisect to convergence; the 1e-5 contract is met long before.
            for _ in range(MAX_BISECTIONS):
                if abs(h - target) <= CONVERGED_TOL:
                    break
                beta = 0.5 * (lo + hi)
                h, pi = _row_entropy(row, beta)
                if h > target:
                    lo = beta
                else:
                    hi = beta
        betas[i] = beta
        p[i, :i] = pi[:i]
        p[i, i + 1:] = pi[i:]
    sigmas = np.sqrt(1.0 / (2.0 * betas))
    return AffinityMatrix(p, AffinityKind.CONDITIONAL_P), sigmas


def symmetrize_p(cond: AffinityMatrix) -> AffinityMatrix:
    """Joint P_ij = (p_{j|i} + p_{i|j}) / 2N with off-diagonal floor."""
    if cond.kind is not AffinityKind.CONDITIONAL_P:
        raise InputError(f"expected conditional affinities, got {cond.kind.value}")
    c = cond.values
    n = c.shape[0]
    p = (c + c.T) / (2.0 * n)
    np.maximum(p, P_FLOOR, out=p)
    np.fill_diagonal(p, 0.0)
    p /= p.sum()
    return AffinityMatrix(p, AffinityKind.JOINT_P)


def joint_p(x, perplexity: float) -> AffinityMatrix:
    cond, _ = conditional_p(x, perplexity)
    return symmetrize_p(cond)


def joint_q(y) -> tuple[AffinityMatrix, np.ndarray]:
    """Student-t joint affinities and their unnormalised numerators."""
    y = as_matrix(y)
    num = 1.0 / (1.0 + pairwise_sq_dists(y))
    np.fill_diagonal(num, 0.0)
    q = num / max(num.sum(), Q_DENOM_FLOOR)
    return AffinityMatrix(q, AffinityKind.JOINT_Q), num


def _values(m) -> np.ndarray:
    return m.values if isinstance(m, AffinityMatrix) else np.asarray(m, dtype=np.float64)


def kl_divergence(p, q) -> float:
    """KL(P || Q) in nats, summed over entries with P_ij >= the floor."""
    pv, qv = _values(p), _values(q)
    if pv.shape != qv.shape:
        raise ShapeError(f"P is {pv.shape} but Q is {qv.shape}")
    mask = pv >= P_FLOOR
    np.fill_diagonal(mask, False)
    pm = pv[mask]
    qm = np.maximum(qv[mask], np.finfo(np.float64).tiny)
    return float(np.sum(pm * np.log(pm / qm)))


def _gradient_from_q(pv: np.ndarray, y: np.ndarray, q: np.ndarray, num: np.ndarray) -> np.ndarray:
    w = (pv - q) * num
    return 4.0 * (w.sum(axis=1)[:, None] * y - w @ y)


def kl_gradient(p, y) -> np.ndarray:
    """dKL/dy_i = 4 sum_j (P_ij - Q_ij)(y_i - y_j)(1 + |y_i - y_j|^2)^-1."""
    pv = _values(p)
    y = as_matrix(y)
    if pv.shape != (y.shape[0], y.shape[0]):
        raise ShapeError(f"P is {pv.shape} but y has {y.shape[0]} rows")
    q, num = joint_q(y)
    return _gradient_from_q(pv, y, q.values, num)


def initial_embedding(n: int, config: TsneConfig) -> np.ndarray:
    """Seeded N(0, init_std^2) start; row i depends only on (seed, i)."""
    rng = make_rng(config.seed, 0x7153)
    return config.init_std * rng.standard_normal((n, config.out_dims))


def run_tsne(
    x,
    config: TsneConfig = TsneConfig(),
    init: Optional[np.ndarray] = None,
    progress: Optional[Callable[[int, float], None]] = None,
    progress_every: int = 50,
    observer: Optional[Callable[[int, np.ndarray], None]] = None,
) -> Embedding:
    """Optimise an embedding of *x*.

    *init* overrides the seeded initial coordinates. *progress* receives
    (iteration, KL) every *progress_every* iterations; *observer* receives
    (iteration, coordinates) after every update.
    """
    x = as_matrix(x)
    n = x.shape[0]
    config.validate(n)
    p = joint_p(x, config.perplexity).values
    y = initial_embedding(n, config) if init is None else as_matrix(init).copy()
    if y.shape != (n, config.out_dims):
        raise ShapeError(f"initial embedding must be {n}x{config.out_dims}, got {y.shape}")
    y -= y.mean(axis=0)
    update = np.zeros_like(y)
    gains = np.ones_like(y)
    q, num = joint_q(y)
    initial_kl = kl_divergence(p, q)
    trace: list[float] = []
    for it in range(config.iterations):
        exaggerate = it < config.exaggeration_iters
        momentum = config.initial_momentum if it < config.momentum_switch_iter else config.final_momentum
        pe = p * config.early_exaggeration if exaggerate else p
        grad = _gradient_from_q(pe, y, q.values, num)
        if config.adaptive_gains:
            # Per-coordinate step sizes grow while the gradient keeps opposing
            # the previous move and shrink when it reverses.
            same = (grad > 0) == (update > 0)
            gains = np.where(same, gains * 0.8, gains + 0.2)
            np.maximum(gains, config.min_gain, out=gains)
            update = momentum * update - config.learning_rate * gains * grad
        else:
            update = momentum * update - config.learning_rate * grad
        y = y + update
        y -= y.mean(axis=0)
        if not np.all(np.isfinite(y)):
            raise NumericalError(f"t-SNE coordinates became non-finite at iteration {it}")
        q, num = joint_q(y)
        kl = kl_divergence(p, q)
        trace.append(kl)
        if observer is not None:
            observer(it, y)
        if progress is not None and (it % progress_every == 0 or it == config.iterations - 1):
            progress(it, kl)
    return Embedding(points=y, kl_trace=trace, initial_kl=initial_kl)
