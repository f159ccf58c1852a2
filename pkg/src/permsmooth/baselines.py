"""Comparison estimators: exhaustive least squares, USVT and spectral
k-means constant-block least squares."""

from __future__ import annotations

import itertools
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from sklearn.cluster import KMeans

from .blockpoly import evaluate_model, fit_block_polynomial
from .borda import BordaResult, is_symmetric_shape
from .tensor import (
    DenseTensor,
    ModePermutations,
    ShapeError,
    apply_permutation,
    inverse_permutation,
    mse,
    refold,
    unfold,
)

__all__ = [
    "MAX_EXHAUSTIVE_DIM",
    "SpectralConfig",
    "exhaustive_lse",
    "spectral_usvt",
    "usvt_path",
    "default_usvt_threshold",
    "spectral_kmeans_labels",
    "block_mean_tensor",
    "constant_block_lse",
]

MAX_EXHAUSTIVE_DIM = 8
# objectives closer than this (relative) count as ties, so rounding in the
# block sums cannot override the lexicographic tie-break
TIE_RTOL = 1e-13


# --- exhaustive least squares -------------------------------------------------

def _lse_chunk(Y: DenseTensor, perms: list[tuple[int, ...]], blocks, degree):
    best = None
    for p in perms:
        pi = ModePermutations.shared(p, Y.order)
        model = fit_block_polynomial(apply_permutation(Y, inverse_permutation(pi)), blocks, degree)
        if best is None or _improves(model.rss, best[0]):
            best = (model.rss, p, model)
    return best


def _improves(new: float, old: float) -> bool:
    return new < old - TIE_RTOL * max(abs(old), 1e-300)


def exhaustive_lse(Y: DenseTensor, blocks, degree: int, threads: int = 1) -> BordaResult:
    """Global least squares over every shared permutation and the block class.

    Enumerates all ``d!`` permutations in lexicographic order; among equal
    objectives the lexicographically smallest permutation wins.  Refuses
    ``d > 8``.
    """
    if not is_symmetric_shape(Y.dims):
        raise ShapeError("exhaustive search assumes equal dimensions and a shared permutation")
    d = Y.dims[0]
    if d > MAX_EXHAUSTIVE_DIM:
        raise ValueError(f"exhaustive search needs d <= {MAX_EXHAUSTIVE_DIM} (got d={d}, {math.factorial(d)} candidates)")
    candidates = list(itertools.permutations(range(1, d + 1)))
    threads = max(1, int(threads))
    size = -(-len(candidates) // threads)
    chunks = [candidates[i:i + size] for i in range(0, len(candidates), size)]
    if threads == 1:
        results = [_lse_chunk(Y, c, blocks, degree) for c in chunks]
    else:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(lambda c: _lse_chunk(Y, c, blocks, degree), chunks))
    # chunks are in lexicographic order; strict comparison keeps the earliest
    rss, p, model = results[0]
    for r in results[1:]:
        if _improves(r[0], rss):
            rss, p, model = r
    perms = ModePermutations.shared(p, Y.order)
    return BordaResult(evaluate_model(model), perms, model, ())


# --- universal singular value thresholding ------------------------------------

@dataclass(frozen=True)
class SpectralConfig:
    """``threshold``: one absolute cutoff, a sequence of cutoffs (needs the
    truth to choose), or ``None`` for the data-driven default."""

    mode: int = 1
    threshold: float | Sequence[float] | None = None

    def __post_init__(self):
        th = self.threshold
        values = [] if th is None else np.atleast_1d(np.asarray(th, dtype=float))
        if np.any(np.asarray(values) < 0):
            raise ValueError("thresholds must be nonnegative")


def _filled(Y: DenseTensor) -> np.ndarray:
    if Y.mask is None:
        return Y.values
    return np.where(Y.mask, Y.values, Y.values[Y.mask].mean())


def default_usvt_threshold(Y: DenseTensor, mode: int = 1) -> float:
    """``2.02 * sigma_hat * sqrt(max unfolding dim)``.

    ``sigma_hat`` is the MAD of adjacent-entry differences (last mode),
    rescaled by ``1.4826 / sqrt(2)``.
    """
    diffs = np.diff(_filled(Y), axis=-1).reshape(-1)
    if diffs.size == 0:
        return 0.0
    sigma = 1.4826 * np.median(np.abs(diffs - np.median(diffs))) / math.sqrt(2.0)
    M = unfold(Y, mode)
    return 2.02 * sigma * math.sqrt(max(M.shape))


def usvt_path(Y: DenseTensor, mode: int, thresholds: Sequence[float]) -> list[DenseTensor]:
    """USVT estimates for several cutoffs sharing one SVD."""
    M = unfold(_filled(Y), mode)
    U, s, Vt = np.linalg.svd(M, full_matrices=False)
    out = []
    for th in thresholds:
        keep = s >= th
        approx = (U[:, keep] * s[keep]) @ Vt[keep]
        out.append(DenseTensor(refold(approx, mode, Y.dims)))
    return out


def spectral_usvt(Y: DenseTensor, cfg: SpectralConfig = SpectralConfig(),
                  truth: DenseTensor | None = None) -> DenseTensor:
    """Unfold, zero singular values below the cutoff, refold.

    With a grid of cutoffs the one with the smallest MSE against ``truth``
    is returned (simulation-only oracle tuning).
    """
    th = cfg.threshold
    if th is None:
        return usvt_path(Y, cfg.mode, [default_usvt_threshold(Y, cfg.mode)])[0]
    grid = np.atleast_1d(np.asarray(th, dtype=float))
    if grid.size == 1:
        return usvt_path(Y, cfg.mode, grid)[0]
    if truth is None:
        raise ValueError("choosing among several thresholds needs the true signal")
    path = usvt_path(Y, cfg.mode, grid)
    errs = [mse(est, truth) for est in path]
    return path[int(np.argmin(errs))]


# --- constant-block least squares via spectral k-means ------------------------

def spectral_kmeans_labels(Y: DenseTensor, mode: int, k: int, seed: int = 0,
                           n_init: int = 50) -> np.ndarray:
    """0-based cluster labels for ``mode`` from k-means on the rows of ``U_k S_k``
    (the rank-k projection of the mode unfolding)."""
    d = Y.dims[mode - 1]
    if not 1 <= k <= d:
        raise ValueError(f"block count {k} outside 1..{d}")
    if k == 1:
        return np.zeros(d, dtype=np.int64)
    if k == d:
        return np.arange(d, dtype=np.int64)
    U, s, _ = np.linalg.svd(unfold(_filled(Y), mode), full_matrices=False)
    features = U[:, :k] * s[:k]
    with warnings.catch_warnings():
        # duplicated rows can leave fewer distinct clusters than requested
        warnings.simplefilter("ignore")
        km = KMeans(n_clusters=k, init="k-means++", n_init=n_init, random_state=seed)
        labels = km.fit_predict(features)
    return labels.astype(np.int64)


def block_mean_tensor(Y: DenseTensor, labels: Sequence[np.ndarray]) -> DenseTensor:
    """Piecewise-constant tensor of observed block means under per-mode labels."""
    if len(labels) != Y.order:
        raise ShapeError("need one label vector per mode")
    obs = Y.observed
    sums = np.where(obs, Y.values, 0.0)
    counts = obs.astype(np.float64)
    for ax, lab in enumerate(labels):
        lab = np.asarray(lab)
        if lab.size != Y.dims[ax]:
            raise ShapeError(f"labels for mode {ax + 1} have the wrong length")
        H = np.zeros((lab.size, int(lab.max()) + 1))
        H[np.arange(lab.size), lab] = 1.0
        sums = np.moveaxis(np.tensordot(sums, H, axes=([ax], [0])), -1, ax)
        counts = np.moveaxis(np.tensordot(counts, H, axes=([ax], [0])), -1, ax)
    global_mean = float(Y.values[obs].mean())
    means = np.where(counts > 0, sums / np.maximum(counts, 1), global_mean)
    return DenseTensor(means[np.ix_(*[np.asarray(l) for l in labels])])


def constant_block_lse(Y: DenseTensor, blocks, seed: int = 0, n_init: int = 50) -> DenseTensor:
    """Constant-block least squares on clusters found by spectral k-means."""
    if isinstance(blocks, (int, np.integer)):
        blocks = (int(blocks),) * Y.order
    if len(blocks) != Y.order:
        raise ShapeError("need one block count per mode")
    labels = [spectral_kmeans_labels(Y, l + 1, int(k), seed, n_init) for l, k in enumerate(blocks)]
    return block_mean_tensor(Y, labels)
