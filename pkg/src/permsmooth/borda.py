"""Borda count estimation: sort indices by slice-average scores, then fit a
block-wise polynomial to the sorted tensor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .blockpoly import BlockPolynomialModel, evaluate_model, fit_block_polynomial
from .tensor import (
    DenseTensor,
    ModePermutations,
    ShapeError,
    apply_permutation,
    inverse_permutation,
)

__all__ = [
    "ScoreProfile",
    "HyperparameterPlan",
    "BordaResult",
    "score",
    "sort_permutation",
    "borda_denoise",
    "is_symmetric_shape",
    "optimal_hyperparameters",
    "monotonic_degree_constant",
    "cross_validate",
    "holdout_mask",
    "permutation_loss",
    "max_permutation_loss",
]


@dataclass(frozen=True, eq=False)
class ScoreProfile:
    mode: int
    tau: np.ndarray
    sort_order: np.ndarray  # 1-based: sort_order[r - 1] = pi_hat^{-1}(r)


@dataclass(frozen=True)
class HyperparameterPlan:
    degree_star: int
    blocks_star: tuple[int, ...]
    alpha_used: float
    beta_used: float | None
    rule: str


@dataclass(frozen=True, eq=False)
class BordaResult:
    """``theta`` lives on the sorted grid; ``estimate = theta o perms``
    estimates the signal in the coordinates of the observation."""

    theta: DenseTensor
    perms: ModePermutations
    model: BlockPolynomialModel
    scores: tuple[ScoreProfile, ...] = field(repr=False)

    @property
    def estimate(self) -> DenseTensor:
        return apply_permutation(self.theta, self.perms)

    @property
    def objective(self) -> float:
        """Residual sum of squares of the fit on the sorted observation."""
        return self.model.rss

    def __iter__(self):
        yield self.theta
        yield self.perms


def score(Y: DenseTensor, mode: int) -> ScoreProfile:
    """Slice means of the observed entries along ``mode`` (1-based)."""
    if not 1 <= mode <= Y.order:
        raise ValueError(f"mode {mode} out of range 1..{Y.order}")
    ax = mode - 1
    others = tuple(a for a in range(Y.order) if a != ax)
    if Y.mask is None:
        tau = Y.values.mean(axis=others) if others else Y.values.copy()
    else:
        obs = Y.mask
        sums = np.where(obs, Y.values, 0.0).sum(axis=others)
        counts = obs.sum(axis=others)
        global_mean = Y.values[obs].mean() if obs.any() else 0.0
        tau = np.where(counts > 0, sums / np.maximum(counts, 1), global_mean)
    order = np.argsort(tau, kind="stable") + 1
    return ScoreProfile(mode, tau, order)


def sort_permutation(s: ScoreProfile) -> np.ndarray:
    """``pi_hat`` (1-based) making ``tau o pi_hat^{-1}`` nondecreasing.

    ``pi_hat(i)`` is the rank of index ``i``; ties keep original order.
    """
    pi_hat = np.empty_like(s.sort_order)
    pi_hat[s.sort_order - 1] = np.arange(1, s.sort_order.size + 1)
    return pi_hat


def is_symmetric_shape(dims: Sequence[int]) -> bool:
    return len(set(dims)) == 1


def borda_denoise(Y: DenseTensor, blocks, degree: int, symmetric: bool | None = None) -> BordaResult:
    """Two-stage Borda count estimator.

    With ``symmetric`` (default: all dims equal) the mode-1 score defines one
    permutation shared by every mode; otherwise each mode is sorted by its
    own score.
    """
    if symmetric is None:
        symmetric = is_symmetric_shape(Y.dims)
    if symmetric:
        if not is_symmetric_shape(Y.dims):
            raise ShapeError("symmetric estimation needs equal dimensions")
        prof = score(Y, 1)
        profiles = (prof,)
        perms = ModePermutations.shared(sort_permutation(prof), Y.order)
    else:
        profiles = tuple(score(Y, l) for l in range(1, Y.order + 1))
        perms = ModePermutations(tuple(sort_permutation(p) for p in profiles))
    Y_sorted = apply_permutation(Y, inverse_permutation(perms))
    model = fit_block_polynomial(Y_sorted, blocks, degree)
    return BordaResult(evaluate_model(model), perms, model, profiles)


def monotonic_degree_constant(alpha: float, beta: float, m: int) -> float:
    """``m(m-1) b / max(0, 2(m - (m-1) b))`` with ``b = beta * min(alpha, 1)``;
    a vanishing denominator gives ``inf``."""
    b = beta * min(alpha, 1.0)
    denom = max(0.0, 2.0 * (m - (m - 1) * b))
    if denom == 0.0:
        return math.inf
    return m * (m - 1) * b / denom


def optimal_hyperparameters(m: int, dims: Sequence[int] | int, alpha: float = math.inf,
                            beta: float | None = None) -> HyperparameterPlan:
    """Closed-form ``(k*, l*)`` with unit proportionality constant.

    Without ``beta`` the least-squares rule ``l* = min(floor(alpha), (m-2)(m+1)/2)``
    is used (``rule="least_squares"``), with ``beta`` the monotone-score rule
    ``l* = min(floor(alpha), floor(c))`` (``rule="monotone_score"``).
    Per mode ``k* = round(d^{m / (m + 2 min(alpha, l*+1))})`` clipped to ``[1, d]``.
    """
    if alpha < 0:
        raise ValueError("alpha must be nonnegative")
    if isinstance(dims, (int, np.integer)):
        dims = (int(dims),) * m
    dims = tuple(int(d) for d in dims)
    if len(dims) != m:
        raise ShapeError("dims must have length m")
    sufficient = (m - 2) * (m + 1) // 2
    alpha_floor = math.inf if math.isinf(alpha) else math.floor(alpha)
    if beta is None:
        rule = "least_squares"
        degree = min(alpha_floor, sufficient)
    else:
        rule = "monotone_score"
        c = monotonic_degree_constant(alpha, beta, m)
        degree = min(alpha_floor, math.floor(c) if math.isfinite(c) else math.inf)
        if math.isinf(degree):
            degree = sufficient
    degree = int(degree)
    exponent = m / (m + 2 * min(alpha, degree + 1))
    blocks = tuple(int(min(max(round(d ** exponent), 1), d)) for d in dims)
    return HyperparameterPlan(degree, blocks, float(alpha), beta, rule)


def permutation_loss(truth, estimate) -> float:
    """``max_i |truth(i) - estimate(i)| / d``."""
    truth, estimate = np.asarray(truth), np.asarray(estimate)
    if truth.shape != estimate.shape:
        raise ShapeError("permutations differ in length")
    return float(np.max(np.abs(truth - estimate)) / truth.size)


def max_permutation_loss(truth: ModePermutations, estimate: ModePermutations) -> float:
    """Largest per-mode :func:`permutation_loss`."""
    return max(permutation_loss(a, b) for a, b in zip(truth.perms, estimate.perms))


def holdout_mask(Y: DenseTensor, fraction: float, rng: np.random.Generator) -> np.ndarray:
    """Boolean tensor marking a uniform random ``fraction`` of observed entries."""
    if not 0 < fraction < 1:
        raise ValueError("holdout fraction must be strictly between 0 and 1")
    idx = np.flatnonzero(Y.observed)
    n_test = int(round(fraction * idx.size))
    if n_test == 0:
        raise ValueError("holdout selects no entries")
    if n_test >= idx.size:
        raise ValueError("holdout leaves an empty training set")
    held = np.zeros(Y.size, dtype=bool)
    held[rng.choice(idx, size=n_test, replace=False)] = True
    return held.reshape(Y.dims)


def _as_blocks(k, order: int) -> tuple[int, ...]:
    if isinstance(k, (int, np.integer)):
        return (int(k),) * order
    return tuple(int(v) for v in k)


def cross_validate(Y: DenseTensor, k_grid: Iterable, l_grid: Iterable[int],
                   holdout_fraction: float = 0.2, folds: int = 5,
                   rng: np.random.Generator | None = None, symmetric: bool | None = None,
                   ) -> tuple[HyperparameterPlan, list[dict]]:
    """Grid search over ``(k, l)`` by repeated random holdout.

    Every cell sees the same ``folds`` holdout masks.  The winner minimises
    the mean held-out MSE; ties go to smaller ``l``, then smaller ``k``.
    """
    k_grid = [_as_blocks(k, Y.order) for k in k_grid]
    l_grid = [int(l) for l in l_grid]
    if not k_grid or not l_grid:
        raise ValueError("grids must be nonempty")
    if folds < 1:
        raise ValueError("folds must be positive")
    rng = np.random.default_rng() if rng is None else rng
    masks = [holdout_mask(Y, holdout_fraction, rng) for _ in range(folds)]
    table = []
    for degree in l_grid:
        for blocks in k_grid:
            errs = []
            for held in masks:
                train = DenseTensor(Y.values, Y.observed & ~held)
                est = borda_denoise(train, blocks, degree, symmetric).estimate
                diff = (est.values - Y.values)[held]
                errs.append(float(np.dot(diff, diff) / diff.size))
            table.append({"k": blocks, "l": degree, "fold_mse": errs,
                          "mean_mse": float(np.mean(errs))})
    best = min(table, key=lambda r: (r["mean_mse"], r["l"], sum(r["k"]), r["k"]))
    plan = HyperparameterPlan(best["l"], best["k"], math.nan, None, "cv")
    return plan, table
