"""Block-wise polynomial tensors on the canonical partition.

Mode ``l`` with ``d`` indices and ``k`` blocks uses the canonical clustering
``z(i) = ceil(k i / d)``; the m-way blocks are products of these intervals.
Inside a block the polynomial is written in local coordinates

    u_l = (i_l - c_l) / r_l,

where ``c_l`` is the block's grid midpoint along mode ``l`` and ``r_l`` its
half-width (1 for single-index blocks), so ``u_l`` lies in ``[-1, 1]``.
Coefficients are indexed by the multi-indices of :func:`monomial_basis`.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from math import comb
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy import linalg

from .models import evaluate_signal
from .tensor import DenseTensor, ShapeError, mse

__all__ = [
    "CanonicalClustering",
    "BlockPolynomialModel",
    "canonical_clustering",
    "monomial_basis",
    "fit_block_polynomial",
    "evaluate_model",
    "approximation_error",
    "save_model",
    "load_model",
]

# relative singular-value cutoff deciding the numerical rank of a block design
RANK_RCOND = 1e-10


@dataclass(frozen=True, eq=False)
class CanonicalClustering:
    d: int
    k: int
    assignment: np.ndarray  # 1-based z(i), i = 1..d

    @property
    def sizes(self) -> np.ndarray:
        return np.bincount(self.assignment - 1, minlength=self.k)

    @property
    def starts(self) -> np.ndarray:
        """0-based first index of each cluster."""
        return np.concatenate([[0], np.cumsum(self.sizes)[:-1]])

    def intervals(self) -> list[tuple[int, int]]:
        """0-based half-open ``[start, stop)`` ranges, one per cluster."""
        stops = np.cumsum(self.sizes)
        return [(int(a), int(b)) for a, b in zip(self.starts, stops)]

    def centers(self) -> np.ndarray:
        """1-based grid midpoint of each cluster."""
        return self.starts + 1 + (self.sizes - 1) / 2.0

    def half_widths(self) -> np.ndarray:
        r = (self.sizes - 1) / 2.0
        return np.where(r > 0, r, 1.0)

    def local_coordinates(self) -> np.ndarray:
        """Per-index local coordinate ``(i - c_z(i)) / r_z(i)``."""
        i = np.arange(1, self.d + 1)
        z = self.assignment - 1
        return (i - self.centers()[z]) / self.half_widths()[z]


def canonical_clustering(d: int, k: int) -> CanonicalClustering:
    if not 1 <= k <= d:
        raise ValueError(f"block count k={k} must satisfy 1 <= k <= d={d}")
    i = np.arange(1, d + 1, dtype=np.int64)
    z = (k * i + d - 1) // d  # integer ceil(k i / d)
    z.setflags(write=False)
    return CanonicalClustering(int(d), int(k), z)


def monomial_basis(m: int, degree: int) -> list[tuple[int, ...]]:
    """Exponent tuples of total degree ``<= degree`` in ``m`` variables.

    Graded lexicographic order: by total degree, then lexicographically
    descending, e.g. ``1, x, y, z, x^2, xy, xz, y^2, ...`` for ``m = 3``.
    There are ``C(degree + m, m)`` of them.
    """
    if m < 1 or degree < 0:
        raise ValueError("need m >= 1 and degree >= 0")
    out = []
    for total in range(degree + 1):
        level = [a for a in itertools.product(range(total + 1), repeat=m) if sum(a) == total]
        out.extend(sorted(level, reverse=True))
    return out


@dataclass(frozen=True, eq=False)
class BlockPolynomialModel:
    """A member of the block-k degree-l class together with its fit summary.

    ``coefficients`` has shape ``(*blocks, n_terms)``; ``coefficients[j]``
    (``j`` a 0-based block multi-index) is the coefficient vector of block
    ``j`` over :attr:`basis`.
    """

    dims: tuple[int, ...]
    blocks: tuple[int, ...]
    degree: int
    coefficients: np.ndarray
    rss: float = float("nan")
    n_observed: int = 0

    @property
    def order(self) -> int:
        return len(self.dims)

    @property
    def basis(self) -> list[tuple[int, ...]]:
        return monomial_basis(self.order, self.degree)

    @property
    def clusterings(self) -> list[CanonicalClustering]:
        return [canonical_clustering(d, k) for d, k in zip(self.dims, self.blocks)]

    @property
    def anchors(self) -> list[np.ndarray]:
        """Per-mode block midpoints in ``[0, 1]`` (midpoint index over ``d``)."""
        return [c.centers() / c.d for c in self.clusterings]

    def to_dict(self) -> dict:
        return {
            "format": "permsmooth.block_polynomial",
            "version": 1,
            "dims": list(self.dims),
            "blocks": list(self.blocks),
            "degree": self.degree,
            "basis": [list(a) for a in self.basis],
            "coefficients": self.coefficients.reshape(-1).tolist(),
            "rss": self.rss,
            "n_observed": self.n_observed,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "BlockPolynomialModel":
        dims, blocks, degree = tuple(data["dims"]), tuple(data["blocks"]), int(data["degree"])
        n_terms = comb(degree + len(dims), degree)
        coef = np.asarray(data["coefficients"], dtype=np.float64).reshape(blocks + (n_terms,))
        return cls(dims, blocks, degree, coef, float(data.get("rss", "nan")),
                   int(data.get("n_observed", 0)))


def save_model(model: BlockPolynomialModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model.to_dict()))


def load_model(path: str | Path) -> BlockPolynomialModel:
    return BlockPolynomialModel.from_dict(json.loads(Path(path).read_text()))


def _check_blocks(dims: Sequence[int], blocks: Sequence[int]) -> tuple[int, ...]:
    if isinstance(blocks, (int, np.integer)):
        blocks = (int(blocks),) * len(dims)
    blocks = tuple(int(k) for k in blocks)
    if len(blocks) != len(dims):
        raise ShapeError(f"{len(blocks)} block counts for an order-{len(dims)} tensor")
    for d, k in zip(dims, blocks):
        if not 1 <= k <= d:
            raise ValueError(f"block count {k} outside 1..{d}")
    return blocks


def _design(coords: Sequence[np.ndarray], basis) -> np.ndarray:
    """Design matrix (rows in row-major block order) for per-mode local coords."""
    powers = [np.stack([u**p for p in range(max(a[l] for a in basis) + 1)])
              for l, u in enumerate(coords)]
    cols = []
    for a in basis:
        col = powers[0][a[0]]
        for l in range(1, len(coords)):
            col = np.multiply.outer(col, powers[l][a[l]])
        cols.append(np.ravel(col))
    return np.stack(cols, axis=1)


def _block_slices(clusterings):
    ranges = [c.intervals() for c in clusterings]
    for j in itertools.product(*[range(c.k) for c in clusterings]):
        yield j, tuple(slice(*ranges[l][jl]) for l, jl in enumerate(j))


def _lstsq(X: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Minimum-norm least squares via column-pivoted QR (LAPACK gelsy)."""
    return linalg.lstsq(X, y, cond=RANK_RCOND, lapack_driver="gelsy", check_finite=False)[0]


def _fit_constant(Y: DenseTensor, clusterings, blocks) -> np.ndarray:
    obs = Y.observed
    vals = np.where(obs, Y.values, 0.0)
    sums, counts = vals, obs.astype(np.float64)
    for ax, c in enumerate(clusterings):
        sums = np.add.reduceat(sums, c.starts, axis=ax)
        counts = np.add.reduceat(counts, c.starts, axis=ax)
    global_mean = float(vals.sum() / obs.sum()) if obs.any() else 0.0
    with np.errstate(invalid="ignore", divide="ignore"):
        means = np.where(counts > 0, sums / np.maximum(counts, 1), global_mean)
    return means.reshape(blocks + (1,))


def fit_block_polynomial(Y: DenseTensor, blocks, degree: int) -> BlockPolynomialModel:
    """Least-squares block-wise polynomial fit of an (already sorted) tensor.

    Each block is fitted independently on its observed entries.  Rank
    deficient blocks get the minimum-norm solution; blocks with no observed
    entry fall back to a constant equal to the global observed mean.
    """
    dims = Y.dims
    blocks = _check_blocks(dims, blocks)
    if degree < 0:
        raise ValueError("degree must be nonnegative")
    if Y.n_observed == 0:
        raise ValueError("cannot fit a tensor with no observed entries")
    clusterings = [canonical_clustering(d, k) for d, k in zip(dims, blocks)]
    basis = monomial_basis(len(dims), degree)

    if degree == 0:
        coef = _fit_constant(Y, clusterings, blocks)
    else:
        coef = np.zeros(blocks + (len(basis),))
        local = [c.local_coordinates() for c in clusterings]
        obs = Y.observed
        global_mean = float(Y.values[obs].mean())
        # fully observed blocks of equal shape share one design: solve them together
        groups: dict[tuple[int, ...], list] = {}
        for j, sl in _block_slices(clusterings):
            block_obs = obs[sl]
            if block_obs.all():
                groups.setdefault(block_obs.shape, []).append((j, sl))
            elif not block_obs.any():
                coef[j][0] = global_mean
            else:
                X = _design([u[s] for u, s in zip(local, sl)], basis)
                keep = block_obs.reshape(-1)
                coef[j] = _lstsq(X[keep], Y.values[sl].reshape(-1)[keep])
        for shape, members in groups.items():
            j0, sl0 = members[0]
            X = _design([u[s] for u, s in zip(local, sl0)], basis)
            rhs = np.stack([Y.values[sl].reshape(-1) for _, sl in members], axis=1)
            sol = _lstsq(X, rhs)
            for col, (j, _) in enumerate(members):
                coef[j] = sol[:, col]

    model = BlockPolynomialModel(tuple(dims), blocks, int(degree), coef)
    fitted = evaluate_model(model)
    resid = (Y.values - fitted.values)[Y.observed]
    return BlockPolynomialModel(tuple(dims), blocks, int(degree), coef,
                                float(np.dot(resid, resid)), Y.n_observed)


def evaluate_model(M: BlockPolynomialModel) -> DenseTensor:
    """Dense tensor of the block-wise polynomial on the full grid."""
    clusterings = M.clusterings
    z = [c.assignment - 1 for c in clusterings]
    local = [c.local_coordinates() for c in clusterings]
    out = np.zeros(M.dims)
    for t, a in enumerate(M.basis):
        term = M.coefficients[..., t][np.ix_(*z)]
        for l, p in enumerate(a):
            if p:
                shape = [1] * M.order
                shape[l] = M.dims[l]
                term = term * (local[l] ** p).reshape(shape)
        out += term
    return DenseTensor(out)


def approximation_error(f, dims, blocks, degree: int) -> float:
    """MSE of the best block-polynomial fit to the noiseless grid signal of ``f``."""
    if isinstance(dims, (int, np.integer)):
        dims = (int(dims),) * f.arity
    theta = evaluate_signal(f, dims)
    model = fit_block_polynomial(theta, blocks, degree)
    return mse(evaluate_model(model), theta)
