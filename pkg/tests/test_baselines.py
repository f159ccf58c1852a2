import itertools

import numpy as np
import pytest

from permsmooth.baselines import (
    MAX_EXHAUSTIVE_DIM,
    SpectralConfig,
    block_mean_tensor,
    constant_block_lse,
    default_usvt_threshold,
    exhaustive_lse,
    spectral_kmeans_labels,
    spectral_usvt,
)
from permsmooth.borda import borda_denoise
from permsmooth.tensor import DenseTensor, ModePermutations, ShapeError, apply_permutation, mse


def enumeration_oracle(Y: np.ndarray, sizes) -> float:
    """Smallest within-block sum of squares over all shared row/column orders,
    with contiguous blocks of the given sizes (written without the package)."""
    d = Y.shape[0]
    edges = np.concatenate([[0], np.cumsum(sizes)])
    best = np.inf
    for q in itertools.permutations(range(d)):
        S = Y[np.ix_(q, q)]
        total = 0.0
        for a in range(len(sizes)):
            for b in range(len(sizes)):
                blk = S[edges[a]:edges[a + 1], edges[b]:edges[b + 1]]
                total += float(((blk - blk.mean()) ** 2).sum())
        best = min(best, total)
    return best


def test_exhaustive_constant_input():
    res = exhaustive_lse(DenseTensor(np.full((4, 4), 3.0)), 2, 0)
    assert res.objective == 0.0
    assert res.perms == ModePermutations.identity((4, 4))


def test_exhaustive_planted_blocks():
    core = np.array([[0.0, 5.0], [5.0, 1.0]])
    z = np.array([0, 0, 1, 1])
    Y0 = core[np.ix_(z, z)]
    perm = np.array([3, 1, 4, 2])
    Y = apply_permutation(DenseTensor(Y0), ModePermutations.shared(perm, 2))
    res = exhaustive_lse(Y, 2, 0)
    assert res.objective == pytest.approx(0.0, abs=1e-24)
    np.testing.assert_allclose(res.estimate.values, Y.values, atol=1e-12)


def test_exhaustive_matches_oracle_and_beats_borda():
    rng = np.random.default_rng(99)
    for _ in range(5):
        Y = rng.normal(size=(6, 6))
        res = exhaustive_lse(DenseTensor(Y), 2, 0)
        assert res.objective == pytest.approx(enumeration_oracle(Y, (3, 3)), rel=1e-12)
        assert res.objective <= borda_denoise(DenseTensor(Y), 2, 0).objective * (1 + 1e-12)


def test_exhaustive_thread_invariance(rng):
    Y = DenseTensor(rng.normal(size=(6, 6)))
    a, b = exhaustive_lse(Y, 2, 1), exhaustive_lse(Y, 2, 1, threads=3)
    assert a.perms == b.perms and a.objective == b.objective


def test_exhaustive_refusals(rng):
    d = MAX_EXHAUSTIVE_DIM + 1
    with pytest.raises(ValueError, match="d <= 8"):
        exhaustive_lse(DenseTensor(np.zeros((d, d))), 1, 0)
    with pytest.raises(ShapeError):
        exhaustive_lse(DenseTensor(np.zeros((3, 4))), 1, 0)


# --- USVT --------------------------------------------------------------------------

def test_usvt_extremes(rng):
    Y = DenseTensor(rng.normal(size=(5, 6, 4)))
    np.testing.assert_allclose(spectral_usvt(Y, SpectralConfig(2, 0.0)).values, Y.values, atol=1e-12)
    top = np.linalg.svd(Y.values.reshape(5, -1), compute_uv=False)[0]
    assert np.all(spectral_usvt(Y, SpectralConfig(1, top * 1.01)).values == 0.0)


def test_usvt_rank_one_recovery(rng):
    u, v = rng.normal(size=8), rng.normal(size=11)
    M = np.outer(u, v)
    s1 = np.linalg.norm(u) * np.linalg.norm(v)
    out = spectral_usvt(DenseTensor(M), SpectralConfig(1, s1 / 2))
    np.testing.assert_allclose(out.values, M, atol=1e-10)


def test_usvt_idempotent(rng):
    Y = DenseTensor(rng.normal(size=(10, 12)))
    cfg = SpectralConfig(1, 3.0)
    once = spectral_usvt(Y, cfg)
    np.testing.assert_allclose(spectral_usvt(once, cfg).values, once.values, atol=1e-12)


def test_usvt_grid_needs_truth(rng):
    truth = DenseTensor(np.outer(np.arange(1.0, 9.0), np.ones(9)))
    Y = DenseTensor(truth.values + 0.1 * rng.normal(size=truth.dims))
    with pytest.raises(ValueError):
        spectral_usvt(Y, SpectralConfig(1, [0.0, 1.0]))
    best = spectral_usvt(Y, SpectralConfig(1, [0.0, 1.0, 1e6]), truth=truth)
    rank1 = spectral_usvt(Y, SpectralConfig(1, 1.0))
    np.testing.assert_array_equal(best.values, rank1.values)
    with pytest.raises(ValueError):
        SpectralConfig(1, -1.0)


def test_default_threshold_scales_with_noise(rng):
    low = DenseTensor(0.1 * rng.normal(size=(30, 30)))
    high = DenseTensor(1.0 * rng.normal(size=(30, 30)))
    assert default_usvt_threshold(high) == pytest.approx(10 * default_usvt_threshold(low), rel=0.3)
    assert default_usvt_threshold(high) == pytest.approx(2.02 * np.sqrt(30), rel=0.25)


# --- constant-block LSE -----------------------------------------------------------------

def test_constant_block_planted_recovery(rng):
    core = rng.normal(scale=5.0, size=(3, 2, 2))
    z = [np.repeat(np.arange(3), 4), np.repeat(np.arange(2), 5), np.repeat(np.arange(2), 3)]
    Y = DenseTensor(core[np.ix_(*z)])
    est = constant_block_lse(Y, (3, 2, 2), seed=1, n_init=10)
    np.testing.assert_allclose(est.values, Y.values, atol=1e-12)


def test_constant_block_trivial_cases(rng):
    Y = DenseTensor(rng.normal(size=(5, 4, 3)))
    np.testing.assert_allclose(constant_block_lse(Y, 1).values, Y.values.mean(), rtol=1e-13)
    np.testing.assert_array_equal(constant_block_lse(Y, (5, 4, 3)).values, Y.values)


def test_constant_block_piecewise_constant(rng):
    Y = DenseTensor(rng.normal(size=(9, 8)))
    labels = [spectral_kmeans_labels(Y, 1, 3, seed=0, n_init=5),
              spectral_kmeans_labels(Y, 2, 2, seed=0, n_init=5)]
    est = block_mean_tensor(Y, labels).values
    for a in range(3):
        for b in range(2):
            blk = est[np.ix_(labels[0] == a, labels[1] == b)]
            if blk.size:
                assert np.all(blk == blk.flat[0])
                assert blk.flat[0] == pytest.approx(
                    Y.values[np.ix_(labels[0] == a, labels[1] == b)].mean(), rel=1e-12)


def test_kmeans_seeded(rng):
    Y = DenseTensor(rng.normal(size=(12, 10)))
    a = spectral_kmeans_labels(Y, 1, 3, seed=4, n_init=5)
    np.testing.assert_array_equal(a, spectral_kmeans_labels(Y, 1, 3, seed=4, n_init=5))
    with pytest.raises(ValueError):
        spectral_kmeans_labels(Y, 1, 13)


def test_masked_input(rng):
    Y = DenseTensor(rng.normal(size=(6, 6)), rng.random((6, 6)) > 0.3)
    est = constant_block_lse(Y, 2, n_init=5)
    assert np.all(np.isfinite(est.values))
    assert mse(spectral_usvt(Y, SpectralConfig(1, 0.0)), Y) < 1e-20
