import itertools
from math import comb

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from permsmooth.blockpoly import (
    BlockPolynomialModel,
    approximation_error,
    canonical_clustering,
    evaluate_model,
    fit_block_polynomial,
    load_model,
    monomial_basis,
    save_model,
)
from permsmooth.models import builtin_model, evaluate_signal
from permsmooth.tensor import DenseTensor, ShapeError, mse


# --- clustering ---------------------------------------------------------------

def test_clustering_examples():
    assert canonical_clustering(10, 1).assignment.tolist() == [1] * 10
    c = canonical_clustering(100, 10)
    assert c.assignment[4] == 1 and c.assignment[99] == 10
    assert c.sizes.tolist() == [10] * 10
    assert canonical_clustering(10, 3).sizes.tolist() == [3, 3, 4]


def test_clustering_bounds():
    for k in (0, 11):
        with pytest.raises(ValueError):
            canonical_clustering(10, k)


@settings(max_examples=80, deadline=None)
@given(st.integers(1, 200), st.data())
def test_clustering_invariants(d, data):
    k = data.draw(st.integers(1, d))
    c = canonical_clustering(d, k)
    z = c.assignment
    assert z.tolist() == [-(-k * i // d) for i in range(1, d + 1)]
    assert set(z.tolist()) == set(range(1, k + 1))
    assert np.all(np.diff(z) >= 0)  # contiguous intervals
    assert c.sizes.max() - c.sizes.min() <= 1
    if d % k == 0:
        assert np.all(c.sizes == d // k)
    u = c.local_coordinates()
    assert np.all(np.abs(u) <= 1 + 1e-12)


# --- monomial basis -----------------------------------------------------------

def test_basis_examples():
    assert monomial_basis(3, 0) == [(0, 0, 0)]
    assert len(monomial_basis(3, 2)) == comb(5, 2) == 10
    brute = [a for a in itertools.product(range(4), repeat=2) if sum(a) <= 3]
    basis = monomial_basis(2, 3)
    assert len(basis) == comb(5, 3) == 10
    assert sorted(basis) == sorted(brute)


def test_basis_graded_order():
    assert monomial_basis(3, 1) == [(0, 0, 0), (1, 0, 0), (0, 1, 0), (0, 0, 1)]
    degrees = [sum(a) for a in monomial_basis(3, 4)]
    assert degrees == sorted(degrees)


@settings(max_examples=30, deadline=None)
@given(st.integers(1, 4), st.integers(0, 5))
def test_basis_count(m, degree):
    basis = monomial_basis(m, degree)
    assert len(basis) == len(set(basis)) == comb(degree + m, degree)


# --- fitting ---------------------------------------------------------------------

def test_constant_block_example():
    Y = DenseTensor(np.array([[1, 1, 2, 2], [1, 1, 2, 2], [3, 3, 4, 4], [3, 3, 4, 4]], float))
    M = fit_block_polynomial(Y, (2, 2), 0)
    np.testing.assert_array_equal(M.coefficients[..., 0], [[1, 2], [3, 4]])
    assert M.rss == 0.0
    np.testing.assert_array_equal(evaluate_model(M).values, Y.values)


def test_interpolation_at_full_resolution(rng):
    Y = DenseTensor(rng.normal(size=(4, 5, 3)))
    M = fit_block_polynomial(Y, Y.dims, 0)
    np.testing.assert_array_equal(evaluate_model(M).values, Y.values)


def test_linear_signal_exact():
    theta = evaluate_signal(builtin_model(2, True), (12, 12, 12))
    for k in (1, 2, 3, 5, 12):
        assert mse(evaluate_model(fit_block_polynomial(theta, k, 1)), theta) < 1e-20


def test_masked_block_means(rng):
    Y = DenseTensor(rng.normal(size=(6, 4)), rng.random((6, 4)) > 0.3)
    M = fit_block_polynomial(Y, (3, 2), 0)
    for (a, b), (r, c) in zip(itertools.product(range(3), range(2)),
                              itertools.product([slice(0, 2), slice(2, 4), slice(4, 6)],
                                                [slice(0, 2), slice(2, 4)])):
        obs = Y.mask[r, c]
        expected = Y.values[r, c][obs].mean() if obs.any() else Y.values[Y.mask].mean()
        assert M.coefficients[a, b, 0] == pytest.approx(expected, rel=1e-14)


def test_empty_block_gets_global_mean(rng):
    mask = np.ones((4, 4), bool)
    mask[:2, :2] = False
    Y = DenseTensor(rng.normal(size=(4, 4)), mask)
    for degree in (0, 2):
        M = fit_block_polynomial(Y, (2, 2), degree)
        est = evaluate_model(M).values
        np.testing.assert_allclose(est[:2, :2], Y.values[mask].mean(), rtol=1e-14)


@pytest.mark.parametrize("masked", [False, True])
def test_residual_orthogonal_to_basis(rng, masked):
    vals = rng.normal(size=(9, 8, 7))
    Y = DenseTensor(vals, rng.random(vals.shape) > 0.2 if masked else None)
    M = fit_block_polynomial(Y, (2, 3, 2), 2)
    resid = np.where(Y.observed, Y.values - evaluate_model(M).values, 0.0)
    clusters = M.clusterings
    u = [c.local_coordinates() for c in clusters]
    scale = np.abs(Y.values).max()
    for j in itertools.product(*[range(c.k) for c in clusters]):
        sl = tuple(slice(*clusters[l].intervals()[j[l]]) for l in range(3))
        for a in M.basis:
            mono = np.ones(resid[sl].shape)
            for l, p in enumerate(a):
                shape = [1, 1, 1]
                shape[l] = -1
                mono = mono * (u[l][sl[l]] ** p).reshape(shape)
            assert abs(np.sum(resid[sl] * mono)) < 1e-8 * scale


def test_rank_deficient_block_min_norm():
    # single-index blocks cannot support a linear term: the minimum-norm
    # solution keeps the derivative coefficients at zero
    Y = DenseTensor(np.arange(4.0)[:, None] * np.ones((1, 3)))
    M = fit_block_polynomial(Y, (4, 1), 1)
    assert np.all(M.coefficients[..., 1] == 0.0)
    np.testing.assert_allclose(evaluate_model(M).values, Y.values, atol=1e-12)


def test_fit_rejects_invalid():
    Y = DenseTensor(np.zeros((3, 3)))
    with pytest.raises(ValueError):
        fit_block_polynomial(Y, (4, 1), 0)
    with pytest.raises(ShapeError):
        fit_block_polynomial(Y, (1, 1, 1), 0)
    with pytest.raises(ValueError):
        fit_block_polynomial(Y, 1, -1)
    with pytest.raises(ValueError):
        fit_block_polynomial(DenseTensor(np.zeros(3), np.zeros(3, bool)), 1, 0)


def test_rss_nonincreasing_in_degree(rng):
    Y = DenseTensor(rng.normal(size=(10, 10, 10)))
    rss = [fit_block_polynomial(Y, 3, l).rss for l in range(4)]
    assert all(b <= a * (1 + 1e-12) for a, b in zip(rss, rss[1:]))


def test_partition_nesting():
    theta = evaluate_signal(builtin_model(4, True), (24, 24, 24))
    for degree in (0, 1):
        errs = [approximation_error(builtin_model(4, True), 24, k, degree) for k in (2, 4, 8)]
        assert errs[1] <= errs[0] and errs[2] <= errs[1]
    assert approximation_error(builtin_model(4, True), theta.dims, 24, 0) == 0.0


def test_coefficient_count_and_anchors():
    M = fit_block_polynomial(DenseTensor(np.ones((6, 6, 6))), (2, 3, 1), 3)
    assert M.coefficients.shape == (2, 3, 1, comb(6, 3))
    np.testing.assert_allclose(M.anchors[0], [2 / 6, 5 / 6])


def test_approximation_error_examples():
    assert approximation_error(builtin_model(2, True), 16, 4, 1) < 1e-20
    assert approximation_error(builtin_model(2, True), 16, 3, 2) < 1e-20
    assert approximation_error(builtin_model(1, True), 16, 1, 3) < 1e-20


def test_approximation_error_decay_slope():
    f = builtin_model(3, True)
    ks = np.array([2, 4, 8, 16])
    errs = [approximation_error(f, 64, int(k), 0) for k in ks]
    slope = np.polyfit(np.log(ks), np.log(errs), 1)[0]
    assert -2.5 <= slope <= -1.5


def test_model_json_round_trip(tmp_path, rng):
    Y = DenseTensor(rng.normal(size=(7, 6, 5)), rng.random((7, 6, 5)) > 0.1)
    M = fit_block_polynomial(Y, (3, 2, 2), 2)
    save_model(M, tmp_path / "m.json")
    back = load_model(tmp_path / "m.json")
    assert isinstance(back, BlockPolynomialModel)
    assert (back.dims, back.blocks, back.degree, back.n_observed) == (M.dims, M.blocks, 2, M.n_observed)
    np.testing.assert_array_equal(back.coefficients, M.coefficients)
    assert back.rss == M.rss
    np.testing.assert_array_equal(evaluate_model(back).values, evaluate_model(M).values)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(1, 6), min_size=1, max_size=3), st.integers(0, 2), st.integers(0, 10**6))
def test_fit_is_block_piecewise_polynomial(dims, degree, seed):
    rng = np.random.default_rng(seed)
    dims = tuple(dims)
    Y = DenseTensor(rng.normal(size=dims))
    blocks = tuple(int(rng.integers(1, d + 1)) for d in dims)
    M = fit_block_polynomial(Y, blocks, degree)
    est = evaluate_model(M)
    assert M.coefficients.shape == blocks + (comb(degree + len(dims), degree),)
    assert np.all(np.isfinite(est.values))
    # the fit of its own output reproduces it (projection)
    again = evaluate_model(fit_block_polynomial(est, blocks, degree))
    np.testing.assert_allclose(again.values, est.values, atol=1e-9)
