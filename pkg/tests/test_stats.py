import itertools
import math

import numpy as np
import numpy.testing as npt
import pytest

from alphatest import (
    adaptive_statistic,
    exact_statistic,
    modified_statistic,
    modified_statistic_curve,
    z_scores,
)
from alphatest.errors import BudgetExceeded, DegenerateNull, InvalidK, InvalidPrecision


def random_pd(n, seed, extra=0.0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal((n, n + 3))
    return a @ a.T / (n + 3) + extra * np.eye(n)


def brute_force_modified(z, gdiag, k, t):
    """Subset enumeration of the diagonal-normalized form."""
    n = len(z)
    best = -np.inf
    for subset in itertools.combinations(range(n), k):
        idx = list(subset)
        val = t * np.sum(z[idx] ** 2 / gdiag[idx])
        best = max(best, val)
    return best


def test_identity_precision_example():
    zs = z_scores(np.array([3.0, -1.0, 2.0]), np.eye(3))
    npt.assert_allclose(zs.contributions, [9.0, 1.0, 4.0])
    npt.assert_array_equal(zs.order, [0, 2, 1])


def test_zero_alpha_ties_break_by_index():
    zs = z_scores(np.zeros(5), np.eye(5))
    npt.assert_array_equal(zs.order, np.arange(5))


def test_z_scores_dense_oracle():
    gamma = random_pd(6, seed=2, extra=0.5)
    alpha = np.random.default_rng(3).standard_normal(6)
    zs = z_scores(alpha, gamma)
    z = gamma @ alpha
    npt.assert_allclose(zs.z, z, rtol=1e-12)
    npt.assert_allclose(zs.contributions, z**2 / np.diag(gamma), rtol=1e-12)


def test_z_scores_rejects_nonpositive_diagonal():
    gamma = np.eye(3)
    gamma[1, 1] = 0.0
    with pytest.raises(InvalidPrecision):
        z_scores(np.ones(3), gamma)


def test_modified_k1_is_max():
    gamma = random_pd(7, seed=4, extra=0.5)
    alpha = np.random.default_rng(5).standard_normal(7)
    zs = z_scores(alpha, gamma)
    got = modified_statistic(zs, 1, 50)
    assert got.value == pytest.approx(50 * zs.contributions.max())


def test_modified_kn_is_full_sum():
    gamma = random_pd(7, seed=6, extra=0.5)
    alpha = np.random.default_rng(7).standard_normal(7)
    zs = z_scores(alpha, gamma)
    got = modified_statistic(zs, 7, 50)
    assert got.value == pytest.approx(50 * zs.contributions.sum())


def test_modified_matches_subset_enumeration():
    gamma = random_pd(10, seed=8, extra=0.5)
    alpha = np.random.default_rng(9).standard_normal(10)
    zs = z_scores(alpha, gamma)
    got = modified_statistic(zs, 2, 40)
    want = brute_force_modified(zs.z, zs.gamma_diag, 2, 40)
    assert got.value == pytest.approx(want, rel=1e-12)


def test_curve_is_monotone_and_consistent():
    gamma = random_pd(9, seed=10, extra=0.5)
    alpha = np.random.default_rng(11).standard_normal(9)
    zs = z_scores(alpha, gamma)
    curve = modified_statistic_curve(zs, 9, 60)
    assert np.all(np.diff(curve) >= 0)
    for k in range(1, 10):
        assert curve[k - 1] == pytest.approx(modified_statistic(zs, k, 60).value)


def test_modified_rejects_bad_k():
    zs = z_scores(np.ones(4), np.eye(4))
    with pytest.raises(InvalidK):
        modified_statistic(zs, 0, 10)
    with pytest.raises(InvalidK):
        modified_statistic(zs, 5, 10)


def test_exact_equals_modified_for_diagonal_gamma():
    gamma = np.diag(np.random.default_rng(12).uniform(0.5, 2.0, size=6))
    alpha = np.random.default_rng(13).standard_normal(6)
    zs = z_scores(alpha, gamma)
    for k in range(1, 7):
        ex = exact_statistic(alpha, gamma, k, 30)
        mo = modified_statistic(zs, k, 30)
        assert ex.value == pytest.approx(mo.value, rel=1e-10)


def test_exact_full_set_identity():
    gamma = random_pd(5, seed=14, extra=0.5)
    alpha = np.random.default_rng(15).standard_normal(5)
    ex = exact_statistic(alpha, gamma, 5, 40)
    assert ex.value == pytest.approx(40 * alpha @ gamma @ alpha, rel=1e-10)
    assert ex.chosen_set == tuple(range(5))


def test_exact_matches_two_by_two_inverse_oracle():
    gamma = random_pd(8, seed=16, extra=0.5)
    alpha = np.random.default_rng(17).standard_normal(8)
    z = gamma @ alpha
    best = -np.inf
    for i, j in itertools.combinations(range(8), 2):
        a, b, c = gamma[i, i], gamma[i, j], gamma[j, j]
        det = a * c - b * b
        quad = (c * z[i] ** 2 - 2 * b * z[i] * z[j] + a * z[j] ** 2) / det
        best = max(best, 25 * quad)
    ex = exact_statistic(alpha, gamma, 2, 25)
    assert ex.value == pytest.approx(best, rel=1e-10)


def test_exact_budget_enforced():
    with pytest.raises(BudgetExceeded):
        exact_statistic(np.ones(60), np.eye(60), 8, 10)


def test_adaptive_single_k():
    av = adaptive_statistic(np.array([12.0]), np.array([10.0]), np.array([2.0]))
    assert av.value == pytest.approx(1.0)
    assert av.k0 == 1 and av.K == 1


def test_adaptive_argmax():
    av = adaptive_statistic(
        np.array([1.0, 5.0, 3.0]), np.zeros(3), np.array([2.0, 2.5, 3.0])
    )
    npt.assert_allclose(av.standardized, [0.5, 2.0, 1.0])
    assert av.value == pytest.approx(2.0)
    assert av.k0 == 2


def test_adaptive_tie_picks_smallest_k():
    av = adaptive_statistic(np.array([2.0, 2.0]), np.zeros(2), np.ones(2))
    assert av.k0 == 1


def test_adaptive_direct_loop_oracle():
    rng = np.random.default_rng(18)
    per_k = np.cumsum(rng.uniform(0.5, 2.0, size=8))
    mean = per_k * 0.9
    sd = rng.uniform(0.5, 1.5, size=8)
    av = adaptive_statistic(per_k, mean, sd)
    best, best_k = -np.inf, 0
    for k in range(8):
        v = (per_k[k] - mean[k]) / sd[k]
        if v > best:
            best, best_k = v, k + 1
    assert av.value == pytest.approx(best)
    assert av.k0 == best_k


def test_adaptive_zero_sd_raises():
    with pytest.raises(DegenerateNull):
        adaptive_statistic(np.ones(3), np.zeros(3), np.array([1.0, 0.0, 1.0]))


def test_statistics_permutation_invariant():
    gamma = random_pd(8, seed=19, extra=0.5)
    alpha = np.random.default_rng(20).standard_normal(8)
    curve = modified_statistic_curve(z_scores(alpha, gamma), 8, 30)
    perm = np.random.default_rng(21).permutation(8)
    gamma_p = gamma[np.ix_(perm, perm)]
    curve_p = modified_statistic_curve(z_scores(alpha[perm], gamma_p), 8, 30)
    npt.assert_allclose(curve_p, curve, rtol=1e-10)
    ex = exact_statistic(alpha, gamma, 2, 30)
    ex_p = exact_statistic(alpha[perm], gamma_p, 2, 30)
    assert ex_p.value == pytest.approx(ex.value, rel=1e-10)
