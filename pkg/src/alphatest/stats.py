"""Sparse-alternative test statistics built from the precision-weighted fit.

Two statistics share the same ingredients ``z = gamma_hat @ alpha_hat``:

* the exact statistic maximizes ``T z_S' gamma_{S,S}^{-1} z_S`` over all size-k
  index sets, which costs O(N^k) and is shipped only as a testing oracle;
* the modified statistic replaces ``gamma_{S,S}`` by its diagonal, so the
  maximum is just the top-k sum of ``z_j^2 / gamma_jj`` after one sort.

The adaptive statistic standardizes the modified statistic per k against
simulated null moments and takes the max over k <= K.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .errors import BudgetExceeded, DegenerateNull, InvalidK, InvalidPrecision

ENUMERATION_BUDGET = 10**7


@dataclass(frozen=True)
class ZScores:
    """Precision-weighted intercepts and their sorted diagonal contributions."""

    z: np.ndarray
    gamma_diag: np.ndarray
    contributions: np.ndarray
    order: np.ndarray

    @property
    def sorted_contributions(self) -> np.ndarray:
        return self.contributions[self.order]


@dataclass(frozen=True)
class StatisticValue:
    k: int
    value: float
    kind: str  # "exact" | "modified"
    chosen_set: tuple = ()


@dataclass(frozen=True)
class AdaptiveValue:
    """Max standardized modified statistic over k = 1..K and its argmax k0."""

    K: int
    k0: int
    value: float
    standardized: np.ndarray
    null_mean: np.ndarray
    null_sd: np.ndarray


def z_scores(alpha_hat: np.ndarray, gamma_hat: np.ndarray) -> ZScores:
    """Compute ``z = gamma_hat @ alpha_hat`` and sort ``z_j^2 / gamma_jj``.

    The sort is stable and descending, so ties resolve to the smaller index.
    """
    alpha_hat = np.asarray(alpha_hat, dtype=np.float64)
    gamma_hat = np.asarray(gamma_hat, dtype=np.float64)
    diag = np.diag(gamma_hat).copy()
    if np.any(diag <= 0.0):
        bad = int(np.argmax(diag <= 0.0))
        raise InvalidPrecision(f"gamma_hat[{bad},{bad}] = {diag[bad]:g} is not positive")
    z = gamma_hat @ alpha_hat
    contributions = z**2 / diag
    order = np.argsort(-contributions, kind="stable")
    return ZScores(z=z, gamma_diag=diag, contributions=contributions, order=order)


def modified_statistic_curve(zs: ZScores, k_max: int, t: int) -> np.ndarray:
    """Vector of modified statistics for k = 1..k_max via one prefix sum."""
    n = zs.contributions.shape[0]
    if not 1 <= k_max <= n:
        raise InvalidK(f"k_max={k_max} out of range [1, {n}]")
    return t * np.cumsum(zs.sorted_contributions[:k_max])


def modified_statistic(zs: ZScores, k: int, t: int) -> StatisticValue:
    """Modified statistic ``T * sum of the k largest z_j^2 / gamma_jj``."""
    n = zs.contributions.shape[0]
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} out of range [1, {n}]")
    value = float(t * np.sum(zs.sorted_contributions[:k]))
    return StatisticValue(k=k, value=value, kind="modified")


def exact_statistic(
    alpha_hat: np.ndarray, gamma_hat: np.ndarray, k: int, t: int
) -> StatisticValue:
    """Exact size-k statistic by subset enumeration (testing oracle).

    Maximizes ``T z_S' gamma_{S,S}^{-1} z_S`` over all C(N, k) subsets with a
    Cholesky solve per subset.  Enumeration is refused above
    ``ENUMERATION_BUDGET`` subsets.  Ties resolve to the lexicographically
    smallest set.
    """
    alpha_hat = np.asarray(alpha_hat, dtype=np.float64)
    gamma_hat = np.asarray(gamma_hat, dtype=np.float64)
    n = alpha_hat.shape[0]
    if not 1 <= k <= n:
        raise InvalidK(f"k={k} out of range [1, {n}]")
    n_subsets = math.comb(n, k)
    if n_subsets > ENUMERATION_BUDGET:
        raise BudgetExceeded(
            f"C({n},{k}) = {n_subsets} subsets exceeds the {ENUMERATION_BUDGET} "
            "budget; use the modified statistic instead"
        )
    z = gamma_hat @ alpha_hat
    best_value = -math.inf
    best_set: tuple = ()
    for subset in itertools.combinations(range(n), k):
        idx = np.asarray(subset)
        sub = gamma_hat[np.ix_(idx, idx)]
        zs = z[idx]
        chol = np.linalg.cholesky(sub)
        y = scipy.linalg.solve_triangular(chol, zs, lower=True, check_finite=False)
        value = float(t * (y @ y))
        if value > best_value:
            best_value = value
            best_set = subset
    return StatisticValue(k=k, value=best_value, kind="exact", chosen_set=best_set)


def adaptive_statistic(
    per_k: np.ndarray, null_mean: np.ndarray, null_sd: np.ndarray
) -> AdaptiveValue:
    """Standardize the modified-statistic curve and take the max over k.

    Ties in the argmax resolve to the smallest k.
    """
    per_k = np.asarray(per_k, dtype=np.float64)
    null_mean = np.asarray(null_mean, dtype=np.float64)
    null_sd = np.asarray(null_sd, dtype=np.float64)
    k_max = per_k.shape[0]
    if k_max < 1:
        raise InvalidK("need at least one k")
    if null_mean.shape[0] != k_max or null_sd.shape[0] != k_max:
        raise InvalidK("per_k, null_mean and null_sd must have equal length")
    if np.any(null_sd <= 0.0):
        bad = int(np.argmax(null_sd <= 0.0)) + 1
        raise DegenerateNull(f"null standard deviation for k={bad} is not positive")
    standardized = (per_k - null_mean) / null_sd
    k0 = int(np.argmax(standardized)) + 1
    return AdaptiveValue(
        K=k_max,
        k0=k0,
        value=float(standardized[k0 - 1]),
        standardized=standardized,
        null_mean=null_mean,
        null_sd=null_sd,
    )
