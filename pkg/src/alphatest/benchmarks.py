"""Competing intercept tests: PY, MAX, COM and FLY.

All four consume the shared squared t-statistics and a common set of
finite-sample corrections; FLY additionally needs a thresholded residual
covariance.  PY and FLY are sum-of-squares tests referenced to the standard
normal (upper tail), MAX is referenced to its extreme-value limit, and COM is
a Bonferroni combination of PY and MAX.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg
from scipy.stats import f as f_dist
from scipy.stats import norm

from .errors import InsufficientSample, InvalidData, SingularCovariance
from .model import FactorFit, PanelData, TStatVector

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class SharedCorrection:
    """Cross-correlation corrections entering the PY and FLY denominators.

    ``rho_tilde_sq`` averages squared residual correlations that survive the
    threshold ``(T - r - 1) rho_ij^2 >= varrho`` over all pairs, with
    ``sqrt(varrho) = Phi^{-1}(1 - p_n / 2)`` and ``p_n = 0.1 / (N - 1)``.
    """

    rho_tilde_sq: float
    varrho: float
    p_n: float
    pair_correlations: tuple


@dataclass(frozen=True)
class CompetingResult:
    test_name: str
    statistic: float
    p_value: float
    reference_distribution: str

    def reject(self, level: float) -> bool:
        return self.p_value <= level


@dataclass(frozen=True)
class ThresholdedCovariance:
    """Residual covariance with hard-thresholded off-diagonals (diagonal kept)."""

    sigma_thr: np.ndarray
    threshold_scale: float


def shared_corrections(fit: FactorFit, ts: TStatVector) -> SharedCorrection:
    """Thresholded average of squared pairwise residual correlations."""
    n = fit.n_assets
    if n < 2:
        raise InvalidData("need at least two assets for pairwise correlations")
    if ts.dof_residual < 2:
        raise InsufficientSample(f"T - r - 1 = {ts.dof_residual} < 2")
    p_n = 0.1 / (n - 1)
    varrho = float(norm.ppf(1.0 - p_n / 2.0) ** 2)
    res = fit.residuals
    norms = np.sqrt(np.sum(res**2, axis=1))
    corr = (res @ res.T) / np.outer(norms, norms)
    iu, ju = np.triu_indices(n, k=1)
    rho_sq = corr[iu, ju] ** 2
    keep = ts.dof_residual * rho_sq >= varrho
    rho_tilde_sq = float(2.0 * np.sum(rho_sq[keep]) / (n * (n - 1)))
    pairs = tuple(
        (int(i), int(j), float(corr[i, j]))
        for i, j in zip(iu[keep], ju[keep])
    )
    return SharedCorrection(
        rho_tilde_sq=rho_tilde_sq,
        varrho=varrho,
        p_n=p_n,
        pair_correlations=pairs,
    )


def _check_dof(t: int, r: int) -> None:
    if t <= r + 5:
        raise InsufficientSample(
            f"T={t} too small for the finite-sample corrections (need T >= r + 6)"
        )


def py_test(
    ts: TStatVector, corr: SharedCorrection, n: int, t: int, r: int
) -> CompetingResult:
    """Centered and scaled sum of squared t-statistics, upper-tail normal."""
    _check_dof(t, r)
    a1 = (t - r - 1) / (t - r - 3)
    num = np.sum(ts.t_sq - a1) / math.sqrt(n)
    den = a1 * math.sqrt(
        2.0 * (t - r - 2) / (t - r - 5) * (1.0 + (n - 1) * corr.rho_tilde_sq)
    )
    stat = float(num / den)
    return CompetingResult(
        test_name="PY",
        statistic=stat,
        p_value=float(norm.sf(stat)),
        reference_distribution="standard normal (upper tail)",
    )


def max_test(ts: TStatVector, n: int, t: int, r: int) -> CompetingResult:
    """Maximum squared t-statistic against its extreme-value reference.

    Each t_i^2 is F(1, T - r - 1) under the null, so under weak dependence
    ``P(max <= x) ~ (1 - P(F > x))^N``; the p-value is the complement,
    computed with the exact finite-dof tail.  The asymptotic Gumbel form
    ``exp(-exp(-x/2) / sqrt(pi))`` replaces the per-asset tail with its
    chi-square limit and over-rejects noticeably at T ~ 100 (t tails are
    heavier than Gaussian at the relevant extreme quantiles).  For N = 1 the
    reference reduces to the exact F test.
    """
    _check_dof(t, r)
    stat = float(np.max(ts.t_sq))
    tail = float(f_dist.sf(stat, 1, ts.dof_residual))
    p = float(-math.expm1(n * math.log1p(-min(tail, 1.0 - 1e-16))))
    return CompetingResult(
        test_name="MAX",
        statistic=stat,
        p_value=p,
        reference_distribution="extreme-value reference with exact F(1, T-r-1) tails",
    )


def com_test(py: CompetingResult, mx: CompetingResult) -> CompetingResult:
    """Bonferroni combination of the PY and MAX p-values."""
    p_min = min(py.p_value, mx.p_value)
    return CompetingResult(
        test_name="COM",
        statistic=float(p_min),
        p_value=float(min(1.0, 2.0 * p_min)),
        reference_distribution="Bonferroni of PY and MAX",
    )


def thresholded_covariance(
    fit: FactorFit,
    lambda_thr: float = 2.0,
    growth: float = 1.3,
    max_steps: int = 24,
    min_corr_eig: float = 0.05,
) -> ThresholdedCovariance:
    """Soft-threshold the residual covariance ``U U' / (T - r - 1)``.

    Off-diagonal correlations shrink by ``lam * sqrt(log N / T)`` toward
    zero (entries below the cut vanish); the diagonal is never touched.
    Soft thresholding keeps genuinely dependent blocks, which the inverse
    must retain for the test to stay conservative under strong
    cross-sectional dependence, while the shrinkage keeps the spectrum away
    from zero (a hard-truncated correlation band is typically indefinite and
    explodes the inverse).  Should the result still have correlation-scale
    minimum eigenvalue below ``min_corr_eig``, the cut grows geometrically;
    a fully shrunk (diagonal) matrix always terminates the escalation.
    """
    n, t = fit.residuals.shape
    r = fit.n_factors
    dof = t - r - 1
    if dof < 1:
        raise InsufficientSample(f"T - r - 1 = {dof} < 1")
    base = (fit.residuals @ fit.residuals.T) / dof
    d = np.diag(base)
    inv_root = 1.0 / np.sqrt(d)
    corr = base * np.outer(inv_root, inv_root)
    cut0 = math.sqrt(math.log(n) / t)
    lam = float(lambda_thr)
    corr_thr = np.eye(n)
    for _ in range(max_steps + 1):
        corr_thr = np.sign(corr) * np.maximum(np.abs(corr) - lam * cut0, 0.0)
        np.fill_diagonal(corr_thr, 1.0)
        if not np.any(corr_thr[~np.eye(n, dtype=bool)]):
            break  # fully shrunk: diagonal
        if float(np.linalg.eigvalsh(corr_thr)[0]) >= min_corr_eig:
            break
        lam *= growth
    if lam != lambda_thr:
        logger.debug(
            "thresholded covariance ill-conditioned at scale %.3g; used %.3g",
            lambda_thr,
            lam,
        )
    root = np.sqrt(d)
    thr = corr_thr * np.outer(root, root)
    np.fill_diagonal(thr, d)
    return ThresholdedCovariance(sigma_thr=thr, threshold_scale=lam)


def fly_test(
    panel: PanelData,
    fit: FactorFit,
    corr: SharedCorrection,
    thr: ThresholdedCovariance,
) -> CompetingResult:
    """Adjusted Wald statistic on the thresholded covariance, upper-tail normal.

    ``T (1 - xbar' wtilde) alpha_hat' (Sigma_thr)^{-1} alpha_hat`` centered by
    ``N (T - r - 1)/(T - r - 3)``, where ``wtilde`` uses the uncentered factor
    second moment ``(T^{-1} sum_t X_t X_t')^{-1} xbar``.
    """
    x = panel.factors
    r, t = x.shape
    n = panel.n_assets
    _check_dof(t, r)
    w_tilde = np.linalg.solve((x @ x.T) / t, fit.x_bar)
    lead = t * (1.0 - fit.x_bar @ w_tilde)
    try:
        c, low = scipy.linalg.cho_factor(thr.sigma_thr)
    except (np.linalg.LinAlgError, scipy.linalg.LinAlgError) as exc:
        raise SingularCovariance(f"thresholded covariance not invertible: {exc}") from exc
    quad = float(fit.alpha_hat @ scipy.linalg.cho_solve((c, low), fit.alpha_hat))
    a1 = (t - r - 1) / (t - r - 3)
    num = lead * quad - n * a1
    den = a1 * math.sqrt(
        2.0 * n * (t - r - 2) / (t - r - 5) * (1.0 + (n - 1) * corr.rho_tilde_sq)
    )
    stat = float(num / den)
    return CompetingResult(
        test_name="FLY",
        statistic=stat,
        p_value=float(norm.sf(stat)),
        reference_distribution="standard normal (upper tail)",
    )
