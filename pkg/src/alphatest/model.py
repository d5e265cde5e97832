"""Panel container and the factor-regression quantities every test consumes.

The model is ``y_it = alpha_i + beta_i' X_t + u_it`` for ``N`` assets observed
over ``T`` periods against ``r`` observable factors.  All estimators here are
the closed-form least-squares/MLE expressions; downstream modules only ever
see the fitted object, never raw panels.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg

from .errors import (
    DegenerateResidual,
    InsufficientSample,
    InvalidData,
    SingularDesign,
)

# Condition number above which a factor Gram matrix is treated as singular.
COND_LIMIT = 1e12


def _as_matrix(x, name: str) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 2:
        raise InvalidData(f"{name} must be a 2-d array, got ndim={arr.ndim}")
    if not np.all(np.isfinite(arr)):
        raise InvalidData(f"{name} contains non-finite entries")
    return arr


@dataclass(frozen=True)
class PanelData:
    """Excess-return panel with observable factors.

    Parameters
    ----------
    returns : (N, T) array
        Excess returns, one row per asset.
    factors : (r, T) array
        Factor observations, one row per factor.
    asset_ids, period_ids : sequences of labels, optional
        Generated automatically when omitted.

    Raises
    ------
    InvalidData
        Non-finite entries, mismatched shapes, or r = 0.
    SingularDesign
        Factor sample covariance with condition number above ``COND_LIMIT``.
    """

    returns: np.ndarray
    factors: np.ndarray
    asset_ids: tuple = field(default=())
    period_ids: tuple = field(default=())

    def __post_init__(self):
        returns = _as_matrix(self.returns, "returns")
        factors = _as_matrix(self.factors, "factors")
        n, t = returns.shape
        r, t2 = factors.shape
        if n < 1:
            raise InvalidData("need at least one asset")
        if r < 1:
            raise InvalidData("need at least one factor (r >= 1)")
        if t2 != t:
            raise InvalidData(f"returns have T={t} periods but factors have T={t2}")
        if t < r + 2:
            raise InsufficientSample(
                f"T={t} too small for r={r} factors (need T >= r + 2)"
            )
        xc = factors - factors.mean(axis=1, keepdims=True)
        sigma_x = (xc @ xc.T) / t
        cond = np.linalg.cond(sigma_x)
        if not np.isfinite(cond) or cond > COND_LIMIT:
            raise SingularDesign(
                f"factor covariance condition number {cond:.3e} exceeds {COND_LIMIT:.0e}",
                condition_number=float(cond),
            )
        returns.setflags(write=False)
        factors.setflags(write=False)
        object.__setattr__(self, "returns", returns)
        object.__setattr__(self, "factors", factors)
        if not self.asset_ids:
            object.__setattr__(self, "asset_ids", tuple(f"A{i:04d}" for i in range(n)))
        elif len(self.asset_ids) != n:
            raise InvalidData("asset_ids length does not match N")
        else:
            object.__setattr__(self, "asset_ids", tuple(self.asset_ids))
        if not self.period_ids:
            object.__setattr__(self, "period_ids", tuple(f"t{s:04d}" for s in range(t)))
        elif len(self.period_ids) != t:
            raise InvalidData("period_ids length does not match T")
        else:
            object.__setattr__(self, "period_ids", tuple(self.period_ids))

    @property
    def n_assets(self) -> int:
        return self.returns.shape[0]

    @property
    def n_periods(self) -> int:
        return self.returns.shape[1]

    @property
    def n_factors(self) -> int:
        return self.factors.shape[0]


@dataclass(frozen=True)
class FactorFit:
    """Closed-form least-squares fit of the factor model.

    ``alpha_hat`` and ``beta_hat`` are the per-asset intercepts and loadings,
    ``residuals`` the (N, T) matrix of fitted residuals, ``w_vec`` the vector
    ``SigmaX^{-1} x_bar`` entering the intercept variance, and
    ``sigma_hat_sq`` the per-asset intercept variance estimates
    ``T^{-2} (1 + x_bar' w) sum_t u_it^2``.
    """

    alpha_hat: np.ndarray
    beta_hat: np.ndarray
    residuals: np.ndarray
    w_vec: np.ndarray
    sigma_hat_sq: np.ndarray
    x_bar: np.ndarray
    y_bar: np.ndarray
    sigma_x_hat: np.ndarray

    @property
    def n_assets(self) -> int:
        return self.alpha_hat.shape[0]

    @property
    def n_periods(self) -> int:
        return self.residuals.shape[1]

    @property
    def n_factors(self) -> int:
        return self.beta_hat.shape[1]

    @property
    def mean_leverage(self) -> float:
        """``x_bar' SigmaX^{-1} x_bar``, the factor-mean inflation term."""
        return float(self.x_bar @ self.w_vec)


@dataclass(frozen=True)
class TStatVector:
    """Squared intercept t-statistics shared by the Wald-type benchmark tests."""

    t_sq: np.ndarray
    annihilator_trace: float
    dof_residual: int


def _chol_solve(gram: np.ndarray, rhs: np.ndarray, what: str) -> np.ndarray:
    """Solve ``gram @ x = rhs`` by Cholesky with a condition-number guard."""
    cond = np.linalg.cond(gram)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise SingularDesign(
            f"{what} condition number {cond:.3e} exceeds {COND_LIMIT:.0e}",
            condition_number=float(cond),
        )
    try:
        c, low = scipy.linalg.cho_factor(gram)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - guarded by cond
        raise SingularDesign(f"{what} is not positive-definite: {exc}") from exc
    return scipy.linalg.cho_solve((c, low), rhs)


def fit_ols(panel: PanelData) -> FactorFit:
    """Fit the factor model by per-asset least squares with an intercept.

    Implements the closed forms
    ``beta_hat = (Y - ybar 1')(X - xbar 1')' {(X - xbar 1')(X - xbar 1')'}^{-1}``,
    ``alpha_hat = ybar - beta_hat xbar`` and
    ``sigma_hat_sq_i = T^{-2} (1 + xbar' w) sum_t u_it^2`` with
    ``w = SigmaX^{-1} xbar``.

    Raises
    ------
    SingularDesign
        When the centered factor Gram matrix is numerically singular.
    """
    y = panel.returns
    x = panel.factors
    n, t = y.shape
    x_bar = x.mean(axis=1)
    y_bar = y.mean(axis=1)
    xc = x - x_bar[:, None]
    yc = y - y_bar[:, None]
    gram = xc @ xc.T  # T * SigmaX
    beta_hat = _chol_solve(gram, (yc @ xc.T).T, "centered factor Gram matrix").T
    alpha_hat = y_bar - beta_hat @ x_bar
    residuals = y - alpha_hat[:, None] - beta_hat @ x
    sigma_x_hat = gram / t
    w_vec = t * _chol_solve(gram, x_bar, "centered factor Gram matrix")
    scale = (1.0 + x_bar @ w_vec) / t**2
    sigma_hat_sq = scale * np.sum(residuals**2, axis=1)
    return FactorFit(
        alpha_hat=alpha_hat,
        beta_hat=beta_hat,
        residuals=residuals,
        w_vec=w_vec,
        sigma_hat_sq=sigma_hat_sq,
        x_bar=x_bar,
        y_bar=y_bar,
        sigma_x_hat=sigma_x_hat,
    )


def t_statistics(panel: PanelData, fit: FactorFit) -> TStatVector:
    """Per-asset squared t-statistics for the fitted intercepts.

    ``t_i^2 = alpha_hat_i^2 (1' M_X 1) / {rss_i / (T - r - 1)}`` where ``M_X``
    annihilates the T x r factor block and ``rss_i`` is the residual sum of
    squares of asset i.  The annihilator enters only through the scalar
    ``1' M_X 1``, computed once from the uncentered factor Gram matrix.

    Raises
    ------
    InsufficientSample
        ``T - r - 1 < 1``.
    DegenerateResidual
        An asset with numerically zero residual variance.
    """
    x = panel.factors
    r, t = x.shape
    dof = t - r - 1
    if dof < 1:
        raise InsufficientSample(f"T - r - 1 = {dof} < 1")
    rss = np.sum(fit.residuals**2, axis=1)
    floor = 1e-24 * np.maximum(1.0, np.sum(panel.returns**2, axis=1))
    if np.any(rss <= floor):
        bad = int(np.argmax(rss <= floor))
        raise DegenerateResidual(
            f"asset {panel.asset_ids[bad]} has zero residual variance"
        )
    ones_x = x.sum(axis=1)  # X 1 = T x_bar
    trace = t - ones_x @ _chol_solve(x @ x.T, ones_x, "uncentered factor Gram matrix")
    t_sq = fit.alpha_hat**2 * trace / (rss / dof)
    return TStatVector(t_sq=t_sq, annihilator_trace=float(trace), dof_residual=dof)
