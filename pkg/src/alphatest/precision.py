"""Idiosyncratic-error precision estimation: screening plus graphical lasso.

The pipeline is: screen the fitted intercepts against a log-scaled threshold,
rebuild residuals with the screened intercepts, form the residual correlation
matrix, run an off-diagonal-penalized graphical lasso on it, and rescale the
result back to the precision of the raw residuals.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

import numpy as np
import numba
import scipy.linalg

from .errors import (
    DegenerateResidual,
    IndefiniteInput,
    InsufficientSample,
    InvalidData,
    Unconverged,
)
from .model import FactorFit, PanelData

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class ScreeningSet:
    """Assets whose fitted intercept exceeds the screening threshold."""

    indices: frozenset
    threshold_constant: float
    delta_nt: float

    def mask(self, n: int) -> np.ndarray:
        out = np.zeros(n, dtype=bool)
        if self.indices:
            out[np.fromiter(self.indices, dtype=np.int64)] = True
        return out


@dataclass(frozen=True)
class ResidualCovariance:
    """Residual covariance built from screened intercepts.

    ``sigma_u`` is ``U U' / T`` with ``U = Y - alpha_tilde 1' - beta_hat X``,
    ``v_diag`` its diagonal square roots, ``r_corr`` the implied correlation
    matrix (unit diagonal exactly), ``alpha_tilde`` the screened intercepts.
    """

    sigma_u: np.ndarray
    v_diag: np.ndarray
    r_corr: np.ndarray
    alpha_tilde: np.ndarray


@dataclass(frozen=True)
class PrecisionEstimate:
    """Graphical-lasso output, optionally rescaled to the precision matrix.

    ``k_rho`` solves ``min tr(Psi R) - log det Psi + rho |offdiag(Psi)|_1``
    over positive-definite ``Psi``; ``gamma_hat = V^{-1} k_rho V^{-1}`` once
    :func:`precision_matrix` has been applied.
    """

    k_rho: np.ndarray
    penalty: float
    solver_iters: int
    objective_trace: tuple
    kkt_residual: float
    gamma_hat: np.ndarray | None = None


def screen(fit: FactorFit, c: float = 1.25) -> ScreeningSet:
    """Select assets with ``|alpha_hat_i| > sigma_hat_i * delta`` (strict).

    ``delta = c * log(log T) * sqrt(log N)``; needs T >= 4 and N >= 2 so the
    threshold is positive.  At monthly scales (T ~ 100, N ~ 100) the c = 1
    threshold sits near 3.3 standard errors and false-fires on ~10% of null
    panels, which feeds the spuriously large intercept back into the test;
    the default keeps the cut around 4 standard errors.
    """
    if c <= 0:
        raise InvalidData(f"screening constant must be positive, got {c}")
    t = fit.n_periods
    n = fit.n_assets
    if t <= 3:
        raise InsufficientSample(f"screening needs T >= 4, got T={t}")
    if n < 2:
        raise InvalidData("screening needs at least two assets")
    delta = c * math.log(math.log(t)) * math.sqrt(math.log(n))
    sigma_hat = np.sqrt(fit.sigma_hat_sq)
    hits = np.nonzero(np.abs(fit.alpha_hat) > sigma_hat * delta)[0]
    return ScreeningSet(
        indices=frozenset(int(i) for i in hits),
        threshold_constant=float(c),
        delta_nt=float(delta),
    )


def screened_covariance(
    panel: PanelData, fit: FactorFit, s: ScreeningSet
) -> ResidualCovariance:
    """Residual covariance and correlation after purging screened intercepts."""
    n, t = panel.returns.shape
    alpha_tilde = np.where(s.mask(n), fit.alpha_hat, 0.0)
    u = panel.returns - alpha_tilde[:, None] - fit.beta_hat @ panel.factors
    sigma_u = (u @ u.T) / t
    v_diag = np.sqrt(np.diag(sigma_u))
    if np.any(v_diag <= 0.0):
        bad = int(np.argmax(v_diag <= 0.0))
        raise DegenerateResidual(
            f"asset {panel.asset_ids[bad]} has zero screened-residual variance"
        )
    r_corr = sigma_u / np.outer(v_diag, v_diag)
    np.fill_diagonal(r_corr, 1.0)
    return ResidualCovariance(
        sigma_u=sigma_u, v_diag=v_diag, r_corr=r_corr, alpha_tilde=alpha_tilde
    )


@numba.njit(cache=True, nogil=True)
def _glasso_sweep(r_mat, rho, psi, w, inner_tol, inner_max):  # pragma: no cover
    """One block-coordinate-descent sweep over all columns of ``psi``.

    For each column j the block subproblem in x = psi[-j, j] is the lasso
    ``min r_jj x' A x + 2 x' r_12 + 2 rho |x|_1`` with ``A = psi_11^{-1}``
    obtained from the tracked inverse ``w``; every inner update decreases the
    full primal objective, so the per-sweep objective trace is non-increasing.
    Returns the mean absolute change of the off-diagonal entries of psi.
    """
    n = r_mat.shape[0]
    m = n - 1
    a = np.empty((m, m))
    x = np.empty(m)
    u = np.empty(m)
    r12 = np.empty(m)
    idx = np.empty(m, dtype=np.int64)
    total_change = 0.0
    for j in range(n):
        p = 0
        for i in range(n):
            if i != j:
                idx[p] = i
                p += 1
        w22 = w[j, j]
        for ai in range(m):
            ia = idx[ai]
            r12[ai] = r_mat[ia, j]
            x[ai] = psi[ia, j]
        for ai in range(m):
            ia = idx[ai]
            wa = w[ia, j] / w22
            for bi in range(m):
                a[ai, bi] = w[ia, idx[bi]] - wa * w[idx[bi], j]
        r22 = r_mat[j, j]
        for ai in range(m):
            acc = 0.0
            for bi in range(m):
                acc += a[ai, bi] * x[bi]
            u[ai] = acc
        for _ in range(inner_max):
            max_d = 0.0
            for ai in range(m):
                aii = a[ai, ai]
                if aii <= 0.0:
                    continue
                grad = r12[ai] + r22 * (u[ai] - aii * x[ai])
                target = -grad
                if target > rho:
                    new = (target - rho) / (r22 * aii)
                elif target < -rho:
                    new = (target + rho) / (r22 * aii)
                else:
                    new = 0.0
                d = new - x[ai]
                if d != 0.0:
                    for bi in range(m):
                        u[bi] += a[bi, ai] * d
                    x[ai] = new
                    if abs(d) > max_d:
                        max_d = abs(d)
            if max_d <= inner_tol:
                break
        for ai in range(m):
            acc = 0.0
            for bi in range(m):
                acc += a[ai, bi] * x[bi]
            u[ai] = acc
        schur = 1.0 / r22
        xu = 0.0
        for ai in range(m):
            xu += x[ai] * u[ai]
        psi22 = schur + xu
        for ai in range(m):
            ia = idx[ai]
            total_change += abs(psi[ia, j] - x[ai])
            psi[ia, j] = x[ai]
            psi[j, ia] = x[ai]
        psi[j, j] = psi22
        for ai in range(m):
            ia = idx[ai]
            wa = -u[ai] * r22
            w[ia, j] = wa
            w[j, ia] = wa
            for bi in range(m):
                w[ia, idx[bi]] = a[ai, bi] + u[ai] * u[bi] * r22
        w[j, j] = r22
    return total_change / (n * m)


def _chol_inverse(psi: np.ndarray) -> tuple[np.ndarray, float]:
    """Inverse and log-determinant of a PD matrix, flooring eigenvalues if needed."""
    try:
        chol = np.linalg.cholesky(psi)
    except np.linalg.LinAlgError:
        logger.warning("graphical lasso iterate lost positive definiteness; repairing")
        vals, vecs = np.linalg.eigh(psi)
        vals = np.maximum(vals, 1e-8)
        psi[...] = (vecs * vals) @ vecs.T
        chol = np.linalg.cholesky(psi)
    logdet = 2.0 * float(np.sum(np.log(np.diag(chol))))
    inv_chol = scipy.linalg.solve_triangular(
        chol, np.eye(chol.shape[0]), lower=True, check_finite=False
    )
    return inv_chol.T @ inv_chol, logdet


def _objective(psi: np.ndarray, r_corr: np.ndarray, rho: float, logdet: float) -> float:
    off_l1 = float(np.sum(np.abs(psi)) - np.sum(np.abs(np.diag(psi))))
    return float(np.sum(psi * r_corr)) - logdet + rho * off_l1


def _kkt_residual(psi: np.ndarray, w: np.ndarray, r_corr: np.ndarray, rho: float) -> float:
    """Max norm of the subgradient optimality conditions at (psi, w = psi^{-1})."""
    grad = r_corr - w
    n = psi.shape[0]
    off = ~np.eye(n, dtype=bool)
    nonzero = off & (psi != 0.0)
    zero = off & (psi == 0.0)
    res = np.abs(np.diag(grad)).max() if n else 0.0
    if np.any(nonzero):
        res = max(res, np.abs(grad[nonzero] + rho * np.sign(psi[nonzero])).max())
    if np.any(zero):
        res = max(res, max(0.0, np.abs(grad[zero]).max() - rho))
    return float(res)


def graphical_lasso(
    r_corr: np.ndarray,
    rho: float,
    tol: float = 1e-4,
    max_iter: int = 200,
    inner_tol: float | None = None,
    inner_max: int = 100,
) -> PrecisionEstimate:
    """Off-diagonal-penalized graphical lasso on a correlation matrix.

    Minimizes ``tr(Psi R) - log det Psi + rho |offdiag(Psi)|_1`` over
    positive-definite ``Psi`` by block coordinate descent on the columns of
    ``Psi``, each block solved by soft-thresholded coordinate descent.
    Convergence requires both the mean absolute off-diagonal change per sweep
    and the KKT residual to fall below ``tol``.

    Raises
    ------
    InvalidData
        Asymmetric input, non-unit diagonal, or rho < 0.
    IndefiniteInput
        rho = 0 with an input that is not positive-definite.
    Unconverged
        ``max_iter`` sweeps without meeting the tolerance; carries the last
        KKT residual.
    """
    r_mat = np.ascontiguousarray(np.asarray(r_corr, dtype=np.float64))
    n = r_mat.shape[0]
    if r_mat.ndim != 2 or r_mat.shape[1] != n:
        raise InvalidData("correlation matrix must be square")
    if not np.allclose(r_mat, r_mat.T, atol=1e-8):
        raise InvalidData("correlation matrix must be symmetric")
    if not np.allclose(np.diag(r_mat), 1.0, atol=1e-8):
        raise InvalidData("correlation matrix must have unit diagonal")
    if rho < 0:
        raise InvalidData(f"penalty must be non-negative, got {rho}")
    r_mat = 0.5 * (r_mat + r_mat.T)
    np.fill_diagonal(r_mat, 1.0)
    if rho == 0.0:
        try:
            np.linalg.cholesky(r_mat)
        except np.linalg.LinAlgError as exc:
            raise IndefiniteInput(
                "rho = 0 requires a positive-definite correlation matrix"
            ) from exc
    if inner_tol is None:
        inner_tol = min(1e-8, 0.01 * tol)
    psi = np.eye(n)
    w = np.eye(n)
    trace = []
    _, logdet0 = _chol_inverse(psi.copy())
    trace.append(_objective(psi, r_mat, rho, logdet0))
    kkt = math.inf
    for sweep in range(1, max_iter + 1):
        w, _ = _chol_inverse(psi)  # fresh inverse; bounds drift within the sweep
        change = _glasso_sweep(r_mat, rho, psi, w, inner_tol, inner_max)
        w_exact, logdet = _chol_inverse(psi)
        trace.append(_objective(psi, r_mat, rho, logdet))
        kkt = _kkt_residual(psi, w_exact, r_mat, rho)
        if change <= tol and kkt <= tol:
            return PrecisionEstimate(
                k_rho=0.5 * (psi + psi.T),
                penalty=float(rho),
                solver_iters=sweep,
                objective_trace=tuple(trace),
                kkt_residual=kkt,
            )
    raise Unconverged(
        f"graphical lasso did not converge in {max_iter} sweeps "
        f"(last KKT residual {kkt:.3e})",
        kkt_residual=kkt,
    )


def default_penalty(n: int, t: int, scale: float = 1.0) -> float:
    """Default glasso penalty ``scale * sqrt(log N / T)``.

    The scale must clear the sampling noise of the residual correlations
    (roughly ``2 / sqrt(T)``): entries kept by the penalty enter both the
    statistic and its simulated null, and retained pure-noise entries
    systematically deflate the simulated tail relative to the statistic.
    Larger scales over-shrink genuine dependence, which costs power exactly
    where the precision matrix is supposed to help.
    """
    return scale * math.sqrt(math.log(n) / t)


def precision_matrix(
    res_cov: ResidualCovariance, k_rho: np.ndarray | PrecisionEstimate
) -> PrecisionEstimate:
    """Rescale a correlation-scale precision to ``gamma_hat = V^{-1} K V^{-1}``."""
    if isinstance(k_rho, PrecisionEstimate):
        est = k_rho
        k = est.k_rho
    else:
        k = np.asarray(k_rho, dtype=np.float64)
        est = PrecisionEstimate(
            k_rho=k,
            penalty=float("nan"),
            solver_iters=0,
            objective_trace=(),
            kkt_residual=float("nan"),
        )
    v_inv = 1.0 / res_cov.v_diag
    gamma = k * np.outer(v_inv, v_inv)
    gamma = 0.5 * (gamma + gamma.T)
    return PrecisionEstimate(
        k_rho=est.k_rho,
        penalty=est.penalty,
        solver_iters=est.solver_iters,
        objective_trace=est.objective_trace,
        kkt_residual=est.kkt_residual,
        gamma_hat=gamma,
    )
