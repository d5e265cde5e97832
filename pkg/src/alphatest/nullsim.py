"""Simulation-based null calibration for the modified and adaptive statistics.

Each null draw weights the centered, factor-purged return columns with fresh
i.i.d. multipliers, mimicking the sampling noise of the intercept estimator
conditional on the observed panel.  Replicate j's multiplier stream depends
only on ``(master_seed, j)``, so tables are bit-reproducible regardless of
how replicates are scheduled.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateNull, InvalidData, InvalidK
from .model import FactorFit, PanelData

MULTIPLIER_KINDS = ("normal", "rademacher")


@dataclass(frozen=True)
class SeedSpec:
    """Identifies one multiplier stream: a 64-bit master seed plus a stream id."""

    master_seed: int
    stream_id: int = 0

    def __post_init__(self):
        object.__setattr__(self, "master_seed", int(self.master_seed) & (2**64 - 1))
        object.__setattr__(self, "stream_id", int(self.stream_id))
        if self.stream_id < 0:
            raise InvalidData("stream_id must be non-negative")


@dataclass(frozen=True)
class NullTable:
    """Simulated null draws of the modified statistic for k = 1..K.

    ``draws`` is B x K with each row non-decreasing in k; ``mean`` and ``var``
    are per-k moments over the B draws (population divisor), and
    ``adaptive_draws`` the per-draw max of the standardized rows.
    """

    draws: np.ndarray
    mean: np.ndarray
    var: np.ndarray
    adaptive_draws: np.ndarray
    B: int
    seed: SeedSpec
    multipliers: str = "normal"

    @property
    def K(self) -> int:
        return self.draws.shape[1]

    def sd(self) -> np.ndarray:
        return np.sqrt(self.var)


@dataclass(frozen=True)
class TestOutcome:
    """A calibrated test decision: reject iff statistic > critical_value."""

    statistic: float
    critical_value: float
    p_value: float
    level: float
    decision: bool
    k_or_K: int
    test_name: str


def multiplier_stream(spec: SeedSpec) -> np.random.Generator:
    """Counter-based generator keyed by (master_seed, stream_id)."""
    key = np.array([spec.master_seed, spec.stream_id], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


def draw_multipliers(rng: np.random.Generator, t: int, kind: str) -> np.ndarray:
    if kind == "normal":
        return rng.standard_normal(t)
    if kind == "rademacher":
        return rng.integers(0, 2, size=t).astype(np.float64) * 2.0 - 1.0
    raise InvalidData(f"unknown multiplier kind {kind!r}")


def _centered_columns(fit: FactorFit) -> np.ndarray:
    # (Y_t - Ybar) - beta_hat (X_t - Xbar) equals the residual columns minus
    # their row means; centering keeps constant multipliers annihilated exactly.
    res = fit.residuals
    return res - res.mean(axis=1, keepdims=True)


def _mean_scale(fit: FactorFit) -> float:
    return math.sqrt(1.0 + fit.mean_leverage) / fit.n_periods


def simulate_z_star(
    panel: PanelData, fit: FactorFit, multipliers: np.ndarray
) -> np.ndarray:
    """One multiplier draw of the intercept-noise proxy.

    ``z* = T^{-1} sqrt(1 + xbar' SigmaX^{-1} xbar) * sum_t {(Y_t - Ybar) -
    beta_hat (X_t - Xbar)} eps_t``.
    """
    eps = np.asarray(multipliers, dtype=np.float64)
    if eps.shape != (panel.n_periods,):
        raise InvalidData(
            f"multipliers must have length T={panel.n_periods}, got {eps.shape}"
        )
    return _mean_scale(fit) * (_centered_columns(fit) @ eps)


def build_null_table(
    panel: PanelData,
    fit: FactorFit,
    gamma_hat: np.ndarray,
    k_max: int,
    b: int,
    seed: SeedSpec | int,
    multipliers: str = "normal",
    threads: int = 1,
) -> NullTable:
    """Simulate B null draws of the modified statistic for k = 1..k_max.

    Per draw: weight the centered residual columns, map through ``gamma_hat``,
    sort the diagonal-normalized squares, and prefix-sum.  Replicates run in
    parallel over ``threads`` workers with bit-identical output for any
    thread count.
    """
    if b < 100:
        raise InvalidData(f"need B >= 100 simulation draws, got {b}")
    n = fit.n_assets
    if not 1 <= k_max <= n:
        raise InvalidK(f"K={k_max} out of range [1, {n}]")
    if multipliers not in MULTIPLIER_KINDS:
        raise InvalidData(f"unknown multiplier kind {multipliers!r}")
    if isinstance(seed, int):
        seed = SeedSpec(seed)
    gamma_hat = np.asarray(gamma_hat, dtype=np.float64)
    gdiag = np.diag(gamma_hat).copy()
    if np.any(gdiag <= 0.0):
        raise InvalidData("gamma_hat must have a strictly positive diagonal")
    centered = _centered_columns(fit)
    scale = _mean_scale(fit)
    t = fit.n_periods
    draws = np.empty((b, k_max))

    def run_replicate(j: int) -> None:
        rng = multiplier_stream(SeedSpec(seed.master_seed, j))
        eps = draw_multipliers(rng, t, multipliers)
        z_star = scale * (centered @ eps)
        y = gamma_hat @ z_star
        contrib = y * y / gdiag
        top = np.sort(contrib)[::-1][:k_max]
        draws[j] = t * np.cumsum(top)

    if threads <= 1:
        for j in range(b):
            run_replicate(j)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(run_replicate, range(b)))

    mean = draws.mean(axis=0)
    var = draws.var(axis=0)  # population divisor B
    if np.any(var <= 0.0):
        bad = int(np.argmax(var <= 0.0)) + 1
        raise DegenerateNull(f"simulated null variance is zero at k={bad}")
    adaptive = ((draws - mean) / np.sqrt(var)).max(axis=1)
    return NullTable(
        draws=draws,
        mean=mean,
        var=var,
        adaptive_draws=adaptive,
        B=b,
        seed=seed,
        multipliers=multipliers,
    )


def adaptive_null_draws(table: NullTable, k_max: int | None = None) -> np.ndarray:
    """Per-draw adaptive null values restricted to k <= k_max."""
    if k_max is None:
        k_max = table.K
    if not 1 <= k_max <= table.K:
        raise InvalidK(f"K={k_max} out of range [1, {table.K}]")
    sub = table.draws[:, :k_max]
    return ((sub - table.mean[:k_max]) / np.sqrt(table.var[:k_max])).max(axis=1)


def critical_value(draws: np.ndarray, level: float) -> float:
    """Empirical (1 - level) quantile: order statistic ceil((1-a)(B+1)), clamped."""
    b = draws.shape[0]
    m = math.ceil((1.0 - level) * (b + 1))
    m = min(max(m, 1), b)
    return float(np.sort(draws)[m - 1])


def calibrate(
    statistic: float,
    table: NullTable,
    level: float,
    k: int | None = None,
    adaptive_k_max: int | None = None,
    test_name: str | None = None,
) -> TestOutcome:
    """Critical value and add-one p-value for a statistic against the table.

    With ``k`` given, the fixed-k modified statistic is calibrated against
    column k of the table; otherwise the adaptive statistic is calibrated
    against the adaptive draws (restricted to ``adaptive_k_max`` if given).
    ``p = (1 + #{draws >= statistic}) / (B + 1)``.
    """
    if not 0.0 < level < 1.0:
        raise InvalidData(f"level must be in (0, 1), got {level}")
    if not np.isfinite(statistic):
        raise InvalidData(f"statistic must be finite, got {statistic}")
    if k is not None:
        if not 1 <= k <= table.K:
            raise InvalidK(f"k={k} out of range [1, {table.K}]")
        draws = table.draws[:, k - 1]
        name = test_name or f"MOD{k}"
        k_or_k_max = k
    else:
        k_or_k_max = adaptive_k_max or table.K
        draws = adaptive_null_draws(table, k_or_k_max)
        name = test_name or f"AT{k_or_k_max}"
    cv = critical_value(draws, level)
    p = (1.0 + int(np.sum(draws >= statistic))) / (table.B + 1.0)
    return TestOutcome(
        statistic=float(statistic),
        critical_value=cv,
        p_value=float(p),
        level=float(level),
        decision=bool(statistic > cv),
        k_or_K=int(k_or_k_max),
        test_name=name,
    )
