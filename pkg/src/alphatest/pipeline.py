"""End-to-end wiring: fit a panel once and run any mix of tests on it.

Test identifiers
----------------
``ATk``   adaptive statistic with upper bound K = k, bootstrap calibrated
``MODk``  fixed-k modified statistic, bootstrap calibrated
``PY`` ``MAX`` ``COM`` ``FLY``  benchmark tests
``COIN``  diagnostic that rejects with probability ``level`` (harness check)
"""

from __future__ import annotations

import re
from dataclasses import dataclass, replace

import numpy as np

from . import benchmarks as bm
from ._threading import single_threaded_blas
from .errors import InvalidData
from .model import PanelData, fit_ols, t_statistics
from .nullsim import SeedSpec, TestOutcome, build_null_table, calibrate
from .precision import (
    default_penalty,
    graphical_lasso,
    precision_matrix,
    screen,
    screened_covariance,
)
from .stats import adaptive_statistic, modified_statistic_curve, z_scores

DEFAULT_TESTS = ("AT10", "PY", "MAX", "COM", "FLY")

_BOOT_RE = re.compile(r"^(AT|MOD)(\d+)$")


@dataclass(frozen=True)
class TestConfig:
    """Knobs shared by the CLI, the Monte Carlo lab and the mimic study."""

    __test__ = False  # "test" as in hypothesis test; keep pytest away

    screening_c: float = 1.25
    rho: float | None = None  # None: 0.5 * sqrt(log N / T)
    glasso_tol: float = 1e-4
    glasso_max_iter: int = 200
    b: int = 1000
    level: float = 0.05
    seed: int = 0
    threads: int = 1
    lambda_thr: float = 2.0

    def with_seed(self, seed: int) -> "TestConfig":
        return replace(self, seed=seed)


def parse_test_id(name: str) -> tuple[str, int | None]:
    """Split a test identifier into (kind, k-or-K)."""
    m = _BOOT_RE.match(name)
    if m:
        return m.group(1), int(m.group(2))
    if name in ("PY", "MAX", "COM", "FLY", "COIN"):
        return name, None
    raise InvalidData(f"unknown test identifier {name!r}")


def result_p_value(result) -> float:
    return float(result.p_value)


def result_decision(result, level: float) -> bool:
    if isinstance(result, TestOutcome):
        return bool(result.decision)
    return bool(result.reject(level))


def run_panel_tests(
    panel: PanelData,
    cfg: TestConfig = TestConfig(),
    tests: tuple = DEFAULT_TESTS,
) -> dict:
    """Run the requested tests on one panel, sharing the fit across them.

    Returns a dict mapping test identifier to its outcome object
    (:class:`TestOutcome` for bootstrap-calibrated tests,
    :class:`CompetingResult` for the benchmarks).
    """
    parsed = [(name, *parse_test_id(name)) for name in tests]
    with single_threaded_blas():
        return _run_panel_tests(panel, cfg, parsed)


def _run_panel_tests(panel: PanelData, cfg: TestConfig, parsed: list) -> dict:
    fit = fit_ols(panel)
    results: dict = {}

    needs_tstats = any(kind in ("PY", "MAX", "COM", "FLY") for _, kind, _ in parsed)
    ts = t_statistics(panel, fit) if needs_tstats else None

    boot = [(name, kind, k) for name, kind, k in parsed if kind in ("AT", "MOD")]
    if boot:
        n, t = panel.n_assets, panel.n_periods
        k_max = max(k for _, _, k in boot)
        if k_max > n:
            raise InvalidData(f"K={k_max} exceeds the number of assets N={n}")
        s = screen(fit, cfg.screening_c)
        res_cov = screened_covariance(panel, fit, s)
        rho = cfg.rho if cfg.rho is not None else default_penalty(n, t)
        gl = graphical_lasso(
            res_cov.r_corr, rho, tol=cfg.glasso_tol, max_iter=cfg.glasso_max_iter
        )
        pe = precision_matrix(res_cov, gl)
        zs = z_scores(fit.alpha_hat, pe.gamma_hat)
        curve = modified_statistic_curve(zs, k_max, t)
        table = build_null_table(
            panel,
            fit,
            pe.gamma_hat,
            k_max,
            cfg.b,
            SeedSpec(cfg.seed),
            threads=cfg.threads,
        )
        sd = table.sd()
        for name, kind, k in boot:
            if kind == "AT":
                av = adaptive_statistic(curve[:k], table.mean[:k], sd[:k])
                results[name] = calibrate(
                    av.value, table, cfg.level, adaptive_k_max=k, test_name=name
                )
            else:
                results[name] = calibrate(
                    float(curve[k - 1]), table, cfg.level, k=k, test_name=name
                )

    if needs_tstats:
        n, t, r = panel.n_assets, panel.n_periods, panel.n_factors
        corr = bm.shared_corrections(fit, ts)
        py = mx = None
        wants = {kind for _, kind, _ in parsed}
        if wants & {"PY", "COM"}:
            py = bm.py_test(ts, corr, n, t, r)
        if wants & {"MAX", "COM"}:
            mx = bm.max_test(ts, n, t, r)
        if "PY" in wants:
            results["PY"] = py
        if "MAX" in wants:
            results["MAX"] = mx
        if "COM" in wants:
            results["COM"] = bm.com_test(py, mx)
        if "FLY" in wants:
            thr = bm.thresholded_covariance(fit, cfg.lambda_thr)
            results["FLY"] = bm.fly_test(panel, fit, corr, thr)

    if any(kind == "COIN" for _, kind, _ in parsed):
        rng = np.random.Generator(
            np.random.Philox(np.random.SeedSequence(entropy=cfg.seed, spawn_key=(97,)))
        )
        u = float(rng.uniform())
        results["COIN"] = bm.CompetingResult(
            test_name="COIN",
            statistic=u,
            p_value=u,
            reference_distribution="uniform(0, 1) diagnostic",
        )

    return {name: results[name] for name, _, _ in parsed}
