"""Synthetic designs and size/power experiments.

The data-generating process mimics a three-factor model: factors follow
GARCH(1,1) processes with fixed coefficients, loadings are drawn from fixed
uniform ranges, and idiosyncratic errors are ``Sigma_U^{1/2} eps_t`` for one
of three error families and one of three covariance constructions.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace

import numba
import numpy as np

from ._threading import single_threaded_blas
from .errors import AlphaTestError, ExperimentInvalid, InvalidData
from .model import PanelData
from .pipeline import TestConfig, result_decision, run_panel_tests

# Per-factor GARCH(1,1) coefficients: mean equation (const, ar), variance
# equation (const, lag, arch).  Rows: market, size, value.
FF3_MEAN = ((0.53, 0.06), (0.19, 0.19), (0.19, 0.05))
FF3_VARIANCE = ((0.89, 0.85, 0.11), (0.62, 0.74, 0.19), (0.80, 0.76, 0.15))

BETA_RANGES = ((0.2, 2.0), (-1.0, 1.5), (-1.5, 1.5))

# Seed-derivation namespaces (spawn_key domains).
_DOM_PANEL = 1
_DOM_TESTS = 2


@dataclass(frozen=True)
class FactorGarchSpec:
    """GARCH(1,1) factor generator: x_t = c + phi x_{t-1} + sqrt(h_t) z_t,
    h_t = omega + b h_{t-1} + a h_{t-1} z_{t-1}^2, started at x = 0, h = 1
    fifty periods before the sample with the burn-in discarded."""

    mean_coeffs: tuple = FF3_MEAN
    variance_coeffs: tuple = FF3_VARIANCE
    burn_in: int = 50

    @property
    def n_factors(self) -> int:
        return len(self.mean_coeffs)


@dataclass(frozen=True)
class ErrorSpec:
    """Idiosyncratic error family.

    ``gaussian``: iid N(0, I); ``student_t3``: iid t(3)/sqrt(3); ``arch``:
    independent per-asset recursions ``eps_it = sigma_it e_it`` with
    ``sigma_it = g0_i + g1_i eps_{i,t-1}^2``, ``g0 ~ U(0.25, 0.5)``,
    ``g1 ~ U(0, 0.5)``, innovations ``e`` normal or t(3)/sqrt(3).
    """

    family: str = "gaussian"  # gaussian | student_t3 | arch
    innovation: str = "normal"  # normal | t3 (arch only)
    arch_burn_in: int = 50

    def __post_init__(self):
        if self.family not in ("gaussian", "student_t3", "arch"):
            raise InvalidData(f"unknown error family {self.family!r}")
        if self.innovation not in ("normal", "t3"):
            raise InvalidData(f"unknown innovation {self.innovation!r}")


@dataclass(frozen=True)
class CovarianceSpec:
    """Error-covariance construction.

    ``case1``: ``Sigma = Lambda^{1/2} R Lambda^{1/2}`` with
    ``R = I + b b' - diag(b)^2``; the first and last ``floor(N^delta_gamma)``
    entries of b are U(0.7, 0.9), the rest zero, and Lambda is diagonal
    U(1, 2).  ``case2``: rank-one loadings plus a spatial-AR part
    ``L L' + (I - rho_eps W)^{-1} (I - rho_eps W')^{-1}`` with the banded W.
    ``ar1``: ``sigma_ij = ar1_rho^{|i-j|}``.
    """

    case: str = "case1"  # case1 | case2 | ar1
    delta_gamma: float = 0.25
    ar1_rho: float = 0.6
    rho_eps: float = 0.5
    b_override: tuple | None = None

    def __post_init__(self):
        if self.case not in ("case1", "case2", "ar1"):
            raise InvalidData(f"unknown covariance case {self.case!r}")


@dataclass(frozen=True)
class AlphaScenario:
    """Sparse-alpha construction under the alternative.

    ``null``: alpha = 0.  ``s1``: ``k = floor(N^{1/4})`` nonzeros of size
    ``w sqrt(2 a log N / T)`` with ``w ~ U(0, 1)``.  ``s2``: the same size
    with ``k = floor(N^{1/3})`` and random signs.  ``fig1``: explicit k,
    size ``w sqrt(a log N / T)`` with random signs.  Nonzero positions are
    uniform without replacement.
    """

    scenario: str = "null"  # null | s1 | s2 | fig1
    a: float = 0.0
    k: int | None = None  # fig1 only

    def __post_init__(self):
        if self.scenario not in ("null", "s1", "s2", "fig1"):
            raise InvalidData(f"unknown alpha scenario {self.scenario!r}")
        if self.scenario == "fig1" and (self.k is None or self.k < 1):
            raise InvalidData("fig1 scenario needs an explicit k >= 1")

    def sparsity(self, n: int) -> int:
        if self.scenario == "null":
            return 0
        if self.scenario == "s1":
            return _int_power(n, 0.25)
        if self.scenario == "s2":
            return _int_power(n, 1.0 / 3.0)
        return int(self.k)

    def draw(self, n: int, t: int, rng: np.random.Generator) -> np.ndarray:
        alpha = np.zeros(n)
        k = self.sparsity(n)
        if k == 0:
            return alpha
        pos = rng.choice(n, size=k, replace=False)
        if self.scenario == "s1":
            weights = rng.uniform(0.0, 1.0, size=k)
            mag = math.sqrt(2.0 * self.a * math.log(n) / t)
        elif self.scenario == "s2":
            weights = rng.integers(0, 2, size=k) * 2.0 - 1.0
            mag = math.sqrt(2.0 * self.a * math.log(n) / t)
        else:
            weights = rng.integers(0, 2, size=k) * 2.0 - 1.0
            mag = math.sqrt(self.a * math.log(n) / t)
        alpha[pos] = weights * mag
        return alpha


def _int_power(n: int, exponent: float) -> int:
    # guard against 8**(1/3) = 1.999... style float droop
    return int(n**exponent + 1e-9)


@numba.njit(cache=True, nogil=True)
def _garch_path(c, phi, omega, b, a, z, x0, h0):  # pragma: no cover
    t = z.shape[0] - 1  # z[0] seeds the first variance update
    x = np.empty(t)
    h_prev = h0
    x_prev = x0
    z_prev = z[0]
    for s in range(t):
        h = omega + b * h_prev + a * h_prev * z_prev * z_prev
        xv = c + phi * x_prev + math.sqrt(h) * z[s + 1]
        x[s] = xv
        h_prev = h
        x_prev = xv
        z_prev = z[s + 1]
    return x


def simulate_factors(
    spec: FactorGarchSpec,
    t: int,
    rng: np.random.Generator,
    innovations: np.ndarray | None = None,
) -> np.ndarray:
    """Generate an (r, T) factor matrix, discarding the burn-in.

    ``innovations`` overrides the standard-normal draws; it must have shape
    (r, T + burn_in + 1), the leading column seeding the variance recursion.
    """
    if t < 1:
        raise InvalidData("T must be at least 1")
    r = spec.n_factors
    total = t + spec.burn_in + 1
    if innovations is None:
        innovations = rng.standard_normal((r, total))
    else:
        innovations = np.asarray(innovations, dtype=np.float64)
        if innovations.shape != (r, total):
            raise InvalidData(
                f"innovations must have shape {(r, total)}, got {innovations.shape}"
            )
    out = np.empty((r, t))
    for j in range(r):
        c, phi = spec.mean_coeffs[j]
        omega, b, a = spec.variance_coeffs[j]
        path = _garch_path(c, phi, omega, b, a, innovations[j], 0.0, 1.0)
        out[j] = path[spec.burn_in:]
    return out


def build_covariance(
    spec: CovarianceSpec, n: int, rng: np.random.Generator
) -> np.ndarray:
    """Draw an N x N error covariance for the given construction."""
    if spec.case == "ar1":
        idx = np.arange(n)
        return spec.ar1_rho ** np.abs(idx[:, None] - idx[None, :])
    if spec.case == "case1":
        lam = rng.uniform(1.0, 2.0, size=n)
        if spec.b_override is not None:
            b = np.asarray(spec.b_override, dtype=np.float64)
            if b.shape != (n,):
                raise InvalidData(f"b_override must have length {n}")
        else:
            m = _int_power(n, spec.delta_gamma)
            b = np.zeros(n)
            if m > 0:
                b[:m] = rng.uniform(0.7, 0.9, size=m)
                b[n - m:] = rng.uniform(0.7, 0.9, size=m)
        r_mat = np.eye(n) + np.outer(b, b) - np.diag(b**2)
        sqrt_lam = np.sqrt(lam)
        sigma = r_mat * np.outer(sqrt_lam, sqrt_lam)
    else:
        if n < 4:
            raise InvalidData("case2 band structure needs N >= 4")
        m = _int_power(n, spec.delta_gamma)
        loadings = np.zeros(n)
        loadings[:m] = rng.uniform(0.7, 0.9, size=m)
        w = np.zeros((n, n))
        for i in range(1, n - 1):  # w[i+1, i] = 0.5 for i = 1..N-2 (1-based)
            w[i + 1 - 1, i - 1] = 0.5
        for j in range(3, n + 1):  # w[j-1, j] = 0.5 for j = 3..N (1-based)
            w[j - 2, j - 1] = 0.5
        w[0, 1] = 1.0
        w[n - 1, n - 2] = 1.0
        inv_part = np.linalg.inv(np.eye(n) - spec.rho_eps * w)
        sigma = np.outer(loadings, loadings) + inv_part @ inv_part.T
    sigma = 0.5 * (sigma + sigma.T)
    try:
        np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        vals, vecs = np.linalg.eigh(sigma)
        sigma = (vecs * np.maximum(vals, 1e-10)) @ vecs.T
        sigma = 0.5 * (sigma + sigma.T)
    return sigma


def _draw_errors(
    spec: ErrorSpec, n: int, t: int, rng: np.random.Generator
) -> np.ndarray:
    if spec.family == "gaussian":
        return rng.standard_normal((n, t))
    if spec.family == "student_t3":
        return rng.standard_t(3, size=(n, t)) / math.sqrt(3.0)
    g0 = rng.uniform(0.25, 0.5, size=n)
    g1 = rng.uniform(0.0, 0.5, size=n)
    total = t + spec.arch_burn_in
    if spec.innovation == "normal":
        e = rng.standard_normal((n, total))
    else:
        e = rng.standard_t(3, size=(n, total)) / math.sqrt(3.0)
    eps = np.empty((n, total))
    prev = np.zeros(n)
    for s in range(total):
        sigma_t = g0 + g1 * prev**2
        eps[:, s] = sigma_t * e[:, s]
        prev = eps[:, s]
    return eps[:, spec.arch_burn_in:]


def ff3_uniform_betas(rng: np.random.Generator, n: int) -> np.ndarray:
    """Default loading law: independent uniforms per factor column."""
    cols = [rng.uniform(lo, hi, size=n) for lo, hi in BETA_RANGES]
    return np.column_stack(cols)


def generate_panel(
    covariance: np.ndarray,
    error_spec: ErrorSpec,
    factor_spec: FactorGarchSpec,
    alpha: np.ndarray,
    beta_law,
    n: int,
    t: int,
    rng: np.random.Generator,
) -> PanelData:
    """Generate ``Y = alpha 1' + beta X + Sigma^{1/2} eps`` as a panel.

    The covariance square root is the symmetric eigendecomposition root, so
    the construction is invariant to asset relabeling of ``covariance``.
    ``beta_law`` is a callable ``(rng, n) -> (n, r)``; None uses the default
    uniform ranges.
    """
    covariance = np.asarray(covariance, dtype=np.float64)
    if covariance.shape != (n, n):
        raise InvalidData(f"covariance must be {n} x {n}")
    alpha = np.asarray(alpha, dtype=np.float64)
    if alpha.shape != (n,):
        raise InvalidData(f"alpha must have length {n}")
    if beta_law is None:
        beta_law = ff3_uniform_betas
    x = simulate_factors(factor_spec, t, rng)
    beta = np.asarray(beta_law(rng, n), dtype=np.float64)
    if beta.shape != (n, factor_spec.n_factors):
        raise InvalidData("beta_law returned the wrong shape")
    eps = _draw_errors(error_spec, n, t, rng)
    vals, vecs = np.linalg.eigh(covariance)
    root = (vecs * np.sqrt(np.maximum(vals, 0.0))) @ vecs.T
    y = alpha[:, None] + beta @ x + root @ eps
    return PanelData(returns=y, factors=x)


@dataclass(frozen=True)
class ExperimentDesign:
    """One data-generating configuration for the Monte Carlo harness."""

    name: str
    n: int
    t: int
    covariance: CovarianceSpec = CovarianceSpec()
    errors: ErrorSpec = ErrorSpec()
    factors: FactorGarchSpec = FactorGarchSpec()
    alpha: AlphaScenario = AlphaScenario()
    fixed_design: bool = False  # draw loadings/covariance once instead of per replicate


@dataclass(frozen=True)
class RejectionRow:
    test_name: str
    design: str
    n: int
    t: int
    a: float | None
    rejection_rate: float
    replications: int
    b: int
    seed: int


@dataclass(frozen=True)
class RejectionReport:
    """Monte Carlo rejection rates plus the replicate failure count."""

    rows: tuple
    failures: int
    replications: int

    def rate(self, test_name: str) -> float:
        for row in self.rows:
            if row.test_name == test_name:
                return row.rejection_rate
        raise KeyError(test_name)

    def write_csv(self, path, extra_header: list[str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for line in extra_header or []:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["test", "design", "N", "T", "a", "rate", "reps", "B", "seed"])
            for row in self.rows:
                writer.writerow(
                    [
                        row.test_name,
                        row.design,
                        row.n,
                        row.t,
                        "" if row.a is None else row.a,
                        f"{row.rejection_rate:.6f}",
                        row.replications,
                        row.b,
                        row.seed,
                    ]
                )


def _replicate_rng(seed: int, domain: int, rep: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(domain, rep))
    return np.random.Generator(np.random.Philox(ss))


def child_seed(seed: int, domain: int, rep: int) -> int:
    """Derived 64-bit master seed for a nested simulation stream."""
    ss = np.random.SeedSequence(entropy=seed, spawn_key=(domain, rep))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def run_experiment(
    design: ExperimentDesign,
    tests: tuple,
    replications: int,
    b: int,
    seed: int,
    cfg: TestConfig = TestConfig(),
    workers: int = 1,
) -> RejectionReport:
    """Monte Carlo rejection rates for the requested tests under a design.

    Replicates are independent and seeded from ``(seed, replicate)``, so the
    report is deterministic for any worker count.  Replicate failures are
    counted; more than 1% of them invalidates the experiment.
    """
    if replications < 1:
        raise InvalidData("need at least one replication")
    design_draw = None
    if design.fixed_design:
        rng0 = _replicate_rng(seed, _DOM_PANEL, 0)
        design_draw = (
            build_covariance(design.covariance, design.n, rng0),
            ff3_uniform_betas(rng0, design.n),
        )

    rejections = {name: np.zeros(replications, dtype=bool) for name in tests}
    failed = np.zeros(replications, dtype=bool)

    def one_replicate(rep: int) -> None:
        rng = _replicate_rng(seed, _DOM_PANEL, rep + 1)
        try:
            if design_draw is None:
                sigma = build_covariance(design.covariance, design.n, rng)
                beta_law = ff3_uniform_betas
            else:
                sigma, beta_fixed = design_draw
                beta_law = lambda _rng, _n: beta_fixed  # noqa: E731
            alpha = design.alpha.draw(design.n, design.t, rng)
            panel = generate_panel(
                sigma,
                design.errors,
                design.factors,
                alpha,
                beta_law,
                design.n,
                design.t,
                rng,
            )
            rep_cfg = replace(
                cfg, seed=child_seed(seed, _DOM_TESTS, rep + 1), b=b
            )
            results = run_panel_tests(panel, rep_cfg, tests)
            for name, res in results.items():
                rejections[name][rep] = result_decision(res, cfg.level)
        except AlphaTestError:
            failed[rep] = True

    with single_threaded_blas():
        if workers <= 1:
            for rep in range(replications):
                one_replicate(rep)
        else:
            with ThreadPoolExecutor(max_workers=workers) as pool:
                list(pool.map(one_replicate, range(replications)))

    n_failed = int(failed.sum())
    if n_failed > 0.01 * replications:
        raise ExperimentInvalid(
            f"{n_failed}/{replications} replicates failed; report not trustworthy"
        )
    ok = ~failed
    n_ok = int(ok.sum())
    a_value = None if design.alpha.scenario == "null" else design.alpha.a
    rows = tuple(
        RejectionRow(
            test_name=name,
            design=design.name,
            n=design.n,
            t=design.t,
            a=a_value,
            rejection_rate=float(rejections[name][ok].sum() / n_ok),
            replications=n_ok,
            b=b,
            seed=seed,
        )
        for name in tests
    )
    return RejectionReport(rows=rows, failures=n_failed, replications=replications)
