"""CSV ingestion, the rolling-window protocol, and the sign-flip mimic study.

File conventions: comma-separated, UTF-8, header row required, one date
column (ISO-8601 strings compared literally) and one numeric column per asset
or factor.  Riskfree files carry exactly one numeric column.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
import pandas as pd

from ._threading import single_threaded_blas
from .errors import AlignmentError, AlphaTestError, ExperimentInvalid, InvalidData, ParseError
from .mclab import RejectionReport, RejectionRow, child_seed
from .model import PanelData, fit_ols
from .nullsim import SeedSpec, draw_multipliers, multiplier_stream
from .pipeline import TestConfig, result_decision, result_p_value, run_panel_tests
from .precision import screen

_DOM_MIMIC = 11


@dataclass(frozen=True)
class DataSetManifest:
    returns_path: str
    factors_path: str
    riskfree_path: str | None = None
    date_column: str = "date"
    frequency: str = "monthly"


@dataclass(frozen=True)
class RollingConfig:
    """Rolling-window settings; one test battery per window."""

    window_length: int = 96
    step: int = 1
    k_values: tuple = (5, 10, 30)
    screening_c: float = 1.25
    rho: float | None = None
    b: int = 1000
    seed: int = 0
    level: float = 0.05
    threads: int = 1


@dataclass(frozen=True)
class ReportDocument:
    """Per-window p-values in the fixed column order."""

    columns: tuple
    rows: tuple  # (window_end, n_used, {column: p_value})

    def to_frame(self) -> pd.DataFrame:
        data = [
            {"window_end": end, "N_used": n, **pvals} for end, n, pvals in self.rows
        ]
        return pd.DataFrame(data, columns=["window_end", "N_used", *self.columns])

    def write_csv(self, path, extra_header: list[str] | None = None) -> None:
        with open(path, "w", newline="") as fh:
            for line in extra_header or []:
                fh.write(f"# {line}\n")
            self.to_frame().to_csv(fh, index=False)


def _read_numeric_csv(path: str, date_column: str) -> pd.DataFrame:
    """Read a CSV as strings and convert cell by cell, reporting bad cells.

    Empty cells become NaN (missing); non-numeric text raises ParseError with
    its 1-based file row (header is row 1) and column name.
    """
    raw = pd.read_csv(path, dtype=str, keep_default_na=False)
    if date_column not in raw.columns:
        raise InvalidData(f"{path}: missing date column {date_column!r}")
    columns = {}
    for col in raw.columns:
        if col == date_column:
            continue
        cells = raw[col].str.strip()
        blank = (cells == "") | cells.str.upper().isin(("NA", "NAN"))
        values = pd.to_numeric(cells.where(~blank, other=None), errors="coerce")
        bad = values.isna() & ~blank
        if bad.any():
            pos = int(np.argmax(bad.to_numpy()))
            raise ParseError(
                f"{path}: cell {cells.iloc[pos]!r} at row {pos + 2}, "
                f"column {col!r} is not numeric",
                row=pos + 2,
                column=col,
            )
        columns[col] = values.to_numpy()
    out = pd.DataFrame(columns, index=pd.Index(raw[date_column].str.strip(), name=date_column))
    return out


def load_frames(
    manifest: DataSetManifest,
) -> tuple[pd.DataFrame, pd.DataFrame, pd.Series | None]:
    """Load and align the returns, factors and optional riskfree files."""
    returns = _read_numeric_csv(manifest.returns_path, manifest.date_column)
    factors = _read_numeric_csv(manifest.factors_path, manifest.date_column)
    _check_alignment(returns.index, factors.index, manifest.factors_path)
    riskfree = None
    if manifest.riskfree_path is not None:
        rf_frame = _read_numeric_csv(manifest.riskfree_path, manifest.date_column)
        if rf_frame.shape[1] != 1:
            raise InvalidData(
                f"{manifest.riskfree_path}: expected exactly one riskfree column, "
                f"got {rf_frame.shape[1]}"
            )
        _check_alignment(returns.index, rf_frame.index, manifest.riskfree_path)
        riskfree = rf_frame.iloc[:, 0]
    if factors.isna().any().any():
        raise InvalidData(f"{manifest.factors_path}: factor series have missing values")
    if riskfree is not None and riskfree.isna().any():
        raise InvalidData(f"{manifest.riskfree_path}: riskfree series has missing values")
    return returns, factors, riskfree


def _check_alignment(base: pd.Index, other: pd.Index, path: str) -> None:
    if len(base) != len(other):
        raise AlignmentError(
            f"{path}: {len(other)} dates but returns file has {len(base)}"
        )
    mismatch = np.asarray(base != other)
    if mismatch.any():
        pos = int(np.argmax(mismatch))
        raise AlignmentError(
            f"{path}: date {other[pos]!r} at row {pos + 2} does not match "
            f"{base[pos]!r} in the returns file"
        )


def _to_panel(
    returns: pd.DataFrame, factors: pd.DataFrame, riskfree: pd.Series | None
) -> PanelData:
    complete = returns.columns[~returns.isna().any(axis=0)]
    dropped = [c for c in returns.columns if c not in set(complete)]
    for name in dropped:
        warnings.warn(f"asset {name!r} excluded: missing observations", stacklevel=3)
    if len(complete) == 0:
        raise InvalidData("no asset has complete observations")
    kept = returns[complete]
    excess = kept.sub(riskfree, axis=0) if riskfree is not None else kept
    return PanelData(
        returns=excess.to_numpy().T,
        factors=factors.to_numpy().T,
        asset_ids=tuple(str(c) for c in complete),
        period_ids=tuple(str(i) for i in returns.index),
    )


def ingest(manifest: DataSetManifest) -> PanelData:
    """Build a panel from the manifest.

    Returns become excess returns when a riskfree file is supplied, otherwise
    they are used as-is.  Assets with any missing observation are excluded
    with a warning naming the asset.
    """
    returns, factors, riskfree = load_frames(manifest)
    return _to_panel(returns, factors, riskfree)


def rolling_test(manifest: DataSetManifest, config: RollingConfig) -> ReportDocument:
    """Run the full battery on each trailing window of the panel.

    Windows end every ``step`` periods; assets with missing values inside a
    window are excluded from that window only.  Windows with fewer than two
    usable assets are skipped with a warning.
    """
    returns, factors, riskfree = load_frames(manifest)
    n_periods = len(returns.index)
    w = config.window_length
    if w > n_periods:
        raise InvalidData(
            f"window length {w} exceeds the {n_periods} available periods"
        )
    columns = _battery_tests(config.k_values)
    rows = []
    for end in range(w - 1, n_periods, config.step):
        sl = slice(end - w + 1, end + 1)
        ret_w = returns.iloc[sl]
        fac_w = factors.iloc[sl]
        rf_w = riskfree.iloc[sl] if riskfree is not None else None
        label = str(returns.index[end])
        panel = None
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")  # per-window exclusions are routine
            try:
                panel = _to_panel(ret_w, fac_w, rf_w)
            except InvalidData:
                pass
        if panel is None:
            warnings.warn(f"window {label}: no complete assets; skipped")
            continue
        if panel.n_assets < 2:
            warnings.warn(f"window {label}: fewer than two usable assets; skipped")
            continue
        effective = [min(int(k), panel.n_assets) for k in config.k_values]
        if effective != list(config.k_values):
            warnings.warn(
                f"window {label}: adaptive upper bound clipped to N={panel.n_assets}"
            )
        tests = _battery_tests(tuple(dict.fromkeys(effective)))
        cfg = TestConfig(
            screening_c=config.screening_c,
            rho=config.rho,
            b=config.b,
            level=config.level,
            seed=child_seed(config.seed, _DOM_MIMIC, end),
            threads=config.threads,
        )
        results = run_panel_tests(panel, cfg, tests)
        pvals = {}
        for name, k in zip(columns, ("PY", "MAX", "COM", *config.k_values, "FLY")):
            if name.startswith("AT"):
                pvals[name] = result_p_value(results[f"AT{min(int(k), panel.n_assets)}"])
            else:
                pvals[name] = result_p_value(results[name])
        rows.append((label, panel.n_assets, pvals))
    return ReportDocument(columns=columns, rows=tuple(rows))


def _clip_k_values(k_values: tuple, n: int) -> tuple:
    clipped = [min(int(k), n) for k in k_values]
    return tuple(dict.fromkeys(clipped))  # dedup, keep order


def _battery_tests(k_values: tuple) -> tuple:
    return ("PY", "MAX", "COM", *[f"AT{k}" for k in k_values], "FLY")


def mimic_study(
    panel: PanelData,
    mode: str,
    replications: int,
    b: int,
    seed: int,
    cfg: TestConfig | None = None,
    tests: tuple | None = None,
    injected_alpha: np.ndarray | None = None,
    workers: int = 1,
) -> RejectionReport:
    """Size (S1) or power (S2) study on data regenerated from a fitted window.

    Each replicate flips the fitted residual columns with Rademacher signs:
    S1 rebuilds returns from the factor part alone, S2 adds back the fitted
    intercepts that survive the screening threshold (constant 1).
    ``injected_alpha``, when given, is added to the fitted intercepts before
    screening.  An S2 run whose screened set is empty degenerates to S1.
    Unless ``cfg`` overrides it, the inner battery also screens with
    constant 1, the convention of the study this one mimics.
    """
    if mode not in ("S1", "S2"):
        raise InvalidData(f"mode must be 'S1' or 'S2', got {mode!r}")
    if cfg is None:
        cfg = TestConfig(screening_c=1.0)
    if tests is None:
        tests = _battery_tests(_clip_k_values((5, 10, 30), panel.n_assets))
    fit = fit_ols(panel)
    alpha_hat = fit.alpha_hat.copy()
    if injected_alpha is not None:
        injected_alpha = np.asarray(injected_alpha, dtype=np.float64)
        if injected_alpha.shape != alpha_hat.shape:
            raise InvalidData("injected_alpha must have one entry per asset")
        alpha_hat = alpha_hat + injected_alpha
    alpha_tilde = np.zeros_like(alpha_hat)
    if mode == "S2":
        base = replace(fit, alpha_hat=alpha_hat)
        kept = screen(base, 1.0)
        if not kept.indices:
            warnings.warn("S2 screened set is empty; study degenerates to S1")
        else:
            alpha_tilde = np.where(kept.mask(panel.n_assets), alpha_hat, 0.0)

    factor_part = fit.beta_hat @ panel.factors
    t = panel.n_periods
    rejections = {name: np.zeros(replications, dtype=bool) for name in tests}
    failed = np.zeros(replications, dtype=bool)

    def one_replicate(rep: int) -> None:
        rng = multiplier_stream(SeedSpec(child_seed(seed, _DOM_MIMIC, 0), rep + 1))
        signs = draw_multipliers(rng, t, "rademacher")
        y_star = alpha_tilde[:, None] + factor_part + fit.residuals * signs[None, :]
        try:
            rep_panel = PanelData(returns=y_star, factors=panel.factors)
            rep_cfg = replace(cfg, seed=child_seed(seed, _DOM_MIMIC, rep + 1), b=b)
            results = run_panel_tests(rep_panel, rep_cfg, tests)
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
            f"{n_failed}/{replications} mimic replicates failed"
        )
    ok = ~failed
    n_ok = int(ok.sum())
    rows = tuple(
        RejectionRow(
            test_name=name,
            design=f"mimic-{mode}",
            n=panel.n_assets,
            t=t,
            a=None,
            rejection_rate=float(rejections[name][ok].sum() / n_ok),
            replications=n_ok,
            b=b,
            seed=seed,
        )
        for name in tests
    )
    return RejectionReport(rows=rows, failures=n_failed, replications=replications)
