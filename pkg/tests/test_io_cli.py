import json
import math

import numpy as np
import numpy.testing as npt
import pytest

from alphatest import (
    CovarianceSpec,
    DataSetManifest,
    ErrorSpec,
    FactorGarchSpec,
    RollingConfig,
    build_covariance,
    fit_ols,
    generate_panel,
    ingest,
    mimic_study,
    rolling_test,
)
from alphatest.cli import main
from alphatest.errors import AlignmentError, ParseError
from alphatest.pipeline import TestConfig

from conftest import random_panel


def write_csv(path, header, rows):
    lines = [",".join(header)] + [",".join(str(v) for v in row) for row in rows]
    path.write_text("\n".join(lines) + "\n")


def make_dataset(tmp_path, n=3, t=10, seed=0, riskfree=True, missing_cell=None):
    rng = np.random.default_rng(seed)
    dates = [f"2001-{1 + i // 28:02d}-{1 + i % 28:02d}" for i in range(t)]
    returns = rng.standard_normal((t, n)).round(6)
    factors = rng.standard_normal((t, 2)).round(6)
    rf = rng.uniform(0.0, 0.01, size=t).round(6)
    ret_rows = []
    for i, d in enumerate(dates):
        row = [d] + [f"{returns[i, j]}" for j in range(n)]
        if missing_cell is not None and (i, 0) == missing_cell:
            row[1] = ""
        ret_rows.append(row)
    ret_path = tmp_path / "returns.csv"
    write_csv(ret_path, ["date"] + [f"S{j}" for j in range(n)], ret_rows)
    fac_path = tmp_path / "factors.csv"
    write_csv(
        fac_path,
        ["date", "MKT", "SMB"],
        [[d] + list(factors[i]) for i, d in enumerate(dates)],
    )
    rf_path = None
    if riskfree:
        rf_path = tmp_path / "riskfree.csv"
        write_csv(rf_path, ["date", "RF"], [[d, rf[i]] for i, d in enumerate(dates)])
    manifest = DataSetManifest(
        returns_path=str(ret_path),
        factors_path=str(fac_path),
        riskfree_path=str(rf_path) if rf_path else None,
    )
    return manifest, returns, factors, rf


def test_ingest_round_trip(tmp_path):
    manifest, returns, factors, rf = make_dataset(tmp_path)
    panel = ingest(manifest)
    assert panel.n_assets == 3 and panel.n_periods == 10 and panel.n_factors == 2
    npt.assert_allclose(panel.returns, (returns - rf[:, None]).T, atol=1e-12)
    npt.assert_allclose(panel.factors, factors.T, atol=1e-12)


def test_ingest_without_riskfree_uses_raw_returns(tmp_path):
    manifest, returns, _, _ = make_dataset(tmp_path, riskfree=False)
    panel = ingest(manifest)
    npt.assert_allclose(panel.returns, returns.T, atol=1e-12)


def test_ingest_drops_asset_with_missing_cell(tmp_path):
    manifest, _, _, _ = make_dataset(tmp_path, missing_cell=(4, 0))
    with pytest.warns(UserWarning, match="S0"):
        panel = ingest(manifest)
    assert panel.n_assets == 2
    assert panel.asset_ids == ("S1", "S2")


def test_ingest_misaligned_dates(tmp_path):
    manifest, _, _, _ = make_dataset(tmp_path)
    text = (tmp_path / "factors.csv").read_text().splitlines()
    text[3] = text[3].replace("2001-01-03", "1999-12-31")
    (tmp_path / "factors.csv").write_text("\n".join(text) + "\n")
    with pytest.raises(AlignmentError, match="1999-12-31"):
        ingest(manifest)


def test_ingest_parse_error_reports_cell(tmp_path):
    manifest, _, _, _ = make_dataset(tmp_path)
    text = (tmp_path / "returns.csv").read_text().splitlines()
    parts = text[5].split(",")
    parts[2] = "oops"
    text[5] = ",".join(parts)
    (tmp_path / "returns.csv").write_text("\n".join(text) + "\n")
    with pytest.raises(ParseError) as err:
        ingest(manifest)
    assert err.value.row == 6
    assert err.value.column == "S1"


def synthetic_market_csvs(tmp_path, n=170, t=200, seed=33):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((3, t)) * [[4.0], [2.0], [2.0]]
    beta = np.column_stack(
        [rng.uniform(0.2, 2.0, n), rng.uniform(-1, 1.5, n), rng.uniform(-1.5, 1.5, n)]
    )
    y = beta @ x + rng.standard_normal((n, t)) * 3.0
    dates = [f"{1990 + i // 12}-{1 + i % 12:02d}-01" for i in range(t)]
    write_csv(
        tmp_path / "returns.csv",
        ["date"] + [f"S{j:03d}" for j in range(n)],
        [[dates[i]] + list(np.round(y[:, i], 6)) for i in range(t)],
    )
    write_csv(
        tmp_path / "factors.csv",
        ["date", "MKT", "SMB", "HML"],
        [[dates[i]] + list(np.round(x[:, i], 6)) for i in range(t)],
    )
    return DataSetManifest(
        returns_path=str(tmp_path / "returns.csv"),
        factors_path=str(tmp_path / "factors.csv"),
    )


def test_rolling_produces_full_battery(tmp_path):
    manifest = synthetic_market_csvs(tmp_path)
    config = RollingConfig(window_length=96, step=24, b=120, seed=4)
    report = rolling_test(manifest, config)
    assert report.columns == ("PY", "MAX", "COM", "AT5", "AT10", "AT30", "FLY")
    assert len(report.rows) == len(range(95, 200, 24))
    for _end, n_used, pvals in report.rows:
        assert n_used == 170
        assert len(pvals) == 7
        assert all(np.isfinite(p) and 0.0 <= p <= 1.0 for p in pvals.values())


def test_rolling_report_csv(tmp_path):
    manifest = synthetic_market_csvs(tmp_path, n=20, t=130, seed=9)
    config = RollingConfig(window_length=96, step=30, k_values=(5,), b=120, seed=1)
    report = rolling_test(manifest, config)
    out = tmp_path / "rolling.csv"
    report.write_csv(out, extra_header=["alphatest=test seed=1"])
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# alphatest")
    assert lines[1] == "window_end,N_used,PY,MAX,COM,AT5,FLY"


# ------------------------------------------------------------- mimic study


def test_mimic_s1_recovers_loadings():
    panel = random_panel(8, 60, seed=50)
    fit = fit_ols(panel)
    from alphatest.nullsim import SeedSpec, draw_multipliers, multiplier_stream

    betas = []
    for rep in range(200):
        signs = draw_multipliers(multiplier_stream(SeedSpec(1, rep)), 60, "rademacher")
        y_star = fit.beta_hat @ panel.factors + fit.residuals * signs[None, :]
        from alphatest import PanelData

        betas.append(fit_ols(PanelData(returns=y_star, factors=panel.factors)).beta_hat)
    avg = np.mean(betas, axis=0)
    npt.assert_allclose(avg, fit.beta_hat, atol=0.05)


def test_mimic_s2_empty_screen_warns(small_panel):
    # zero the intercepts so nothing survives screening
    fit = fit_ols(small_panel)
    from alphatest import PanelData

    y = small_panel.returns - fit.alpha_hat[:, None]
    panel = PanelData(returns=y, factors=small_panel.factors)
    with pytest.warns(UserWarning, match="degenerates"):
        mimic_study(panel, "S2", 3, 120, seed=2, tests=("MOD1",))


def test_mimic_deterministic_and_parallel(small_panel):
    r1 = mimic_study(small_panel, "S1", 12, 120, seed=6, tests=("MOD1", "PY"), workers=1)
    r2 = mimic_study(small_panel, "S1", 12, 120, seed=6, tests=("MOD1", "PY"), workers=2)
    assert [row.rejection_rate for row in r1.rows] == [
        row.rejection_rate for row in r2.rows
    ]


# --------------------------------------------------------------------- CLI


def test_cli_usage_error_exits_2():
    assert main(["bogus-command"]) == 2
    assert main(["test"]) == 2  # missing required arguments


def test_cli_data_error_exits_3(tmp_path):
    code = main(
        ["test", "--returns", str(tmp_path / "nope.csv"), "--factors", str(tmp_path / "nope2.csv")]
    )
    assert code == 3


def test_cli_test_subcommand(tmp_path, capsys):
    manifest = synthetic_market_csvs(tmp_path, n=12, t=60, seed=21)
    out = tmp_path / "report.csv"
    code = main(
        [
            "test",
            "--returns", manifest.returns_path,
            "--factors", manifest.factors_path,
            "--K", "5",
            "--k", "3",
            "--B", "200",
            "--seed", "11",
            "--out", str(out),
        ]
    )
    assert code == 0
    printed = capsys.readouterr().out
    for name in ("AT5", "MOD3", "PY", "MAX", "COM", "FLY"):
        assert name in printed
    lines = out.read_text().splitlines()
    assert lines[0].startswith("# alphatest=")
    assert "seed=11" in lines[0]
    assert lines[1] == "test,statistic,p_value"
    assert len(lines) == 8


def test_cli_run_is_reproducible(tmp_path):
    manifest = synthetic_market_csvs(tmp_path, n=10, t=50, seed=22)
    args = [
        "test",
        "--returns", manifest.returns_path,
        "--factors", manifest.factors_path,
        "--B", "150",
        "--seed", "5",
    ]
    out1, out2 = tmp_path / "a.csv", tmp_path / "b.csv"
    assert main(args + ["--out", str(out1)]) == 0
    assert main(args + ["--out", str(out2)]) == 0
    assert out1.read_bytes() == out2.read_bytes()


def test_cli_simulate_with_config(tmp_path, capsys):
    config = {
        "name": "tiny",
        "design": "ar1",
        "N": 10,
        "T": 40,
        "scenario": "fig1",
        "k": 1,
        "a": [0.5, 2.0],
        "tests": ["MOD1", "PY"],
        "replications": 8,
        "B": 120,
        "seed": 3,
    }
    cfg_path = tmp_path / "design.json"
    cfg_path.write_text(json.dumps(config))
    out = tmp_path / "rates.csv"
    svg = tmp_path / "power.svg"
    code = main(
        ["simulate", "--config", str(cfg_path), "--out", str(out), "--emit-plot", str(svg)]
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "test,design,N,T,a,rate,reps,B,seed"
    assert len(lines) == 6  # header comment + csv header + 2 tests x 2 signal levels
    assert svg.read_text().lstrip().startswith("<?xml")


def test_cli_mimic_subcommand(tmp_path):
    manifest = synthetic_market_csvs(tmp_path, n=8, t=48, seed=23)
    out = tmp_path / "mimic.csv"
    code = main(
        [
            "mimic",
            "--returns", manifest.returns_path,
            "--factors", manifest.factors_path,
            "--mode", "S1",
            "--replications", "6",
            "--B", "120",
            "--seed", "9",
            "--out", str(out),
        ]
    )
    assert code == 0
    assert out.read_text().splitlines()[1] == "test,design,N,T,a,rate,reps,B,seed"


def test_cli_rolling_subcommand(tmp_path):
    manifest = synthetic_market_csvs(tmp_path, n=10, t=120, seed=24)
    out = tmp_path / "rolling.csv"
    svg = tmp_path / "rolling.svg"
    code = main(
        [
            "rolling",
            "--returns", manifest.returns_path,
            "--factors", manifest.factors_path,
            "--window", "96",
            "--step", "12",
            "--K", "5,10",
            "--B", "120",
            "--out", str(out),
            "--emit-plot", str(svg),
        ]
    )
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[1] == "window_end,N_used,PY,MAX,COM,AT5,AT10,FLY"
    assert svg.exists()
