"""Command-line interface.

Subcommands: ``test`` (one panel), ``rolling``, ``simulate`` (Monte Carlo
designs from a JSON config), ``mimic`` (S1/S2 sign-flip study).  Exit codes:
0 success, 2 usage error, 3 data or input error.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

from . import __version__
from .errors import AlphaTestError
from .io import DataSetManifest, RollingConfig, ingest, mimic_study, rolling_test
from .mclab import (
    AlphaScenario,
    CovarianceSpec,
    ErrorSpec,
    ExperimentDesign,
    run_experiment,
)
from .pipeline import DEFAULT_TESTS, TestConfig, result_p_value, run_panel_tests

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_DATA = 3


def _config_header(cfg: TestConfig, **extra) -> list[str]:
    fields = {
        "alphatest": __version__,
        "seed": cfg.seed,
        "B": cfg.b,
        "C": cfg.screening_c,
        "rho": "auto" if cfg.rho is None else cfg.rho,
        "level": cfg.level,
        **extra,
    }
    return [" ".join(f"{k}={v}" for k, v in fields.items())]


def _add_data_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--returns", required=True, help="CSV of returns, one column per asset")
    p.add_argument("--factors", required=True, help="CSV of factor series")
    p.add_argument("--riskfree", default=None, help="optional CSV with one riskfree column")
    p.add_argument("--date-column", default="date")


def _add_common_args(p: argparse.ArgumentParser) -> None:
    p.add_argument("--B", type=int, default=1000, help="simulation draws (default 1000)")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--level", type=float, default=0.05)
    p.add_argument("--rho", type=float, default=None, help="glasso penalty (default auto)")
    p.add_argument("--C", type=float, default=1.25, help="screening constant")
    p.add_argument("--threads", type=int, default=1)
    p.add_argument("--out", default=None, help="output CSV path")


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="alphatest",
        description="Tests for nonzero intercepts in high-dimensional factor pricing models",
    )
    parser.add_argument("--version", action="version", version=f"alphatest {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p_test = sub.add_parser("test", help="run the full battery on one panel")
    _add_data_args(p_test)
    _add_common_args(p_test)
    p_test.add_argument("--K", type=int, default=10, help="adaptive upper bound")
    p_test.add_argument("--k", type=int, default=None, help="also report the fixed-k test")

    p_roll = sub.add_parser("rolling", help="rolling-window battery")
    _add_data_args(p_roll)
    _add_common_args(p_roll)
    p_roll.add_argument("--window", type=int, default=96)
    p_roll.add_argument("--step", type=int, default=1)
    p_roll.add_argument(
        "--K", default="5,10,30", help="comma-separated adaptive upper bounds"
    )
    p_roll.add_argument("--emit-plot", default=None, help="write a p-value SVG")

    p_sim = sub.add_parser("simulate", help="Monte Carlo experiment from a JSON design")
    p_sim.add_argument("--config", required=True, help="design JSON (see README)")
    p_sim.add_argument("--out", default=None)
    p_sim.add_argument("--workers", type=int, default=1)
    p_sim.add_argument("--emit-plot", default=None, help="write a power-curve SVG")

    p_mim = sub.add_parser("mimic", help="S1/S2 sign-flip study on a fitted panel")
    _add_data_args(p_mim)
    _add_common_args(p_mim)
    p_mim.add_argument("--mode", choices=("S1", "S2"), default="S1")
    p_mim.add_argument("--replications", type=int, default=500)
    p_mim.add_argument("--workers", type=int, default=1)
    p_mim.set_defaults(C=1.0)  # the mimicked study screens with constant 1
    return parser


def _cfg_from_args(args) -> TestConfig:
    return TestConfig(
        screening_c=args.C,
        rho=args.rho,
        b=args.B,
        level=args.level,
        seed=args.seed,
        threads=args.threads,
    )


def _cmd_test(args) -> int:
    manifest = DataSetManifest(args.returns, args.factors, args.riskfree, args.date_column)
    panel = ingest(manifest)
    cfg = _cfg_from_args(args)
    tests = [f"AT{args.K}", "PY", "MAX", "COM", "FLY"]
    if args.k is not None:
        tests.insert(1, f"MOD{args.k}")
    results = run_panel_tests(panel, cfg, tuple(tests))
    header = _config_header(cfg, K=args.K, N=panel.n_assets, T=panel.n_periods)
    lines = [
        (name, f"{res.statistic:.6f}", f"{result_p_value(res):.6f}")
        for name, res in results.items()
    ]
    for name, stat, p in lines:
        print(f"{name:>6}  statistic={stat}  p={p}")
    if args.out:
        with open(args.out, "w", newline="") as fh:
            for line in header:
                fh.write(f"# {line}\n")
            writer = csv.writer(fh)
            writer.writerow(["test", "statistic", "p_value"])
            writer.writerows(lines)
    return EXIT_OK


def _cmd_rolling(args) -> int:
    manifest = DataSetManifest(args.returns, args.factors, args.riskfree, args.date_column)
    k_values = tuple(int(tok) for tok in str(args.K).split(",") if tok)
    config = RollingConfig(
        window_length=args.window,
        step=args.step,
        k_values=k_values,
        screening_c=args.C,
        rho=args.rho,
        b=args.B,
        seed=args.seed,
        level=args.level,
        threads=args.threads,
    )
    report = rolling_test(manifest, config)
    frame = report.to_frame()
    print(frame.to_string(index=False))
    cfg = _cfg_from_args(args)
    if args.out:
        report.write_csv(
            args.out, _config_header(cfg, K=args.K, window=args.window, step=args.step)
        )
    if args.emit_plot:
        _plot_rolling(report, args.emit_plot)
    return EXIT_OK


def _cmd_simulate(args) -> int:
    with open(args.config) as fh:
        spec = json.load(fh)
    design, tests, grid, replications, b, seed, cfg = _parse_design(spec)
    rows = []
    failures = 0
    for a in grid:
        scenario = (
            AlphaScenario(spec.get("scenario", "null"))
            if spec.get("scenario", "null") == "null"
            else AlphaScenario(spec["scenario"], a=a, k=spec.get("k"))
        )
        report = run_experiment(
            ExperimentDesign(
                name=design.name,
                n=design.n,
                t=design.t,
                covariance=design.covariance,
                errors=design.errors,
                alpha=scenario,
            ),
            tests,
            replications,
            b,
            seed,
            cfg=cfg,
            workers=args.workers,
        )
        failures += report.failures
        rows.extend(report.rows)
    for row in rows:
        a_str = "null" if row.a is None else f"a={row.a:g}"
        print(f"{row.test_name:>6}  {a_str:>8}  rate={row.rejection_rate:.4f}")
    if args.out:
        from .mclab import RejectionReport

        RejectionReport(tuple(rows), failures, replications).write_csv(
            args.out,
            _config_header(cfg, design=design.name, replications=replications, B=b),
        )
    if args.emit_plot:
        _plot_power(rows, args.emit_plot)
    return EXIT_OK


def _parse_design(spec: dict):
    covariance = CovarianceSpec(
        case=spec.get("design", "case1"),
        delta_gamma=float(spec.get("delta_gamma", 0.25)),
        ar1_rho=float(spec.get("ar1_rho", 0.6)),
        rho_eps=float(spec.get("rho_eps", 0.5)),
    )
    errors = ErrorSpec(
        family=spec.get("errors", "gaussian"),
        innovation=spec.get("innovation", "normal"),
    )
    design = ExperimentDesign(
        name=spec.get("name", spec.get("design", "case1")),
        n=int(spec["N"]),
        t=int(spec["T"]),
        covariance=covariance,
        errors=errors,
    )
    tests = tuple(spec.get("tests", list(DEFAULT_TESTS)))
    a_values = spec.get("a", 0.0)
    grid = [float(v) for v in (a_values if isinstance(a_values, list) else [a_values])]
    replications = int(spec.get("replications", 500))
    b = int(spec.get("B", 300))
    seed = int(spec.get("seed", 0))
    cfg = TestConfig(
        screening_c=float(spec.get("C", 1.0)),
        rho=spec.get("rho"),
        b=b,
        level=float(spec.get("level", 0.05)),
        seed=seed,
    )
    return design, tests, grid, replications, b, seed, cfg


def _cmd_mimic(args) -> int:
    manifest = DataSetManifest(args.returns, args.factors, args.riskfree, args.date_column)
    panel = ingest(manifest)
    cfg = _cfg_from_args(args)
    report = mimic_study(
        panel,
        args.mode,
        args.replications,
        args.B,
        args.seed,
        cfg=cfg,
        workers=args.workers,
    )
    for row in report.rows:
        print(f"{row.test_name:>6}  rate={row.rejection_rate:.4f}")
    if args.out:
        report.write_csv(
            args.out,
            _config_header(cfg, mode=args.mode, replications=args.replications),
        )
    return EXIT_OK


def _plot_power(rows, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(7, 4.5))
    by_test: dict = {}
    for row in rows:
        by_test.setdefault(row.test_name, []).append((row.a or 0.0, row.rejection_rate))
    for name, pts in by_test.items():
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], marker="o", label=name)
    ax.set_xlabel("signal strength a")
    ax.set_ylabel("rejection rate")
    ax.set_ylim(0, 1)
    ax.legend()
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def _plot_rolling(report, path: str) -> None:
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    frame = report.to_frame()
    fig, ax = plt.subplots(figsize=(8, 4.5))
    xs = range(len(frame))
    for col in report.columns:
        ax.plot(xs, frame[col], marker=".", label=col)
    ax.set_xticks(list(xs))
    ax.set_xticklabels(frame["window_end"], rotation=45, ha="right", fontsize=7)
    ax.set_ylabel("p-value")
    ax.axhline(0.05, color="grey", lw=0.8, ls="--")
    ax.legend(ncol=4, fontsize=8)
    fig.tight_layout()
    fig.savefig(path, format="svg")
    plt.close(fig)


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else EXIT_USAGE
    handlers = {
        "test": _cmd_test,
        "rolling": _cmd_rolling,
        "simulate": _cmd_simulate,
        "mimic": _cmd_mimic,
    }
    try:
        return handlers[args.command](args)
    except (AlphaTestError, OSError, json.JSONDecodeError, KeyError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
