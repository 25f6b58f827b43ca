"""Command-line driver: run experiments, reproduce the paper-style figure
grids, and render reports from result directories.

Config files are flat TOML; --set key=value overrides win over file
values.  Exit codes: 0 ok, 2 config error, 3 runtime abort, 4 refused
overwrite of existing results.
"""

from __future__ import annotations

import argparse
import os
import sys
from dataclasses import asdict

import tomli

from .policy import InvariantViolation
from .sim import ExperimentConfig, run_experiment, write_results

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3
EXIT_OVERWRITE = 4

OUT_DIR_ENV = "SYNCUCB_OUT"

# config-file key -> ExperimentConfig field
_KEY_MAP = {
    "horizon": "horizon",
    "runs": "runs",
    "variants": "variants",
    "gamma_list": "gamma_list",
    "sigma_list": "sigma_list",
    "lambda": "lam",
    "lambda_n": "lam_n",
    "reward_noise_sd": "reward_noise_sd",
    "master_seed": "master_seed",
    "tie_break": "tie_break",
    "update_target": "update_target",
}
_FIELD_TO_KEY = {v: k for k, v in _KEY_MAP.items()}

FIGURE_PRESETS = {
    "fig2": dict(
        variants=("naive", "sync_post"),
        gamma_list=(1.0, 10.0, 25.0, 50.0),
        sigma_list=(0.1, 0.2),
        runs=400,
        horizon=2000,
    ),
    "fig3": dict(
        variants=("naive", "sync_post", "sync_pre"),
        gamma_list=(50.0,),
        sigma_list=(0.2,),
        runs=400,
        horizon=2000,
    ),
}


class ConfigError(ValueError):
    pass


def _parse_override(item: str) -> tuple[str, object]:
    if "=" not in item:
        raise ConfigError(f"override {item!r} is not of the form key=value")
    key, raw = item.split("=", 1)
    key = key.strip()
    try:
        value = tomli.loads(f"v = {raw}")["v"]
    except tomli.TOMLDecodeError:
        value = raw.strip()  # bare string, e.g. tie_break=lowest_index
    return key, value


def parse_config(path: str | None, overrides: list[str] = ()) -> ExperimentConfig:
    """Resolve a config file plus key=value overrides into an
    ExperimentConfig; unknown keys or constraint violations raise
    ConfigError naming the offending key."""
    values: dict[str, object] = {}
    if path is not None:
        try:
            with open(path, "rb") as f:
                data = tomli.load(f)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except tomli.TOMLDecodeError as e:
            raise ConfigError(f"config file {path} is not valid TOML: {e}")
        values.update(data)
    for item in overrides:
        key, value = _parse_override(item)
        values[key] = value

    kwargs = {}
    for key, value in values.items():
        if key not in _KEY_MAP:
            raise ConfigError(f"unknown config key {key!r}")
        kwargs[_KEY_MAP[key]] = value
    try:
        return ExperimentConfig(**kwargs)
    except (TypeError, ValueError) as e:
        raise ConfigError(str(e))


def serialize_config(config: ExperimentConfig) -> str:
    """Config as flat TOML; parse_config(serialize_config(c)) == c."""
    lines = []
    for fieldname, value in asdict(config).items():
        key = _FIELD_TO_KEY[fieldname]
        if isinstance(value, str):
            lines.append(f'{key} = "{value}"')
        elif isinstance(value, tuple):
            items = ", ".join(f'"{v}"' if isinstance(v, str) else repr(v) for v in value)
            lines.append(f"{key} = [{items}]")
        else:
            lines.append(f"{key} = {value!r}")
    return "\n".join(lines) + "\n"


def _resolve_out(args) -> str:
    if args.out:
        return args.out
    env = os.environ.get(OUT_DIR_ENV)
    if env:
        return env
    raise ConfigError(f"no output directory: pass --out or set {OUT_DIR_ENV}")


def _summarize(agg) -> str:
    final = float(agg.mean_cum_regret[-1])
    hw = float(agg.ci_halfwidth[-1])
    return (
        f"{agg.variant} gamma={agg.gamma:g} sigma={agg.sigma:g}: "
        f"final regret {final:.3f} +/- {hw:.3f} ({agg.n_runs} runs)"
    )


def _execute(config: ExperimentConfig, out_dir: str, args, per_cell_dirs: bool = False) -> int:
    try:
        aggregates, records = run_experiment(
            config,
            keep_records=not args.no_runs_csv,
            n_jobs=args.jobs,
            progress=lambda agg: print(_summarize(agg)),
        )
    except InvariantViolation as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    try:
        write_results(aggregates, records, out_dir, config=config, force=args.force)
        if per_cell_dirs:
            for agg in aggregates:
                cell = os.path.join(
                    out_dir, f"{agg.variant}-g{agg.gamma:g}-s{agg.sigma:g}"
                )
                cell_records = [
                    r
                    for r in records
                    if (r.variant, r.gamma, r.sigma) == (agg.variant, agg.gamma, agg.sigma)
                ]
                write_results([agg], cell_records, cell, config=config, force=args.force)
    except FileExistsError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_OVERWRITE
    except OSError as e:
        print(f"error writing results to {out_dir}: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def cmd_run(args) -> int:
    try:
        config = parse_config(args.config, args.set or [])
        out_dir = _resolve_out(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return _execute(config, out_dir, args)


def cmd_sweep(args) -> int:
    """Like run, but additionally splits results into one subdirectory per
    (variant, gamma, sigma) grid cell."""
    try:
        config = parse_config(args.config, args.set or [])
        out_dir = _resolve_out(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return _execute(config, out_dir, args, per_cell_dirs=True)


def cmd_reproduce_figure(args) -> int:
    if args.figure not in FIGURE_PRESETS:
        print(
            f"config error: unknown figure {args.figure!r}; "
            f"valid ids: {', '.join(sorted(FIGURE_PRESETS))}",
            file=sys.stderr,
        )
        return EXIT_CONFIG
    try:
        kwargs = dict(FIGURE_PRESETS[args.figure])
        for item in args.set or []:
            key, value = _parse_override(item)
            if key not in _KEY_MAP:
                raise ConfigError(f"unknown config key {key!r}")
            kwargs[_KEY_MAP[key]] = value
        config = ExperimentConfig(**kwargs)
        out_dir = _resolve_out(args)
    except (ConfigError, ValueError) as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    return _execute(config, out_dir, args)


def cmd_report(args) -> int:
    try:
        import syncucb_plots
    except ImportError:
        print(
            "error: figure rendering requires the syncucb-plots package "
            "(pip install ./plots)",
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    csv_path = args.input
    if os.path.isdir(csv_path):
        csv_path = os.path.join(csv_path, "aggregates.csv")
    if not os.path.exists(csv_path):
        print(f"config error: no aggregates CSV at {csv_path}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        out_dir = _resolve_out(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        written = syncucb_plots.render(
            csv_path,
            out_dir,
            layout=args.layout,
            image_format=args.format,
            logy=args.logy,
        )
    except syncucb_plots.SeriesError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME
    for path in written:
        print(path)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="syncucb",
        description="Two-stage LinUCB regret simulations with posterior synchronization",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_common(p, needs_config):
        if needs_config:
            p.add_argument("--config", required=False, help="TOML experiment config")
        p.add_argument("--out", help=f"output directory (default: ${OUT_DIR_ENV})")
        p.add_argument("--set", action="append", metavar="KEY=VALUE", help="config override")
        p.add_argument("--force", action="store_true", help="overwrite existing results")
        p.add_argument("--jobs", type=int, default=1, help="parallel worker processes")
        p.add_argument(
            "--no-runs-csv",
            action="store_true",
            help="skip per-round run logs (runs.csv gets a header only)",
        )

    p_run = sub.add_parser("run", help="run the experiment described by a config file")
    add_common(p_run, needs_config=True)
    p_run.set_defaults(func=cmd_run)

    p_sweep = sub.add_parser("sweep", help="run a grid config with per-cell output dirs")
    add_common(p_sweep, needs_config=True)
    p_sweep.set_defaults(func=cmd_sweep)

    p_fig = sub.add_parser("reproduce-figure", help="run a figure preset (fig2, fig3)")
    p_fig.add_argument("figure", help="figure id: fig2 or fig3")
    add_common(p_fig, needs_config=False)
    p_fig.set_defaults(func=cmd_reproduce_figure)

    p_rep = sub.add_parser("report", help="render figures from an aggregates.csv")
    p_rep.add_argument("--input", required=True, help="results directory or aggregates.csv")
    p_rep.add_argument("--out", help=f"output directory (default: ${OUT_DIR_ENV})")
    p_rep.add_argument("--layout", choices=("grid", "overlay"), default="grid")
    p_rep.add_argument("--format", choices=("png", "svg"), default="png")
    p_rep.add_argument("--logy", action="store_true")
    p_rep.set_defaults(func=cmd_report)

    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
