"""Command-line front end: config files, experiment dispatch and result files.

Configs are INI files (see README for the schema). Each run writes into a
fresh name-scoped subdirectory of ``--out`` containing one CSV per
experiment, whitespace-separated per-series plot data, and optionally
rendered figures; existing run directories are never touched.
"""

from __future__ import annotations

import argparse
import configparser
import sys
import traceback
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import plots
from .channel import CsiQuality
from .experiments import (
    CIA_A,
    CIA_B,
    SCHEME_SINGLE_TIER,
    SCHEME_TDMA,
    SystemConfig,
    ThetaMap,
    eta_vs_tau_experiment,
    optimal_theta_map,
    percent_increase_experiment,
    run_sweep,
    se_vs_snr_experiment,
)
from .ofdm import OfdmParams

__all__ = [
    "ConfigError",
    "RunManifest",
    "ExperimentOptions",
    "parse_config",
    "emit_report",
    "emit_plot_data",
    "main",
]

EXPERIMENTS = ("theta_map", "se_vs_snr", "eta_vs_tau", "percent_increase", "custom")

CSV_COLUMNS = (
    "scheme",
    "K",
    "theta",
    "snr_db",
    "alpha",
    "tau_over_T",
    "trials",
    "primary_se_mean",
    "primary_se_stderr",
    "secondary_se_mean",
    "secondary_se_stderr",
    "percent_increase",
)


class ConfigError(ValueError):
    """A configuration file or override violates the documented schema."""


@dataclass(frozen=True)
class RunManifest:
    """Everything one CLI invocation needs to reproduce itself."""

    experiment: str
    config_path: Path
    out_dir: Path
    seed: Optional[int] = None
    trials: Optional[int] = None
    overrides: tuple = ()
    plots: bool = False
    jobs: int = 1

    def __post_init__(self):
        if self.experiment not in EXPERIMENTS:
            raise ConfigError(f"unknown experiment {self.experiment!r}")


@dataclass
class ExperimentOptions:
    """Grid axes of the named experiments, from the [experiment] section."""

    k_values: tuple = (4, 8, 16)
    snr_grid_db: tuple = (0.0, 10.0, 20.0, 30.0)
    tau_fractions: tuple = (0.04, 0.08, 0.12, 0.16, 0.2, 0.3, 0.4, 0.5)
    alphas: tuple = (0.0, 1.0)
    tau_fraction: float = 0.12
    map_trials: Optional[int] = None
    schemes: tuple = (CIA_A, CIA_B, SCHEME_TDMA, SCHEME_SINGLE_TIER)


# --- schema ----------------------------------------------------------------


def _parse_int(text):
    return int(text)


def _parse_float(text):
    return float(text)


def _parse_bool(text):
    lowered = text.strip().lower()
    if lowered in ("true", "yes", "1", "on"):
        return True
    if lowered in ("false", "no", "0", "off"):
        return False
    raise ValueError(f"expected a boolean, got {text!r}")


def _parse_theta(text):
    if text.strip().lower() == "auto":
        return None
    return int(text)


def _list_of(item_parser):
    def parse(text):
        items = [part.strip() for part in text.split(",") if part.strip()]
        if not items:
            raise ValueError("expected a comma-separated list")
        return tuple(item_parser(item) for item in items)

    return parse


def _choice(*allowed):
    def parse(text):
        value = text.strip()
        if value not in allowed:
            raise ValueError(f"must be one of {allowed}, got {value!r}")
        return value

    return parse


_SCHEMA = {
    "ofdm": {
        "n_subcarriers": _parse_int,
        "cp_len": _parse_int,
        "channel_order": _parse_int,
        "n_mues": _parse_int,
    },
    "system": {
        "n_sbs": _parse_int,
        "strategy": _choice(CIA_A, CIA_B),
        "theta": _parse_theta,
        "alpha": _parse_float,
        "snr_db": _parse_float,
        "power_mode": _choice("UNIFORM_UNIT", "WATERFILL"),
        "sbs_budget": _parse_float,
        "trials": _parse_int,
        "master_seed": _parse_int,
        "snr_calibration": _choice("linear", "log"),
        "primary_effective_sinr": _parse_bool,
    },
    "csi": {
        "rho": _parse_float,
        "tau": _parse_float,
        "coherence_time": _parse_float,
    },
    "experiment": {
        "k_values": _list_of(_parse_int),
        "snr_grid_db": _list_of(_parse_float),
        "tau_fractions": _list_of(_parse_float),
        "alphas": _list_of(_parse_float),
        "tau_fraction": _parse_float,
        "map_trials": _parse_int,
        "schemes": _list_of(_choice(CIA_A, CIA_B, SCHEME_TDMA, SCHEME_SINGLE_TIER)),
    },
}

_REQUIRED = (("ofdm", "n_subcarriers"), ("ofdm", "cp_len"), ("ofdm", "n_mues"), ("system", "n_sbs"))


def _apply_override(values: dict, override: str):
    if "=" not in override:
        raise ConfigError(f"override {override!r} is not of the form key=value")
    key, _, raw = override.partition("=")
    key = key.strip()
    if "." in key:
        section, name = key.split(".", 1)
        if section not in _SCHEMA or name not in _SCHEMA[section]:
            raise ConfigError(f"unknown override key {key!r}")
    else:
        matches = [s for s in _SCHEMA if key in _SCHEMA[s]]
        if not matches:
            raise ConfigError(f"unknown override key {key!r}")
        section, name = matches[0], key
    try:
        values.setdefault(section, {})[name] = _SCHEMA[section][name](raw.strip())
    except ValueError as exc:
        raise ConfigError(f"override {key}: {exc}") from exc


def parse_config(path, overrides=()) -> tuple[SystemConfig, ExperimentOptions]:
    """Load and validate a config file, then apply key=value overrides.

    Every module invariant is checked here so a bad scenario fails at load
    time with the offending key named. Unknown sections or keys are rejected.
    """
    path = Path(path)
    parser = configparser.ConfigParser(inline_comment_prefixes=("#", ";"))
    parser.optionxform = str
    with open(path) as handle:
        parser.read_file(handle)

    values: dict = {}
    for section in parser.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"unknown section [{section}]")
        for key, raw in parser.items(section):
            if key not in _SCHEMA[section]:
                raise ConfigError(f"unknown key {key!r} in section [{section}]")
            try:
                values.setdefault(section, {})[key] = _SCHEMA[section][key](raw)
            except ValueError as exc:
                raise ConfigError(f"[{section}] {key}: {exc}") from exc
    for override in overrides:
        _apply_override(values, override)

    for section, key in _REQUIRED:
        if key not in values.get(section, {}):
            raise ConfigError(f"missing required key {key!r} in section [{section}]")

    ofdm_vals = dict(values.get("ofdm", {}))
    ofdm_vals.setdefault("channel_order", ofdm_vals["cp_len"])
    system_vals = dict(values.get("system", {}))
    theta = system_vals.pop("theta", None)

    csi = None
    if "csi" in values:
        csi_vals = dict(values["csi"])
        coherence = csi_vals.setdefault("coherence_time", 1000.0)
        csi_vals.setdefault("rho", 1.0)
        csi_vals.setdefault("tau", 0.12 * coherence)
        try:
            csi = CsiQuality(**csi_vals)
        except ValueError as exc:
            raise ConfigError(f"[csi]: {exc}") from exc

    try:
        params = OfdmParams(**ofdm_vals)
        config = SystemConfig(
            ofdm=params, csi=csi, theta_override=theta, **system_vals
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc

    options = ExperimentOptions(**values.get("experiment", {}))
    return config, options


# --- output ----------------------------------------------------------------


def _fmt(value) -> str:
    if value is None:
        return ""
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return f"{value:.6g}"


def emit_report(reports, out_dir) -> list:
    """Write one CSV per experiment with the fixed column order; returns the
    written paths. Refuses an empty report list."""
    if not reports:
        raise ValueError("no reports to emit")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    by_experiment: dict = {}
    for report in reports:
        by_experiment.setdefault(report.experiment, []).append(report)
    for experiment, rows in by_experiment.items():
        path = out_dir / f"{experiment}.csv"
        lines = [",".join(CSV_COLUMNS)]
        for r in rows:
            pct = r.percent_increase_mean
            lines.append(
                ",".join(
                    [
                        r.scheme,
                        str(r.k),
                        _fmt(r.theta),
                        _fmt(r.snr_db),
                        _fmt(r.alpha),
                        _fmt(r.tau_over_t),
                        str(r.trials),
                        _fmt(r.primary_se_mean),
                        _fmt(r.primary_se_stderr),
                        _fmt(r.secondary_se_mean),
                        _fmt(r.secondary_se_stderr),
                        _fmt(pct),
                    ]
                )
            )
        path.write_text("\n".join(lines) + "\n")
        paths.append(path)
    return paths


def emit_plot_data(reports, out_dir) -> list:
    """Write whitespace-separated x/y/err series, one file per scheme/K
    series, grouped under ``plotdata/``."""
    if not reports:
        raise ValueError("no reports to emit")
    data_dir = Path(out_dir) / "plotdata"
    data_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for experiment, series in plots.collect_series(reports).items():
        for name, pts in series.items():
            path = data_dir / f"{experiment}__{name}.dat"
            lines = [f"# {experiment} {name}", "# x y err"]
            for x, y, err in zip(pts.x, pts.y, pts.err):
                lines.append(f"{_fmt(x)} {_fmt(y)} {_fmt(err)}")
            path.write_text("\n".join(lines) + "\n")
            paths.append(path)
    return paths


def _fresh_run_dir(base: Path, experiment: str) -> Path:
    base = Path(base)
    candidate = base / experiment
    counter = 1
    while candidate.exists():
        counter += 1
        candidate = base / f"{experiment}-{counter}"
    candidate.mkdir(parents=True)
    return candidate


# --- experiment dispatch ----------------------------------------------------


def _theta_argument(config: SystemConfig, options: ExperimentOptions, strategy: str, jobs: int):
    """Override if given, else the offline Monte Carlo map for ``strategy``."""
    if config.theta_override is not None:
        return config.theta_override
    map_config = config.with_fields(strategy=strategy)
    trials = options.map_trials or config.trials
    print(f"computing theta map for {strategy} over K={list(options.k_values)} "
          f"({trials} trials/point)")
    theta_map, _ = optimal_theta_map(map_config, options.k_values, trials=trials, jobs=jobs)
    print(f"theta map ({strategy}): {theta_map.entries}")
    return theta_map


def _run_experiment(manifest: RunManifest, config: SystemConfig, options: ExperimentOptions):
    jobs = manifest.jobs
    failures: list = []
    if manifest.experiment == "theta_map":
        theta_map, reports = optimal_theta_map(
            config,
            options.k_values,
            trials=options.map_trials or config.trials,
            jobs=jobs,
        )
        print(f"theta map ({config.strategy}): {theta_map.entries}")
    elif manifest.experiment == "se_vs_snr":
        schemes = tuple(s for s in options.schemes if s != SCHEME_SINGLE_TIER)
        theta_a = _theta_argument(config, options, CIA_A, jobs) if CIA_A in schemes else None
        theta_b = _theta_argument(config, options, CIA_B, jobs) if CIA_B in schemes else None
        reports = se_vs_snr_experiment(
            config,
            options.k_values,
            options.snr_grid_db,
            theta_a=theta_a,
            theta_b=theta_b,
            jobs=jobs,
            schemes=schemes,
        )
    elif manifest.experiment == "eta_vs_tau":
        theta = _theta_argument(config, options, config.strategy, jobs)
        reports = eta_vs_tau_experiment(
            config, options.k_values, options.tau_fractions, theta=theta, jobs=jobs
        )
    elif manifest.experiment == "percent_increase":
        # the offline subspace map reflects the interference environment, so
        # each alpha uses a map computed at that alpha
        reports = []
        for alpha in options.alphas:
            acfg = config.with_fields(alpha=float(alpha))
            theta = _theta_argument(acfg, options, config.strategy, jobs)
            reports.extend(
                percent_increase_experiment(
                    acfg,
                    options.k_values,
                    [alpha],
                    options.snr_grid_db,
                    options.tau_fraction,
                    theta=theta,
                    jobs=jobs,
                )
            )
    else:  # custom
        reports, failures = run_sweep(
            [config], schemes=options.schemes, jobs=jobs, experiment="custom"
        )
    return reports, failures


def main(argv=None) -> int:
    parser = argparse.ArgumentParser(
        prog="ciasim",
        description="Two-tier OFDMA spectral-efficiency experiments with "
        "null-space cascaded precoding in the second tier.",
    )
    parser.add_argument("--config", required=True, help="INI scenario file")
    parser.add_argument("--experiment", required=True, choices=EXPERIMENTS)
    parser.add_argument("--out", required=True, help="output root directory")
    parser.add_argument("--seed", type=int, default=None, help="override master_seed")
    parser.add_argument("--trials", type=int, default=None, help="override trial count")
    parser.add_argument(
        "--set",
        dest="overrides",
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="override any config key (repeatable), e.g. --set snr_db=10",
    )
    parser.add_argument("--plots", action="store_true", help="render PNG figures")
    parser.add_argument("--jobs", type=int, default=1, help="parallel trial workers")
    args = parser.parse_args(argv)

    try:
        manifest = RunManifest(
            experiment=args.experiment,
            config_path=Path(args.config),
            out_dir=Path(args.out),
            seed=args.seed,
            trials=args.trials,
            overrides=tuple(args.overrides),
            plots=args.plots,
            jobs=max(1, args.jobs),
        )
        config, options = parse_config(manifest.config_path, manifest.overrides)
        if manifest.seed is not None:
            config = config.with_fields(master_seed=manifest.seed)
        if manifest.trials is not None:
            config = config.with_fields(trials=manifest.trials)
    except (ConfigError, OSError, ValueError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1

    try:
        run_dir = _fresh_run_dir(manifest.out_dir, manifest.experiment)
        print(f"writing results to {run_dir}")
        reports, failures = _run_experiment(manifest, config, options)
        csv_paths = emit_report(reports, run_dir)
        data_paths = emit_plot_data(reports, run_dir)
        for path in csv_paths:
            print(f"wrote {path}")
        print(f"wrote {len(data_paths)} plot-data series under {run_dir / 'plotdata'}")
        if manifest.plots:
            fig_paths = plots.render_figures(reports, run_dir / "figures")
            for path in fig_paths:
                print(f"wrote {path}")
    except Exception:
        traceback.print_exc()
        return 2

    if failures:
        for failure in failures:
            print(f"grid point {failure['grid_index']} failed: {failure['error']}",
                  file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    sys.exit(main())
