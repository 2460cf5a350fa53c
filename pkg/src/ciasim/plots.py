"""Series extraction and figure rendering for experiment reports.

``collect_series`` turns report lists into plain x/y/err series keyed by
experiment and series name; ``render_figures`` draws one PNG per experiment
from the same series, so the plot data files and the figures always agree.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

__all__ = ["Series", "collect_series", "render_figures"]


@dataclass
class Series:
    x: np.ndarray
    y: np.ndarray
    err: np.ndarray


_AXIS_LABELS = {
    "theta_map": ("input subspace dimension theta", "secondary tier SE [bit/s/Hz]"),
    "se_vs_snr": ("SNR [dB]", "secondary tier SE [bit/s/Hz]"),
    "eta_vs_tau": ("tau / T", "fraction of perfect-CSI SE"),
    "percent_increase": ("SNR [dB]", "percent increase over single tier [%]"),
    "custom": ("SNR [dB]", "secondary tier SE [bit/s/Hz]"),
}


def _sorted(points):
    points.sort(key=lambda p: p[0])
    xs, ys, errs = zip(*points)
    return Series(np.array(xs), np.array(ys), np.array(errs))


def _ratio_series(rows, baseline, attr_mean, attr_err):
    """eta points: ratio of means with a first-order error propagation."""
    base_mean = getattr(baseline, attr_mean)
    base_err = getattr(baseline, attr_err)
    points = []
    for r in rows:
        mean = getattr(r, attr_mean)
        err = getattr(r, attr_err)
        eta = mean / base_mean
        rel = np.hypot(err / mean if mean else 0.0, base_err / base_mean)
        points.append((r.tau_over_t, eta, eta * rel))
    return _sorted(points)


def collect_series(reports) -> dict:
    """{experiment: {series_name: Series}} with x chosen per experiment."""
    grouped: dict = {}
    for r in reports:
        grouped.setdefault(r.experiment, []).append(r)
    out: dict = {}
    for experiment, rows in grouped.items():
        series: dict = {}
        if experiment == "theta_map":
            keys = {(r.scheme, r.k) for r in rows}
            for scheme, k in sorted(keys):
                pts = [
                    (r.theta, r.secondary_se_mean, r.secondary_se_stderr)
                    for r in rows
                    if (r.scheme, r.k) == (scheme, k)
                ]
                series[f"{scheme}_K{k}"] = _sorted(pts)
        elif experiment == "eta_vs_tau":
            keys = {(r.scheme, r.k) for r in rows}
            for scheme, k in sorted(keys):
                group = [r for r in rows if (r.scheme, r.k) == (scheme, k)]
                baseline = [r for r in group if r.tau_over_t == 0.0]
                imperfect = [r for r in group if r.tau_over_t > 0.0]
                if not baseline or not imperfect:
                    continue
                series[f"{scheme}_K{k}_eta_p"] = _ratio_series(
                    imperfect, baseline[0], "primary_se_mean", "primary_se_stderr"
                )
                series[f"{scheme}_K{k}_eta_s"] = _ratio_series(
                    imperfect, baseline[0], "secondary_se_mean", "secondary_se_stderr"
                )
        elif experiment == "percent_increase":
            keys = {(r.scheme, r.k, r.alpha) for r in rows}
            for scheme, k, alpha in sorted(keys):
                pts = [
                    (
                        r.snr_db,
                        r.percent_increase_mean,
                        r._stderr(r.percent_increase),
                    )
                    for r in rows
                    if (r.scheme, r.k, r.alpha) == (scheme, k, alpha)
                    and r.percent_increase is not None
                ]
                if pts:
                    series[f"{scheme}_K{k}_alpha{alpha:g}"] = _sorted(pts)
        else:  # se_vs_snr and custom share the SNR axis
            keys = {(r.scheme, r.k) for r in rows}
            for scheme, k in sorted(keys):
                pts = [
                    (r.snr_db, r.secondary_se_mean, r.secondary_se_stderr)
                    for r in rows
                    if (r.scheme, r.k) == (scheme, k)
                ]
                series[f"{scheme}_K{k}"] = _sorted(pts)
        out[experiment] = series
    return out


def render_figures(reports, fig_dir) -> list:
    """One PNG per experiment, errorbar line per series."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    fig_dir = Path(fig_dir)
    fig_dir.mkdir(parents=True, exist_ok=True)
    paths = []
    for experiment, series in collect_series(reports).items():
        if not series:
            continue
        fig, ax = plt.subplots(figsize=(7, 4.5))
        for name, pts in sorted(series.items()):
            ax.errorbar(pts.x, pts.y, yerr=pts.err, marker="o", capsize=2, label=name)
        xlabel, ylabel = _AXIS_LABELS.get(experiment, ("x", "y"))
        ax.set_xlabel(xlabel)
        ax.set_ylabel(ylabel)
        ax.set_title(experiment.replace("_", " "))
        ax.grid(True, alpha=0.3)
        ax.legend(fontsize=8)
        fig.tight_layout()
        path = fig_dir / f"{experiment}.png"
        fig.savefig(path, dpi=150)
        plt.close(fig)
        paths.append(path)
    return paths
