"""Figure rendering from the harness's aggregates.csv.

Means and confidence bands are taken verbatim from the CSV; this module
does no statistics of its own.  SVG output is deterministic: identical
input renders to byte-identical files (hash salt pinned, timestamp
metadata suppressed).
"""

from __future__ import annotations

import csv
import os
from dataclasses import dataclass

import matplotlib
import numpy as np

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

EXPECTED_COLUMNS = [
    "variant",
    "gamma",
    "sigma",
    "t",
    "mean_cum_regret",
    "sd",
    "ci_halfwidth",
    "n_runs",
]

# fixed per-variant styling for cross-figure consistency
VARIANT_STYLE = {
    "naive": ("tab:red", "-"),
    "sync_post": ("tab:blue", "-"),
    "sync_pre": ("tab:green", "--"),
    "single_stage": ("tab:gray", ":"),
}
FALLBACK_STYLE = ("tab:purple", "-.")

LAYOUTS = ("grid", "overlay")
FORMATS = ("png", "svg")


class SeriesError(ValueError):
    """The CSV does not contain the series a figure needs."""


@dataclass
class Series:
    variant: str
    gamma: float
    sigma: float
    t: np.ndarray
    mean: np.ndarray
    halfwidth: np.ndarray


@dataclass
class FigureSpec:
    input_csv: str
    out_dir: str
    layout: str = "grid"
    image_format: str = "svg"
    logy: bool = False
    variants: tuple[str, ...] | None = None
    gammas: tuple[float, ...] | None = None
    sigmas: tuple[float, ...] | None = None

    def __post_init__(self):
        if self.layout not in LAYOUTS:
            raise ValueError(f"layout must be one of {LAYOUTS}, got {self.layout!r}")
        if self.image_format not in FORMATS:
            raise ValueError(
                f"image_format must be one of {FORMATS}, got {self.image_format!r}"
            )


def load_aggregates(path: str) -> dict[tuple[str, float, float], Series]:
    """Parse aggregates.csv into per-(variant, gamma, sigma) series."""
    rows: dict[tuple[str, float, float], list[tuple[float, float, float]]] = {}
    with open(path, newline="") as f:
        reader = csv.DictReader(f)
        if reader.fieldnames != EXPECTED_COLUMNS:
            raise SeriesError(
                f"{path}: unexpected columns {reader.fieldnames}, "
                f"expected {EXPECTED_COLUMNS}"
            )
        for row in reader:
            key = (row["variant"], float(row["gamma"]), float(row["sigma"]))
            rows.setdefault(key, []).append(
                (float(row["t"]), float(row["mean_cum_regret"]), float(row["ci_halfwidth"]))
            )
    series = {}
    for key, points in rows.items():
        points.sort()
        arr = np.array(points)
        series[key] = Series(key[0], key[1], key[2], arr[:, 0], arr[:, 1], arr[:, 2])
    return series


def _select(spec: FigureSpec, series):
    """Apply the spec's filters; raise naming any requested-but-absent series."""
    variants = spec.variants or tuple(sorted({k[0] for k in series}))
    gammas = spec.gammas or tuple(sorted({k[1] for k in series}))
    sigmas = spec.sigmas or tuple(sorted({k[2] for k in series}))
    missing = [
        (v, g, s)
        for s in sigmas
        for g in gammas
        for v in variants
        if (v, g, s) not in series
    ]
    if not series:
        raise SeriesError(f"{spec.input_csv}: 0 series matched")
    if missing:
        names = ", ".join(f"({v}, gamma={g:g}, sigma={s:g})" for v, g, s in missing)
        raise SeriesError(f"{spec.input_csv}: missing series {names}")
    return variants, gammas, sigmas


def _style(variant):
    return VARIANT_STYLE.get(variant, FALLBACK_STYLE)


def _plot_series(ax, s: Series, label: str):
    color, linestyle = _style(s.variant)
    ax.plot(s.t, s.mean, color=color, linestyle=linestyle, linewidth=1.2, label=label)
    if np.any(s.halfwidth > 0):
        ax.fill_between(
            s.t, s.mean - s.halfwidth, s.mean + s.halfwidth, color=color, alpha=0.2,
            linewidth=0,
        )


def _save(fig, spec: FigureSpec, stem: str) -> str:
    os.makedirs(spec.out_dir, exist_ok=True)
    path = os.path.join(spec.out_dir, f"{stem}.{spec.image_format}")
    with matplotlib.rc_context({"svg.hashsalt": "syncucb"}):
        fig.savefig(path, metadata={"Date": None} if spec.image_format == "svg" else None)
    plt.close(fig)
    return path


def render_grid(spec: FigureSpec) -> list[str]:
    """One panel per (sigma, gamma) pair, each overlaying all variants."""
    series = load_aggregates(spec.input_csv)
    variants, gammas, sigmas = _select(spec, series)
    n_rows, n_cols = len(sigmas), len(gammas)
    fig, axes = plt.subplots(
        n_rows, n_cols, figsize=(3.0 * n_cols, 2.6 * n_rows),
        sharex=True, squeeze=False,
    )
    for i, sigma in enumerate(sigmas):
        for j, gamma in enumerate(gammas):
            ax = axes[i][j]
            for variant in variants:
                key = (variant, gamma, sigma)
                if key in series:
                    _plot_series(ax, series[key], variant)
            ax.set_title(rf"$\gamma={gamma:g}$, $\sigma={sigma:g}$", fontsize=9)
            if spec.logy:
                ax.set_yscale("log")
            if i == n_rows - 1:
                ax.set_xlabel("round")
            if j == 0:
                ax.set_ylabel("mean cumulative regret")
    axes[0][0].legend(fontsize=8)
    fig.tight_layout()
    return [_save(fig, spec, "regret_grid")]


def render_overlay(spec: FigureSpec) -> list[str]:
    """Single panel overlaying every selected series."""
    series = load_aggregates(spec.input_csv)
    variants, gammas, sigmas = _select(spec, series)
    fig, ax = plt.subplots(figsize=(4.5, 3.2))
    multi_cell = len(gammas) > 1 or len(sigmas) > 1
    for sigma in sigmas:
        for gamma in gammas:
            for variant in variants:
                key = (variant, gamma, sigma)
                if key not in series:
                    continue
                label = variant
                if multi_cell:
                    label = rf"{variant} ($\gamma={gamma:g}$, $\sigma={sigma:g}$)"
                _plot_series(ax, series[key], label)
    ax.set_xlabel("round")
    ax.set_ylabel("mean cumulative regret")
    if spec.logy:
        ax.set_yscale("log")
    ax.legend(fontsize=8)
    fig.tight_layout()
    return [_save(fig, spec, "regret_overlay")]


def render(csv_path: str, out_dir: str, *, layout: str = "grid",
           image_format: str = "svg", logy: bool = False) -> list[str]:
    """Render the requested layout from a CSV; returns written file paths."""
    spec = FigureSpec(
        input_csv=csv_path, out_dir=out_dir, layout=layout,
        image_format=image_format, logy=logy,
    )
    if layout == "grid":
        return render_grid(spec)
    return render_overlay(spec)
