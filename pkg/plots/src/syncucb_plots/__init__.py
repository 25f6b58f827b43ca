"""Regret-curve figure rendering for syncucb aggregate CSVs."""

from .figures import (
    FigureSpec,
    Series,
    SeriesError,
    load_aggregates,
    render,
    render_grid,
    render_overlay,
)

__version__ = "0.1.0"

__all__ = [
    "FigureSpec",
    "Series",
    "SeriesError",
    "load_aggregates",
    "render",
    "render_grid",
    "render_overlay",
    "__version__",
]
