"""Figure rendering for federation simulator result files."""

from .figures import FigureSpec, SchemaError, curve_data, render, rolling_mean

__version__ = "0.1.0"

__all__ = ["FigureSpec", "SchemaError", "curve_data", "render", "rolling_mean"]
