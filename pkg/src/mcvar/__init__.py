"""Sparse multi-class vector autoregression with cross-class fusion."""
from .estimate import FitOptions, FitResult, fit_ls, fit_multiclass, fit_singleclass
from .jgl import AdmmOptions, jgl_fit
from .panel import (
    CoefficientSet,
    MultiClassPanel,
    PanelSpec,
    PrecisionSet,
    StackedDesign,
    build_stacked,
    center_panel,
    residuals,
    var_stability,
)
from .spg import SpgOptions, spg_fit
from .tuning import RegularizationGrid

__version__ = "0.1.0"

__all__ = [
    "AdmmOptions",
    "CoefficientSet",
    "FitOptions",
    "FitResult",
    "MultiClassPanel",
    "PanelSpec",
    "PrecisionSet",
    "RegularizationGrid",
    "SpgOptions",
    "StackedDesign",
    "build_stacked",
    "center_panel",
    "fit_ls",
    "fit_multiclass",
    "fit_singleclass",
    "jgl_fit",
    "residuals",
    "spg_fit",
    "var_stability",
]
