"""Read-only figure rendering for the fractal-scattering CSV artifacts."""

from .csvio import PlotDataError, read_columns, to_floats
from .plots import (
    PlotSpec,
    RenderResult,
    annotation_value,
    fitted_ratio_from_csv,
    load_field_grid,
    plot_convergence,
    plot_farfield,
    plot_field,
    render,
)

__version__ = "1.0.0"

__all__ = [
    "PlotDataError",
    "PlotSpec",
    "RenderResult",
    "annotation_value",
    "fitted_ratio_from_csv",
    "load_field_grid",
    "plot_convergence",
    "plot_farfield",
    "plot_field",
    "read_columns",
    "render",
    "to_floats",
    "__version__",
]
