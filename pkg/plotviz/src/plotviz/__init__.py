"""Paper-style figures from precoder-optimization result CSVs."""

from plotviz.render import PlotSpec, RenderInfo, SchemaError, SelectionError, render

__version__ = "0.1.0"

__all__ = ["PlotSpec", "RenderInfo", "SchemaError", "SelectionError", "render"]
