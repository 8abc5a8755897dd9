"""Numerical workbench for curved-space geodesics, bitensors and multi-event wave fields."""

from .charts import MetricChart, get_chart
from .errors import WorkbenchError
from .geodesics import Geodesic, SearchConfig, connect
from .wavefield import GridSpec, LagrangianParams, WaveField

__all__ = [
    "Geodesic",
    "GridSpec",
    "LagrangianParams",
    "MetricChart",
    "SearchConfig",
    "WaveField",
    "WorkbenchError",
    "connect",
    "get_chart",
]
__version__ = "0.1.0"
