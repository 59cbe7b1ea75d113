from gilevel.core import ComponentField, Field, cli, component, configure, task
from gilevel.stats.filter import filter_init, filter_step, run_filter
from gilevel.stats.model import DiscountW, EstimatedW, FixedW, ModelConfig

try:
    from importlib import metadata  # type: ignore
except ImportError:
    # Running on pre-3.8 Python; use importlib-metadata package
    import importlib_metadata as metadata  # type: ignore

__version__ = metadata.version("gilevel")

__all__ = [
    "cli",
    "ComponentField",
    "component",
    "configure",
    "DiscountW",
    "EstimatedW",
    "Field",
    "filter_init",
    "filter_step",
    "FixedW",
    "ModelConfig",
    "run_filter",
    "task",
]
