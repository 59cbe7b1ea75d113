from gilevel.core.cli import cli
from gilevel.core.component import component, configure
from gilevel.core.field import ComponentField, Field
from gilevel.core.task import task

__all__ = [
    "component",
    "ComponentField",
    "configure",
    "cli",
    "Field",
    "task",
]
