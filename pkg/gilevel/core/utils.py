import inspect
import os
import re
from ast import literal_eval
from typing import Any, Dict, Iterator, Type

import click
import numpy as np
import typeguard


# Sentinel for fields without a default.
class Missing:
    def __repr__(self):
        return "<missing>"


missing = Missing()


class ConfigurationError(Exception):
    pass


def warn(message: str) -> None:
    click.secho(f"WARNING: {message}", fg="yellow", err=True)


def info(message: str, quiet: bool = False) -> None:
    if not quiet:
        click.echo(message, err=True)


def is_component_class(cls: Type) -> bool:
    try:
        return inspect.isclass(cls) and "__component_name__" in cls.__dict__
    except AttributeError:
        return False


def is_component_instance(instance: Any) -> bool:
    return is_component_class(instance.__class__)


def generate_subclasses(cls: Type) -> Iterator[Type]:
    """Recursively yield `cls` and all of its subclasses."""

    if not inspect.isclass(cls):
        return
    yield cls
    for s in cls.__subclasses__():
        yield from generate_subclasses(s)


def generate_component_subclasses(cls: Type) -> Iterator[Type]:
    """Yield the concrete component classes that satisfy type `cls`."""

    for subclass in generate_subclasses(cls):
        if is_component_class(subclass) and not inspect.isabstract(subclass):
            yield subclass


def generate_component_ancestors_with_field(
    instance: Any, field_name, include_instance: bool = False
) -> Iterator[Any]:
    """Yield, closest first, each ancestor component that declares `field_name`."""
    parent = instance if include_instance else instance.__component_parent__
    while parent is not None:
        if field_name in parent.__component_fields__:
            yield parent
        parent = parent.__component_parent__


def type_check(value, expected_type) -> bool:
    """Check that `value` satisfies `expected_type`."""
    try:
        # An empty argument name; the caller builds its own message.
        typeguard.check_type("", value, expected_type)
    except TypeError:
        return False
    return True


def is_immutable(value: Any) -> bool:
    """Whether `value` can be shared safely as a field default.

    Tuples are inspected one level deep.
    """
    scalar_types = (int, float, bool, str, frozenset)
    return (
        value is None
        or isinstance(value, scalar_types)
        or (
            isinstance(value, tuple)
            and all(v is None or isinstance(v, scalar_types) for v in value)
        )
    )


def type_name_str(type) -> str:
    try:
        if hasattr(type, "__qualname__"):
            return str(type.__qualname__)
        if hasattr(type, "__name__"):
            return str(type.__name__)
        return str(type)
    except Exception:
        return "<unknown type>"


def convert_to_snake_case(name: str) -> str:
    s = re.sub("(.)([A-Z][a-z]+)", r"\1_\2", name)
    s = re.sub("([a-z0-9])([A-Z])", r"\1_\2", s)
    return re.sub(r"__+", "_", s).lower()


def parse_value_from_string(string: str) -> Any:
    """Parse a command-line or config-file value.

    Python literals (numbers, `None`, booleans, tuples, nested lists) are
    evaluated; anything else, such as a path or a component class name, is kept
    as a string. `0.9,0.9` therefore parses as the tuple `(0.9, 0.9)`.
    """
    try:
        value = literal_eval(string)
    except (ValueError, SyntaxError):
        value = str(string)
    except Exception:
        raise ValueError(f"Could not parse '{string}'.")
    return value


def format_config_value(value: Any) -> str:
    """Inverse of `parse_value_from_string` for echoed configuration."""
    if isinstance(value, np.ndarray):
        return repr(value.tolist())
    if isinstance(value, np.generic):
        return repr(value.item())
    if isinstance(value, str):
        return value
    return repr(value)


def read_config_file(path: str) -> Dict[str, Any]:
    """Read flat `key=value` lines.

    A leading `#` is stripped so that the header echoed at the top of a report
    can be fed back unchanged. Lines without `=` are ignored.
    """
    config = {}
    with open(path, "r") as f:
        for raw_line in f:
            line = raw_line.strip().lstrip("#").strip()
            if "=" not in line:
                continue
            key, value = line.split("=", 1)
            key = key.strip()
            if not re.match("^[\\w.]+$", key):
                continue
            config[key] = parse_value_from_string(value.strip())
    return config


def default_seed() -> int:
    """The `GILEVEL_SEED` environment variable, or 0."""
    value = os.environ.get("GILEVEL_SEED", "0")
    try:
        return int(value)
    except ValueError:
        raise ConfigurationError(
            f"GILEVEL_SEED must be an integer; got '{value}'."
        ) from None
