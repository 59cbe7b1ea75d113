import inspect

import click
import numpy as np

from gilevel.core.cli import cli, parse_config_args
from gilevel.core.component import component, configure
from gilevel.core.utils import (
    ConfigurationError,
    convert_to_snake_case,
    read_config_file,
)
from gilevel.errors import GilevelError

# Failures while running a task are reported as a message and exit status 1.
# Failures while configuring it are usage errors with exit status 2.
RUNTIME_ERRORS = (
    GilevelError,
    ConfigurationError,
    OSError,
    ValueError,
    TypeError,
    np.linalg.LinAlgError,
)
CONFIGURATION_ERRORS = (ConfigurationError, ValueError, TypeError)


def _resolve_key(cls, key):
    """Map a command-line key onto a field of `cls`.

    Exact names win. Otherwise a top-level key matches a field named in the
    class's `ALIASES` or, ignoring case, a single field (`n` for `N`).
    """
    fields = cls.__component_fields__
    if key in fields or "." in key:
        return key
    aliases = getattr(cls, "ALIASES", {})
    if key in aliases:
        return aliases[key]
    matches = [name for name in fields if name.lower() == key.lower()]
    return matches[0] if len(matches) == 1 else key


def _merge_config(cls, config_file, config):
    merged = {}
    if config_file is not None:
        merged.update(read_config_file(config_file))
    # Command-line values win over the file.
    merged.update({_resolve_key(cls, k): v for k, v in config})
    return merged


def task(cls):
    """Turn a class into a gilevel task: a component with an argument-less `run`
    method, exposed as a CLI command named after the class.

    The command accepts `key=value` arguments, `--key value` options and
    `--flag`/`--no-flag` for booleans, optionally preceded by `-c FILE` with one
    `key=value` per line.
    The task is instantiated, configured and run.
    """
    cls = component(cls)

    if not (hasattr(cls, "run") and callable(cls.run)):
        raise TypeError("Classes decorated with @task must define a `run` method.")

    call_args = inspect.signature(cls.run).parameters
    if len(call_args) > 1 or len(call_args) == 1 and "self" not in call_args:
        raise TypeError(
            "A @task class must define a `run` method taking no arguments except "
            f"`self`, but `{cls.__name__}.run` accepts arguments "
            f"{tuple(name for name in call_args)}."
        )

    if convert_to_snake_case(cls.__name__) in (
        convert_to_snake_case(c) for c in cli.commands
    ):
        raise ValueError(
            f"Task naming conflict. Task with name '{cls.__name__}' (or similar) "
            "already registered. The task name is the name of the decorated class."
        )

    @cli.command(
        cls.__name__,
        help=inspect.getdoc(cls),
        context_settings=dict(ignore_unknown_options=True),
    )
    @click.option(
        "-c",
        "--config-file",
        type=click.Path(exists=True, dir_okay=False),
        default=None,
        help="Read `key=value` lines from a file, e.g. an earlier report header.",
    )
    @click.argument("config", type=click.UNPROCESSED, nargs=-1)
    def command(config, config_file):
        config = parse_config_args(config)
        try:
            task_instance = cls()
            configure(task_instance, _merge_config(cls, config_file, config))
            # Field types are checked on access.
            dict(task_instance)
        except CONFIGURATION_ERRORS as e:
            raise click.UsageError(str(e)) from e
        try:
            task_instance.run()
        except click.ClickException:
            raise
        except RUNTIME_ERRORS as e:
            raise click.ClickException(f"{type(e).__name__}: {e}") from e

    return cls
