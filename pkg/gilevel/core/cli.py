import re

import click

from gilevel.core.utils import convert_to_snake_case, parse_value_from_string

_KEY = "[\\w.]+"


class ConfigParam(click.ParamType):
    """A `key=value` configuration argument, or `--key` / `--no-key` for
    boolean fields."""

    name = "key=value"

    def convert(self, str_value, param, ctx):
        if re.match(f"^--no-{_KEY}$", str_value):
            return str_value[5:], False
        if re.match(f"^--{_KEY}$", str_value):
            return str_value[2:], True

        key, sep, value = str_value.partition("=")
        if not sep or not re.match(f"^{_KEY}$", key):
            self.fail(
                "configuration parameters must be of the form 'key=value', where "
                "the key contains only alpha-numeric characters, '_', and '.'. "
                f"Received '{str_value}'.",
                param,
                ctx,
            )

        try:
            return key, parse_value_from_string(value)
        except ValueError:
            self.fail(
                f"unable to parse value of configuration parameter {str_value}. "
                "Values must be numbers, booleans, `None`, strings, or "
                "lists/tuples of these.",
                param,
                ctx,
            )


_OPTION = re.compile(r"^--(no-)?([\w.-]+?)(?:=(.*))?$", re.S)
_ASSIGNMENT = re.compile(f"^{_KEY}=")


def _takes_value(token):
    return not token.startswith("--") and not _ASSIGNMENT.match(token)


def parse_config_args(tokens):
    """Turn raw command-line tokens into `(key, value)` pairs.

    Besides `key=value`, options are accepted as `--key value`, `--key=value`,
    `--flag` (True) and `--no-flag` (False). Hyphens in option names become
    underscores, so `--w-file` sets `w_file`. A bare `--key` is a flag when the
    next token is another option or a `key=value` assignment.
    """
    param = ConfigParam()
    tokens = list(tokens)
    pairs = []
    i = 0
    while i < len(tokens):
        token = tokens[i]
        i += 1
        match = _OPTION.match(token)
        if match is None:
            pairs.append(param.convert(token, None, None))
            continue
        negated, key, value = match.groups()
        key = key.replace("-", "_")
        if negated:
            if value is not None:
                param.fail(f"'{token}' cannot take a value.")
            pairs.append((key, False))
        elif value is not None:
            pairs.append(param.convert(f"{key}={value}", None, None))
        elif i < len(tokens) and _takes_value(tokens[i]):
            pairs.append(param.convert(f"{key}={tokens[i]}", None, None))
            i += 1
        else:
            pairs.append((key, True))
    return pairs


class CamelCaseGroup(click.Group):
    """Resolve `fit`, `Fit` and `simulate_vol` / `SimulateVol` to the same
    command."""

    def get_command(self, ctx, cmd_name):
        wanted = convert_to_snake_case(cmd_name)
        for c in self.list_commands(ctx):
            if convert_to_snake_case(c) == wanted:
                return click.Group.get_command(self, ctx, c)
        return None


@click.group(cls=CamelCaseGroup)
def cli():
    """Multivariate local level models with generalized inverted Wishart
    covariance learning."""
