import click
import pytest

from gilevel.core.cli import ConfigParam, cli, parse_config_args


@pytest.mark.parametrize(
    "argument,expected",
    [
        ("phi=0.9", ("phi", 0.9)),
        ("w_spec.deltas=0.9,0.95", ("w_spec.deltas", (0.9, 0.95))),
        ("data=series.csv", ("data", "series.csv")),
        ("out=", ("out", "")),
        ("--exact_gain", ("exact_gain", True)),
        ("--no-exact_gain", ("exact_gain", False)),
        ("--w_spec.exact", ("w_spec.exact", True)),
    ],
)
def test_config_param(argument, expected):
    assert ConfigParam().convert(argument, None, None) == expected


@pytest.mark.parametrize("argument", ["phi", "x-y=1", "-phi=1", "=1", "a b=1"])
def test_config_param_rejects_malformed_arguments(argument):
    with pytest.raises(click.BadParameter, match="key=value"):
        ConfigParam().convert(argument, None, None)


@pytest.mark.parametrize(
    "tokens,expected",
    [
        (["--p", "2", "--n", "100"], [("p", 2), ("n", 100)]),
        (["--w-file", "w.csv", "phi=0.5"], [("w_file", "w.csv"), ("phi", 0.5)]),
        (
            ["--estimate-w", "--reestimate-every=50"],
            [("estimate_w", True), ("reestimate_every", 50)],
        ),
        (["--discounts", "0.9,0.9"], [("discounts", (0.9, 0.9))]),
        (["--phi", "-0.5"], [("phi", -0.5)]),
        (["--large", "seed=3"], [("large", True), ("seed", 3)]),
        (["--no-quiet", "--quiet"], [("quiet", False), ("quiet", True)]),
    ],
)
def test_parse_config_args(tokens, expected):
    assert parse_config_args(tokens) == expected


def test_parse_config_args_rejects_malformed_tokens():
    for tokens in (["phi"], ["--p", "2", "x@y=1"], ["--no-quiet=1"]):
        with pytest.raises(click.BadParameter):
            parse_config_args(tokens)


def test_group_resolves_command_names():
    @click.command("SimulateVolTest")
    def command():
        pass

    cli.add_command(command)
    try:
        ctx = click.Context(cli)
        for name in ("SimulateVolTest", "simulate_vol_test", "simulateVolTest"):
            assert cli.get_command(ctx, name) is command
        assert cli.get_command(ctx, "simulate_vol_tests") is None
    finally:
        del cli.commands["SimulateVolTest"]
