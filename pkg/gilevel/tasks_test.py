import numpy as np
import pytest
from click import testing
from numpy.testing import assert_allclose

from gilevel.core import configure
from gilevel.core.cli import cli
from gilevel.core.io import read_matrix, read_series
from gilevel.core.utils import read_config_file
from gilevel.stats.model import DiscountW, ModelConfig
from gilevel.tasks import Fit


@pytest.fixture
def runner():
    return testing.CliRunner(mix_stderr=False)


@pytest.fixture
def series(runner, tmp_path):
    path = tmp_path / "series.csv"
    result = runner.invoke(
        cli, ["simulate", "p=2", "N=80", "seed=7", f"out={path}"]
    )
    assert result.exit_code == 0, result.stderr
    return path


def test_simulate_is_deterministic(runner, tmp_path, series):
    again = tmp_path / "again.csv"
    sigma = tmp_path / "sigma.csv"
    result = runner.invoke(
        cli,
        ["simulate", "p=2", "N=80", "seed=7", f"out={again}", f"sigma_out={sigma}"],
    )
    assert result.exit_code == 0
    data = read_series(str(series))
    assert data.shape == (80, 2)
    assert np.array_equal(read_series(str(again)), data)
    assert read_matrix(str(sigma)).shape == (2, 2)

    other = runner.invoke(cli, ["simulate", "p=2", "N=80", "seed=8"])
    assert other.exit_code == 0
    assert "# seed=8" in other.output


def test_option_style_arguments(runner, tmp_path, series):
    again = tmp_path / "again.csv"
    result = runner.invoke(
        cli, ["simulate", "--p", "2", "--n", "80", "--seed", "7", "--out", str(again)]
    )
    assert result.exit_code == 0, result.stderr
    assert np.array_equal(read_series(str(again)), read_series(str(series)))

    w_file = tmp_path / "W.csv"
    np.savetxt(w_file, 0.01 * np.eye(2), fmt="%.17g", delimiter=",")
    outputs = []
    for args in (["--w-file", str(w_file)], ["--discounts", "0.9,0.9"]):
        out = tmp_path / f"fit{len(outputs)}.csv"
        result = runner.invoke(
            cli, ["fit", "--data", str(series), "--quiet", "--out", str(out)] + args
        )
        assert result.exit_code == 0, result.stderr
        outputs.append(read_config_file(str(out)))
    assert outputs[0]["w_file"] == str(w_file)
    assert outputs[1]["discounts"] == (0.9, 0.9)
    assert outputs[0]["quiet"] is True


def test_simulate_with_given_covariances(runner):
    result = runner.invoke(
        cli,
        [
            "simulate",
            "p=2",
            "N=5",
            "sigma=[[1.0, 0.0], [0.0, 2.0]]",
            "omega=[[0.0, 0.0], [0.0, 0.0]]",
        ],
    )
    assert result.exit_code == 0
    assert "## omega: 0,0,0,0" in result.output


def test_fit_discount_shortcut_matches_a_w_file(runner, tmp_path, series):
    w = (0.1**2 / 0.9) * np.eye(2)
    w_file = tmp_path / "W.csv"
    np.savetxt(w_file, w, fmt="%.17g", delimiter=",")
    by_discount = tmp_path / "discount.csv"
    by_file = tmp_path / "file.csv"
    for args in (
        ["discounts=0.9", f"out={by_discount}"],
        [f"w_file={w_file}", f"out={by_file}"],
    ):
        result = runner.invoke(cli, ["fit", f"data={series}"] + args)
        assert result.exit_code == 0, result.stderr
    assert_allclose(read_series(str(by_discount)), read_series(str(by_file)))


def test_fit_report(runner, tmp_path, series):
    out = tmp_path / "fit.csv"
    sigma_out = tmp_path / "sigma_path.csv"
    result = runner.invoke(
        cli,
        [
            "fit",
            f"data={series}",
            "model.w_spec.W=0.2",
            "phi=0.9",
            f"out={out}",
            f"sigma_out={sigma_out}",
        ],
    )
    assert result.exit_code == 0, result.stderr
    rows = read_series(str(out))
    # t, two errors, two scores, two means and the log predictive density.
    assert rows.shape == (80, 8)
    assert_allclose(rows[:, 0], np.arange(1, 81))
    assert read_series(str(sigma_out)).shape == (80, 3)
    text = out.read_text()
    assert "## msse: " in text and "## W: " in text
    assert read_config_file(str(out))["phi"] == 0.9


def test_fit_estimated_w(runner, series):
    result = runner.invoke(
        cli, ["fit", f"data={series}", "--estimate_w", "format=json"]
    )
    assert result.exit_code == 0, result.stderr
    assert '"nr_iterations"' in result.output


def test_fit_writes_the_newton_raphson_trace(runner, tmp_path, series):
    trace = tmp_path / "trace.csv"
    result = runner.invoke(
        cli,
        [
            "fit",
            f"data={series}",
            "--estimate-w",
            "--calibration",
            "40",
            "--trace-out",
            str(trace),
            "format=json",
        ],
    )
    assert result.exit_code == 0, result.stderr
    assert '"calibration": 40' in result.output
    rows = read_series(str(trace))
    assert rows.shape[1] == 4
    assert np.all(rows[:, 0] == 0)
    assert_allclose(rows[:, 1], np.arange(len(rows)))
    assert np.all(np.isfinite(rows[:, 2]))
    assert np.all(np.diff(rows[:, 2]) <= 1e-9 * (1 + np.abs(rows[:-1, 2])))

    misplaced = runner.invoke(
        cli, ["fit", f"data={series}", "discounts=0.9", "calibration=40"]
    )
    assert misplaced.exit_code == 1
    assert "only applies to `estimate_w`" in misplaced.stderr


def test_fit_help_names_the_defaults(runner):
    result = runner.invoke(cli, ["fit", "--help"])
    assert result.exit_code == 0
    text = " ".join(result.output.split())
    assert "errors are in-sample" in text
    assert "`model.standardization=spread`, the default" in text


def test_report_header_reruns_the_command(runner, tmp_path, series):
    first = tmp_path / "first.csv"
    second = tmp_path / "second.csv"
    result = runner.invoke(
        cli,
        ["fit", f"data={series}", "discounts=(0.9, 0.95)", "model.n0=3.0", f"out={first}"],
    )
    assert result.exit_code == 0, result.stderr
    result = runner.invoke(cli, ["fit", "-c", str(first), f"out={second}"])
    assert result.exit_code == 0, result.stderr
    assert np.array_equal(read_series(str(first)), read_series(str(second)))
    header = read_config_file(str(second))
    assert header["discounts"] == (0.9, 0.95)
    assert header["model.n0"] == 3.0


def test_exit_codes(runner, tmp_path, series):
    # Configuration problems are usage errors.
    assert runner.invoke(cli, ["fit"]).exit_code == 2
    assert runner.invoke(cli, ["fit", f"data={series}", "model.n0=0.0"]).exit_code == 2
    assert runner.invoke(cli, ["fit", f"data={series}", "phi=fast"]).exit_code == 2
    assert runner.invoke(cli, ["fit", f"data={series}", "x-y=1"]).exit_code == 2

    # Failures while running exit with status 1.
    missing = runner.invoke(cli, ["fit", f"data={tmp_path / 'none.csv'}"])
    assert missing.exit_code == 1
    no_w = runner.invoke(cli, ["fit", f"data={series}"])
    assert no_w.exit_code == 1
    assert "FixedW needs a value" in no_w.stderr
    both = runner.invoke(
        cli, ["fit", f"data={series}", "discounts=0.9", "--estimate_w"]
    )
    assert both.exit_code == 1
    assert "at most one" in both.stderr

    bad = tmp_path / "bad.csv"
    bad.write_text("1,2\n3,x\n")
    result = runner.invoke(cli, ["fit", f"data={bad}", "discounts=0.9"])
    assert result.exit_code == 1
    assert "row 1, column 1" in result.stderr


def test_baselines(runner, series):
    kalman = runner.invoke(
        cli,
        [
            "baseline",
            f"data={series}",
            "sigma=[[1.0, 0.0], [0.0, 1.0]]",
            "omega=[[0.1, 0.0], [0.0, 0.1]]",
        ],
    )
    assert kalman.exit_code == 0, kalman.stderr
    iw = runner.invoke(cli, ["baseline", f"data={series}", "model=iw"])
    assert iw.exit_code == 0, iw.stderr
    assert "## w_hat: " in iw.output
    em = runner.invoke(
        cli, ["baseline", f"data={series}", "model=em", "em_max_iter=20"]
    )
    assert em.exit_code == 0, em.stderr
    assert "## sigma_hat: " in em.output

    assert runner.invoke(cli, ["baseline", f"data={series}"]).exit_code == 1
    assert runner.invoke(cli, ["baseline", f"data={series}", "model=arima"]).exit_code == 1


def test_bench(runner):
    args = [
        "bench",
        "p=2",
        "N=50",
        "--reps",
        "2",
        "models=('iw', 'kalman')",
        "seed=3",
        "--quiet",
    ]
    table = runner.invoke(cli, args + ["format=table"])
    assert table.exit_code == 0, table.stderr
    assert table.output.splitlines()[0].split() == [
        "model",
        "MSSE",
        "(se)",
        "runs",
        "failed",
        "sec",
    ]
    csv = runner.invoke(cli, args)
    assert csv.exit_code == 0
    assert "## models: iw,kalman" in csv.output
    assert "## cov_fallbacks: 0" in csv.output
    assert runner.invoke(cli, ["bench", "p=30"]).exit_code == 2


def test_simulate_vol(runner, tmp_path):
    path_out = tmp_path / "path.csv"
    result = runner.invoke(
        cli,
        ["simulate_vol", "p=2", "N=30", "delta=0.9", "seed=3", f"path_out={path_out}"],
    )
    assert result.exit_code == 0, result.stderr
    assert read_series(str(path_out)).shape == (30, 3)
    assert "## m: " in result.output and "## k: " in result.output
    assert runner.invoke(cli, ["simulate_vol", "delta=1.5"]).exit_code == 1


def test_chart(runner, tmp_path):
    out = tmp_path / "chart.csv"
    plot = tmp_path / "plot.csv"
    result = runner.invoke(
        cli,
        [
            "chart",
            "seed=1",
            "model.w_spec.W=0.01",
            "model.n0=10.0",
            f"out={out}",
            f"plot_data={plot}",
        ],
    )
    assert result.exit_code == 0, result.stderr
    rows = read_series(str(out))
    assert rows.shape == (276, 7)
    assert np.all(rows[:180, -1] == 0)
    assert read_series(str(plot)).shape == (276, 5)
    assert runner.invoke(cli, ["chart", "phase1_end=5"]).exit_code == 2


def test_giw(runner):
    result = runner.invoke(
        cli,
        [
            "giw",
            "n=12.0",
            "A=[[0.5, 0.0], [0.0, 0.5]]",
            "S=[[2.0, 0.3], [0.3, 1.0]]",
            "X=[[1.0, 0.1], [0.1, 1.0]]",
            "ell=1.0",
        ],
    )
    assert result.exit_code == 0, result.stderr
    for key in ("e_inv_quad", "e_quad", "e_det_pow", "log_density", "gw_log_density"):
        assert f"## {key}: " in result.output
    lines = [line for line in result.output.splitlines() if not line.startswith("#")]
    assert lines[0] == "estimate,row,x1,x2"
    assert len(lines) == 5


def test_model_shortcut_keeps_other_settings(tmp_path):
    fit = Fit()
    configure(
        fit,
        {"data": str(tmp_path), "discounts": 0.95, "phi": 0.8, "model.n0": 4.0},
    )
    model = fit.resolved_model()
    assert isinstance(model, ModelConfig)
    assert isinstance(model.w_spec, DiscountW)
    assert model.w_spec.deltas == 0.95
    assert model.phi == 0.8 and model.n0 == 4.0
