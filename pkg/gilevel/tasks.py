"""The `gilevel` command line.

Every command is a `@task`: its fields are set with `key=value` arguments,
`--key value` options or a `-c` config file, and every report starts with the
resolved configuration so that it can be re-run from its own header.

```
gilevel simulate p=2 N=100 seed=7 out=series.csv
gilevel simulate --p 2 --n 100 --seed 7 --out series.csv
gilevel fit data=series.csv discounts=0.9,0.9
gilevel fit data=series.csv --estimate_w reestimate_every=50
gilevel baseline data=series.csv model=em
gilevel bench p=10 N=500 replications=20 seed=1
gilevel bench --p 10 --n 500 --reps 20 --seed 1 --quiet
gilevel chart model.w_spec.W=0.01 phase1_end=180
gilevel giw n=10 A=A.csv S=S.csv X=X.csv ell=1
```
"""

from typing import Optional, Sequence, Union

import numpy as np

from gilevel.core import utils
from gilevel.core.cli import cli
from gilevel.core.component import configure
from gilevel.core.field import ComponentField, Field
from gilevel.core.io import (
    MatrixLike,
    load_matrix,
    open_output,
    read_series,
    write_matrix,
    write_report,
    write_vech_rows,
)
from gilevel.core.task import task
from gilevel.stats.baselines import em_fit, iw_fit, kalman_run
from gilevel.stats.chart import COLUMNS as CHART_COLUMNS
from gilevel.stats.chart import ChartConfig, chart_run
from gilevel.stats.filter import FilterOutput, run_filter
from gilevel.stats.giw import (
    GiwParams,
    averaged_estimate,
    giw_log_density,
    giw_moments,
    giw_mode,
    gw_log_density,
)
from gilevel.stats.matrix import spd_inv
from gilevel.stats.model import ModelConfig
from gilevel.stats.simulate import (
    BenchConfig,
    CovGenParams,
    gen_cov,
    run_benchmark,
    simulate_llm,
    simulate_mould_like,
)
from gilevel.stats.volatility import simulate_vol_llm, vol_constants

BASELINES = ("kalman", "iw", "em")


class Command:
    """Output settings shared by every command. `quiet` silences progress and
    summaries on stderr; warnings are still shown."""

    out: Optional[str] = Field(None)
    format: str = Field("csv")
    quiet: bool = Field(False)

    def emit(self, columns: Sequence[str], rows, meta=None) -> None:
        with open_output(self.out) as stream:
            write_report(stream, dict(self), columns, rows, self.format, meta)


def _series_columns(p: int) -> list:
    return [f"y{i + 1}" for i in range(p)]


def _forecast_report(output: FilterOutput):
    """Columns and rows of a one-step forecast report."""
    p = output.errors.shape[1]
    columns = (
        ["t"]
        + [f"e{i + 1}" for i in range(p)]
        + [f"std{i + 1}" for i in range(p)]
        + [f"m{i + 1}" for i in range(p)]
        + ["log_pred"]
    )
    rows = np.column_stack(
        [
            [r.t for r in output.records],
            output.errors,
            np.array([r.std_error for r in output.records]),
            output.means,
            [r.log_pred for r in output.records],
        ]
    )
    meta = {
        "msse": output.msse,
        "mse": output.mse,
        "mad": output.mad,
        "loglik": output.loglik,
        "missing": output.missing,
    }
    return columns, rows, meta


def _write_path(path: Optional[str], matrices) -> None:
    if path is not None:
        with open_output(path) as stream:
            write_vech_rows(stream, matrices)


def _write_trace(path: str, output: FilterOutput) -> None:
    """One row per Newton-Raphson iterate, keyed by the step at which `W` was
    estimated."""
    rows = [
        [t, it.index, it.objective, it.step_norm]
        for t, result in output.nr_results
        for it in result.trace
    ]
    if not rows:
        utils.warn("`trace_out` is set but W was not estimated; writing no rows.")
    with open_output(path) as stream:
        write_report(stream, {}, ["t", "iterate", "objective", "step_norm"], rows)


@task
class Simulate(Command):
    """Simulate the local level model. Covariances that are not given are drawn
    at random; the truth is written to `sigma_out` / `omega_out` and to the
    report header."""

    p: int = Field(2)
    N: int = Field(100)
    phi: float = Field(1.0)
    seed: int = Field(utils.default_seed)
    sigma: MatrixLike = Field(None)
    omega: MatrixLike = Field(None)
    sigma_out: Optional[str] = Field(None)
    omega_out: Optional[str] = Field(None)
    cov_gen: CovGenParams = ComponentField(CovGenParams)

    def run(self):
        rng = np.random.default_rng(self.seed)
        shape = (self.p, self.p)
        sigma = load_matrix(self.sigma, "sigma", shape)
        omega = load_matrix(self.omega, "omega", shape)
        if sigma is None:
            sigma = gen_cov(self.p, self.cov_gen, rng)
        if omega is None:
            omega = gen_cov(self.p, self.cov_gen, rng)
        data = simulate_llm(sigma, omega, self.phi, self.N, np.zeros(self.p), rng)
        self.emit(
            _series_columns(self.p), data, meta={"sigma": sigma, "omega": omega}
        )
        for path, truth in ((self.sigma_out, sigma), (self.omega_out, omega)):
            if path is not None:
                with open_output(path) as stream:
                    write_matrix(stream, truth)


@task
class SimulateVol(Command):
    """Simulate the local level model with a time-varying observation covariance
    discounted by `delta`. The covariance path goes to `path_out` as vech
    rows."""

    p: int = Field(2)
    N: int = Field(100)
    delta: float = Field(0.95)
    phi: float = Field(1.0)
    seed: int = Field(utils.default_seed)
    sigma0: MatrixLike = Field(None)
    W: Union[float, MatrixLike] = Field(0.01)
    path_out: Optional[str] = Field(None)

    def run(self):
        rng = np.random.default_rng(self.seed)
        sigma0 = load_matrix(self.sigma0, "sigma0", (self.p, self.p))
        if sigma0 is None:
            sigma0 = np.eye(self.p)
        if isinstance(self.W, (int, float)):
            W = float(self.W) * np.eye(self.p)
        else:
            W = load_matrix(self.W, "W", (self.p, self.p))
        consts = vol_constants(self.delta, self.p)
        data, path = simulate_vol_llm(sigma0, W, consts, self.N, rng, phi=self.phi)
        self.emit(_series_columns(self.p), data, meta={"k": consts.k, "m": consts.m})
        _write_path(self.path_out, path)


@task
class Fit(Command):
    """Run the GIW filter over a series.

    `W` comes from `model.w_spec`, or from one of the shortcuts `w_file` (a CSV
    matrix), `discounts` (one factor, or one per component) or `estimate_w`
    (Newton-Raphson, optionally repeated every `reestimate_every` steps).

    `estimate_w` alone fits `W` to the whole series and then forecasts that
    same series, so its errors are in-sample. Set `calibration` to a prefix
    length, or use `reestimate_every`, for forecasts that only use past
    observations. `trace_out` receives the Newton-Raphson iterates of every
    estimate.

    Standardized errors divide by the diagonal of the forecast spread `S/n`
    (`model.standardization=spread`, the default). The alternative
    `conditional` divides by the diagonal of `Sigma~^{1/2} Q Sigma~^{1/2}`. Its
    `Sigma~` comes from a posterior with `n + 2p` degrees of freedom, which
    inflates the MSSE by about `(n + 2p)/n`.
    """

    data: str = Field()
    phi: float = Field(1.0)
    w_file: Optional[str] = Field(None)
    discounts: Optional[Union[float, Sequence[float]]] = Field(None)
    estimate_w: bool = Field(False)
    reestimate_every: int = Field(0)
    calibration: Optional[int] = Field(None)
    sigma_out: Optional[str] = Field(None)
    trace_out: Optional[str] = Field(None)
    model: ModelConfig = ComponentField(ModelConfig)

    def resolved_model(self) -> ModelConfig:
        chosen = [
            self.w_file is not None,
            self.discounts is not None,
            self.estimate_w,
        ]
        if sum(chosen) > 1:
            raise utils.ConfigurationError(
                "Use at most one of `w_file`, `discounts` and `estimate_w`."
            )
        if self.calibration is not None and not self.estimate_w:
            raise utils.ConfigurationError(
                "`calibration` only applies to `estimate_w`."
            )
        if not any(chosen):
            return self.model
        conf = {
            name: getattr(self.model, name)
            for name in ModelConfig.__component_fields__
            if name != "w_spec"
        }
        if self.w_file is not None:
            conf.update({"w_spec": "FixedW", "w_spec.W": self.w_file})
        elif self.discounts is not None:
            conf.update({"w_spec": "DiscountW", "w_spec.deltas": self.discounts})
        else:
            conf.update(
                {
                    "w_spec": "EstimatedW",
                    "w_spec.reestimate_every": self.reestimate_every,
                    "w_spec.calibration": self.calibration,
                }
            )
        model = ModelConfig()
        configure(model, conf)
        return model

    def run(self):
        data = read_series(self.data)
        output = run_filter(self.resolved_model(), data)
        columns, rows, meta = _forecast_report(output)
        meta["W"] = output.final.steady.W
        meta["P"] = output.final.steady.P
        if output.nr_results:
            meta["nr_iterations"] = [r.iterations for _, r in output.nr_results]
        self.emit(columns, rows, meta)
        _write_path(self.sigma_out, output.sigma_path)
        if self.trace_out is not None:
            _write_trace(self.trace_out, output)


@task
class Baseline(Command):
    """Run a comparison model: the Kalman filter with known `sigma` and `omega`,
    the IW filter with a fitted scalar `w`, or the Kalman filter with EM
    estimates."""

    data: str = Field()
    model: str = Field("kalman")
    phi: float = Field(1.0)
    n0: float = Field(0.01)
    sigma: MatrixLike = Field(None)
    omega: MatrixLike = Field(None)
    em_tol: float = Field(1e-3)
    em_max_iter: int = Field(500)

    def run(self):
        if self.model not in BASELINES:
            raise utils.ConfigurationError(
                f"Unknown baseline '{self.model}'; choose from {list(BASELINES)}."
            )
        data = read_series(self.data)
        p = data.shape[1]
        meta = {}
        if self.model == "kalman":
            sigma = load_matrix(self.sigma, "sigma", (p, p))
            omega = load_matrix(self.omega, "omega", (p, p))
            if sigma is None or omega is None:
                raise utils.ConfigurationError(
                    "The Kalman baseline needs both `sigma` and `omega`."
                )
            output = kalman_run(data, sigma, omega, self.phi)
        elif self.model == "iw":
            fit = iw_fit(data, self.phi, n0=self.n0)
            output = fit.output
            meta["w_hat"] = fit.w_hat
        else:
            em = em_fit(data, self.phi, tol=self.em_tol, max_iter=self.em_max_iter)
            if not em.converged:
                utils.warn(f"EM stopped after {em.iterations} iterations.")
            output = kalman_run(data, em.sigma_hat, em.omega_hat, self.phi)
            meta.update(
                sigma_hat=em.sigma_hat,
                omega_hat=em.omega_hat,
                em_iterations=em.iterations,
            )
        columns, rows, report_meta = _forecast_report(output)
        report_meta.update(meta)
        self.emit(columns, rows, report_meta)


@task
class Bench(BenchConfig, Command):
    """Monte Carlo comparison of mean squared standardized forecast errors.
    `format=table` prints the summary table. `--reps` is short for
    `replications`."""

    ALIASES = {"reps": "replications"}

    def run(self):
        report = run_benchmark(self)
        if self.format == "table":
            with open_output(self.out) as stream:
                stream.write(report.table() + "\n")
            return
        meta = {
            "models": ",".join(report.summaries),
            "failures": sum(s.failures for s in report.summaries.values()),
            "cov_fallbacks": report.cov_fallbacks,
        }
        self.emit(
            ["model", "msse", "se", "completed", "failures", "seconds"],
            report.rows(),
            meta,
        )
        utils.info(report.table(), quiet=self.quiet)


@task
class Chart(ChartConfig, Command):
    """EWMA chart of log Bayes factors. Without `data`, a synthetic 276x5 series
    with a drifting Phase II is charted."""

    data: Optional[str] = Field(None)
    seed: int = Field(utils.default_seed)
    plot_data: Optional[str] = Field(None)
    model: ModelConfig = ComponentField(ModelConfig)

    def run(self):
        if self.data is None:
            data = simulate_mould_like(np.random.default_rng(self.seed))
        else:
            data = read_series(self.data)
        report = chart_run(data, self, self.model)
        meta = {
            "z0": report.z0,
            "center": report.center,
            "lcl": report.lcl,
            "ucl": report.ucl,
            "signals": len(report.signals),
        }
        if report.first_signal is not None:
            meta["first_signal"] = report.first_signal
        rows = report.rows()
        self.emit(CHART_COLUMNS, rows, meta)
        if self.plot_data is not None:
            with open_output(self.plot_data) as stream:
                write_report(
                    stream,
                    {},
                    ["t", "Z", "center", "lcl", "ucl"],
                    rows[:, [0, 2, 3, 4, 5]],
                )


@task
class Giw(Command):
    """Evaluate `GIW_p(n, A, S)`: the mode and the averaged estimate as rows,
    and in the header the moments, plus the density at `X` and the dual
    density at `X^{-1}` when `X` is given."""

    n: float = Field()
    A: MatrixLike = Field()
    S: MatrixLike = Field()
    X: MatrixLike = Field(None)
    ell: Optional[float] = Field(None)

    def run(self):
        A = load_matrix(self.A, "A")
        params = GiwParams(self.n, A, load_matrix(self.S, "S", A.shape))
        p = params.p
        moments = giw_moments(params)
        meta = {"e_inv_quad": moments.e_inv_quad}
        if params.n > 2 * p + 2:
            meta["e_quad"] = moments.e_quad
        if self.ell is not None:
            meta["e_det_pow"] = moments.e_det_pow(self.ell)
        X = load_matrix(self.X, "X", (p, p))
        if X is not None:
            meta["log_density"] = giw_log_density(X, params)
            meta["gw_log_density"] = gw_log_density(spd_inv(X), params.dual())
        mode = giw_mode(params)
        tilde = averaged_estimate(params.n, params.A, params.S)
        columns = ["estimate", "row"] + [f"x{j + 1}" for j in range(p)]
        rows = [[0, i] + list(mode[i]) for i in range(p)]
        rows += [[1, i] + list(tilde[i]) for i in range(p)]
        meta["estimates"] = "0=mode,1=tilde"
        self.emit(columns, rows, meta)


def main():
    cli(prog_name="gilevel")
