"""Simulation from the local level model and the Monte Carlo comparison of the
GIW filter with its baselines."""

import dataclasses
import sys
import time
from typing import Dict, List, Optional, Sequence, Tuple, Union

import click
import numpy as np

from gilevel.core import utils
from gilevel.core.component import component
from gilevel.core.field import ComponentField, Field
from gilevel.errors import GilevelError, ParameterError
from gilevel.stats import matrix
from gilevel.stats.baselines import em_fit, iw_fit, kalman_run
from gilevel.stats.filter import run_filter
from gilevel.stats.model import EstimatedW, FixedW, ModelConfig

MODELS = ("giw", "iw", "em", "kalman")
# Beyond these sizes a benchmark must be requested with `large=True`.
DESK_MAX_P = 20
DESK_MAX_N = 1000


@component
class CovGenParams:
    """Random covariance matrices `Sigma = V C V`.

    Off-diagonal correlations are `+-Beta(corr_beta_a, corr_beta_b)` with a
    positive sign with probability `sign_prob`; variances are
    `Gamma(var_gamma_shape, var_gamma_scale)`. A correlation matrix repaired to
    positive definiteness has eigenvalues of at least `pd_floor` times its
    largest before the diagonal is rescaled.
    """

    corr_beta_a: float = Field(2.0)
    corr_beta_b: float = Field(5.0)
    var_gamma_shape: float = Field(2.0)
    var_gamma_scale: float = Field(1.0)
    sign_prob: float = Field(0.5)
    max_rejections: int = Field(100)
    pd_floor: float = Field(1e-2)

    def __post_configure__(self):
        self.validate()

    def validate(self) -> None:
        positive = ("corr_beta_a", "corr_beta_b", "var_gamma_shape", "var_gamma_scale")
        for name in positive:
            if not getattr(self, name) > 0:
                raise ParameterError(f"{name} must be positive.")
        if not 0 <= self.sign_prob <= 1:
            raise ParameterError(
                f"sign_prob must lie in [0, 1]; got {self.sign_prob}."
            )
        if self.max_rejections < 0:
            raise ParameterError("max_rejections must be non-negative.")
        if not 0 < self.pd_floor < 1:
            raise ParameterError(f"pd_floor must lie in (0, 1); got {self.pd_floor}.")


def _draw_corr(p: int, params: CovGenParams, rng: np.random.Generator) -> np.ndarray:
    rows, cols = np.triu_indices(p, 1)
    size = len(rows)
    values = rng.beta(params.corr_beta_a, params.corr_beta_b, size=size)
    signs = np.where(rng.random(size) < params.sign_prob, 1.0, -1.0)
    C = np.eye(p)
    C[rows, cols] = C[cols, rows] = signs * values
    return C


def _gen_corr(
    p: int, params: CovGenParams, rng: np.random.Generator
) -> Tuple[np.ndarray, bool]:
    for _ in range(params.max_rejections + 1):
        C = _draw_corr(p, params, rng)
        if matrix.is_pd(C):
            return C, False
    floor = params.pd_floor * np.linalg.eigvalsh(C)[-1]
    C = matrix.nearest_pd(C, floor)
    d = 1.0 / np.sqrt(np.diag(C))
    return matrix.symmetrize(d[:, None] * C * d[None, :]), True


def _warn_repaired(params: CovGenParams) -> None:
    utils.warn(
        f"No positive definite correlation matrix after {params.max_rejections} "
        "redraws; using the nearest one."
    )


def gen_corr(p: int, params: CovGenParams, rng: np.random.Generator) -> np.ndarray:
    """A random correlation matrix, redrawn until positive definite.

    After `max_rejections` redraws the last draw is moved to the nearest matrix
    whose eigenvalues are at least `pd_floor` times its largest, and rescaled to
    a unit diagonal.
    """
    C, repaired = _gen_corr(p, params, rng)
    if repaired:
        _warn_repaired(params)
    return C


def draw_cov(
    p: int, params: CovGenParams, rng: np.random.Generator
) -> Tuple[np.ndarray, bool]:
    """`gen_cov` without the warning: the covariance and whether its
    correlation matrix had to be repaired."""
    if not isinstance(rng, np.random.Generator):
        raise TypeError("Pass a seeded `numpy.random.Generator`.")
    C, repaired = _gen_corr(p, params, rng) if p > 1 else (np.eye(1), False)
    v = np.sqrt(rng.gamma(params.var_gamma_shape, params.var_gamma_scale, size=p))
    return matrix.symmetrize(v[:, None] * C * v[None, :]), repaired


def gen_cov(p: int, params: CovGenParams, rng: np.random.Generator) -> np.ndarray:
    sigma, repaired = draw_cov(p, params, rng)
    if repaired:
        _warn_repaired(params)
    return sigma


def _factor(M: np.ndarray) -> np.ndarray:
    # Symmetric square root, which tolerates singular (e.g. zero) covariances.
    return matrix.sym_sqrt(matrix.symmetrize(np.atleast_2d(np.asarray(M, float))))


def simulate_llm(
    sigma,
    omega,
    phi: float,
    N: int,
    m_init,
    rng: np.random.Generator,
    theta0: Optional[np.ndarray] = None,
) -> np.ndarray:
    """`y_t = theta_t + eps_t`, `theta_t = phi theta_{t-1} + omega_t` with
    `eps_t ~ N(0, sigma)` and `omega_t ~ N(0, omega)`.

    `theta_0 ~ N(m_init, omega)` unless `theta0` is given. Singular covariances
    are allowed.
    """
    if not isinstance(rng, np.random.Generator):
        raise TypeError("Pass a seeded `numpy.random.Generator`.")
    L_sigma, L_omega = _factor(sigma), _factor(omega)
    p = len(L_sigma)
    if theta0 is None:
        theta = np.asarray(m_init, dtype=float) + L_omega @ rng.standard_normal(p)
    else:
        theta = np.asarray(theta0, dtype=float)
    data = np.empty((N, p))
    for t in range(N):
        theta = phi * theta + L_omega @ rng.standard_normal(p)
        data[t] = theta + L_sigma @ rng.standard_normal(p)
    return data


def implied_w(sigma: np.ndarray, omega: np.ndarray) -> np.ndarray:
    """The `W` with `Omega = Sigma^{1/2} W Sigma^{1/2}`."""
    _, Z_inv = matrix.sym_sqrt_and_inv(sigma)
    return matrix.symmetrize(Z_inv @ omega @ Z_inv)


@component
class BenchConfig:
    """Monte Carlo comparison of the GIW filter, the IW filter, EM and the
    Kalman filter with the true covariances."""

    p: int = Field(10)
    N: int = Field(500)
    replications: int = Field(20)
    models: Tuple[str, ...] = Field(MODELS)
    seed: int = Field(utils.default_seed)
    phi: float = Field(1.0)
    n0: float = Field(0.01)
    # "estimated" runs the GIW filter with W estimated from each series, "true"
    # with the W implied by the simulated covariances.
    giw_w: str = Field("estimated")
    em_tol: float = Field(1e-3)
    em_max_iter: int = Field(200)
    large: bool = Field(False)
    quiet: bool = Field(False)
    cov_gen: CovGenParams = ComponentField(CovGenParams)

    def __post_configure__(self):
        self.validate()

    def validate(self) -> None:
        if self.replications < 1:
            raise ParameterError("replications must be at least 1.")
        if self.p < 1 or self.N < 2:
            raise ParameterError("A benchmark needs p >= 1 and N >= 2.")
        unknown = set(self.models) - set(MODELS)
        if unknown or not self.models:
            raise ParameterError(
                f"Unknown models {sorted(unknown)}; choose from {list(MODELS)}."
            )
        if self.giw_w not in ("estimated", "true"):
            raise ParameterError("giw_w must be 'estimated' or 'true'.")
        if (self.p > DESK_MAX_P or self.N > DESK_MAX_N) and not self.large:
            raise utils.ConfigurationError(
                f"A benchmark with p={self.p}, N={self.N} can take hours; pass "
                "`large=True` to run it."
            )


@dataclasses.dataclass(frozen=True)
class ModelSummary:
    name: str
    mean_msse: float
    se_msse: float
    completed: int
    failures: int
    mean_seconds: float
    sd_seconds: float


@dataclasses.dataclass(frozen=True)
class BenchReport:
    summaries: Dict[str, ModelSummary]
    # (replication, model, msse, seconds); failed runs have msse NaN.
    runs: List[Tuple[int, str, float, float]]
    config: Dict[str, object]
    seed: int
    # Simulated covariances whose correlation matrix had to be repaired.
    cov_fallbacks: int = 0

    def table(self) -> str:
        lines = [
            f"{'model':<8}{'MSSE':>10}{'(se)':>12}"
            f"{'runs':>6}{'failed':>8}{'sec':>9}"
        ]
        for s in self.summaries.values():
            lines.append(
                f"{s.name:<8}{s.mean_msse:>10.4f}{f'({s.se_msse:.4f})':>12}"
                f"{s.completed:>6}{s.failures:>8}{s.mean_seconds:>9.2f}"
            )
        if self.cov_fallbacks:
            draws = 2 * len({r for r, *_ in self.runs})
            lines.append(f"repaired covariances: {self.cov_fallbacks} of {draws}")
        return "\n".join(lines)

    def rows(self) -> np.ndarray:
        return np.array(
            [
                [i, s.mean_msse, s.se_msse, s.completed, s.failures, s.mean_seconds]
                for i, s in enumerate(self.summaries.values())
            ],
            dtype=float,
        )


def _run_model(name: str, data, sigma, omega, config: BenchConfig) -> float:
    if name == "kalman":
        output = kalman_run(data, sigma, omega, config.phi)
    elif name == "iw":
        output = iw_fit(data, config.phi, n0=config.n0).output
    elif name == "em":
        em = em_fit(data, config.phi, tol=config.em_tol, max_iter=config.em_max_iter)
        output = kalman_run(data, em.sigma_hat, em.omega_hat, config.phi)
    else:
        if config.giw_w == "true":
            w_spec = FixedW(W=implied_w(sigma, omega))
        else:
            w_spec = EstimatedW()
        model = ModelConfig(phi=config.phi, n0=config.n0, w_spec=w_spec)
        output = run_filter(model, data)
    return float(np.nanmean(output.msse))


def run_replication(
    config: BenchConfig, replication: int
) -> Tuple[List[Tuple[str, float, float]], int]:
    """Draw `(Sigma, Omega)`, simulate and run every selected model.

    Returns `(model, msse, seconds)` per model, with NaN for failures, and the
    number of drawn covariances whose correlation matrix was repaired.
    """
    rng = np.random.default_rng([config.seed, replication])
    p = config.p
    sigma, sigma_repaired = draw_cov(p, config.cov_gen, rng)
    omega, omega_repaired = draw_cov(p, config.cov_gen, rng)
    data = simulate_llm(sigma, omega, config.phi, config.N, np.zeros(p), rng)

    results = []
    for name in config.models:
        start = time.perf_counter()
        try:
            msse = _run_model(name, data, sigma, omega, config)
        except (GilevelError, np.linalg.LinAlgError, ValueError) as e:
            utils.warn(f"Replication {replication}: model '{name}' failed: {e}")
            msse = float("nan")
        results.append((name, msse, time.perf_counter() - start))
    return results, int(sigma_repaired) + int(omega_repaired)


def run_benchmark(config: BenchConfig) -> BenchReport:
    """Every replication is keyed by `(seed, replication)` and is
    deterministic."""
    config.validate()
    runs = []
    fallbacks = 0
    with click.progressbar(
        range(config.replications),
        label="Replications",
        file=sys.stderr,
        hidden=config.quiet,
    ) as replications:
        for r in replications:
            results, repaired = run_replication(config, r)
            fallbacks += repaired
            for name, msse, seconds in results:
                runs.append((r, name, msse, seconds))
    if fallbacks:
        utils.warn(
            f"{fallbacks} of {2 * config.replications} simulated covariances needed "
            "a repaired correlation matrix."
        )

    summaries = {}
    for name in config.models:
        values = np.array([m for _, n, m, _ in runs if n == name])
        seconds = np.array([s for _, n, _, s in runs if n == name])
        ok = values[np.isfinite(values)]
        summaries[name] = ModelSummary(
            name=name,
            mean_msse=float(np.mean(ok)) if len(ok) else float("nan"),
            se_msse=float(np.std(ok, ddof=1) / np.sqrt(len(ok)))
            if len(ok) > 1
            else 0.0,
            completed=len(ok),
            failures=len(values) - len(ok),
            mean_seconds=float(np.mean(seconds)),
            sd_seconds=float(np.std(seconds)),
        )
    return BenchReport(
        summaries=summaries,
        runs=runs,
        config=dict(config),
        seed=config.seed,
        cov_fallbacks=fallbacks,
    )


@dataclasses.dataclass(frozen=True)
class TrackReport:
    """`||Sigma~_t - Sigma_t||_F`, raw and divided by `||Sigma_t||_F`."""

    raw: np.ndarray
    normalized: np.ndarray

    @property
    def mean(self) -> float:
        return float(np.mean(self.normalized))

    @property
    def var(self) -> float:
        return float(np.var(self.normalized))

    @property
    def raw_mean(self) -> float:
        return float(np.mean(self.raw))


def frobenius_track(
    sigma_path: Sequence[np.ndarray], truth: Union[np.ndarray, Sequence[np.ndarray]]
) -> TrackReport:
    """Distances of the filter's covariance estimates from a fixed truth or from
    a path of true covariances."""
    truth = np.asarray(truth, dtype=float)
    if truth.ndim == 2:
        truth = np.broadcast_to(truth, (len(sigma_path),) + truth.shape)
    if len(truth) != len(sigma_path):
        raise ParameterError(
            f"{len(sigma_path)} estimates but {len(truth)} true covariances."
        )
    raw = np.array([matrix.frobenius(est, tru) for est, tru in zip(sigma_path, truth)])
    scale = np.array([np.linalg.norm(tru, "fro") for tru in truth])
    return TrackReport(raw=raw, normalized=raw / scale)


def simulate_mould_like(
    rng: np.random.Generator,
    N: int = 276,
    p: int = 5,
    phase1_end: int = 180,
    drift: float = 0.05,
    noise_scale: float = 1.0,
) -> np.ndarray:
    """A level-stable series whose level starts drifting linearly after
    `phase1_end` by `drift` observation standard deviations per step, in a
    random direction."""
    if not 0 < phase1_end < N:
        raise ParameterError("phase1_end must lie strictly inside the series.")
    params = CovGenParams()
    sigma = noise_scale * gen_cov(p, params, rng)
    level = 10.0 + rng.standard_normal(p)
    omega = 1e-4 * sigma
    data = simulate_llm(sigma, omega, 1.0, N, level, rng, theta0=level)
    direction = rng.standard_normal(p)
    direction /= np.linalg.norm(direction)
    steps = np.clip(np.arange(1, N + 1) - phase1_end, 0, None)
    sd = np.sqrt(np.diag(sigma))
    return data + steps[:, None] * drift * sd[None, :] * direction[None, :]
