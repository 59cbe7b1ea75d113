import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from scipy import stats

from gilevel.errors import DataError, ShapeError
from gilevel.stats import matrix
from gilevel.stats.baselines import iw_filter
from gilevel.stats.filter import (
    filter_init,
    filter_step,
    log_predictive,
    run_filter,
    run_filter_with_w,
    standardize,
    student_log_density,
    vol_filter_step,
)
from gilevel.stats.model import EstimatedW, FixedW, ModelConfig
from gilevel.stats.simulate import (
    CovGenParams,
    frobenius_track,
    gen_cov,
    implied_w,
    simulate_llm,
)
from gilevel.stats.steady_state import p_limit
from gilevel.stats.volatility import simulate_vol_llm, vol_constants


def random_walk(rng, p, N, w, sigma=None):
    sigma = np.eye(p) if sigma is None else sigma
    return simulate_llm(sigma, w * sigma, 1.0, N, np.zeros(p), rng)


@pytest.mark.parametrize("p", [1, 2, 4])
def test_student_density_matches_scipy(p):
    rng = np.random.default_rng(p)
    A = rng.standard_normal((p, p))
    S = A @ A.T + p * np.eye(p)
    n = 3.5
    for _ in range(5):
        e = rng.standard_normal(p)
        expected = stats.multivariate_t(loc=np.zeros(p), shape=S / n, df=n).logpdf(e)
        assert student_log_density(e, n, S) == pytest.approx(expected, abs=1e-10)


def test_scalar_filter_matches_hand_coded_recursion():
    rng = np.random.default_rng(0)
    w, phi, n0, s0 = 0.3, 0.9, 1.0, 2.0
    y = random_walk(rng, 1, 60, w)[:, 0]
    P = p_limit(phi, np.array([[w]]))[0, 0]
    q = P + w + 1

    output = run_filter_with_w(y, np.array([[w]]), phi=phi, n0=n0, S0=s0)

    m, S, n = 0.0, s0, n0
    for t in range(len(y)):
        e = y[t] - phi * m
        expected_log_pred = stats.t(df=n, scale=math.sqrt(S / n)).logpdf(e)
        assert output.records[t].log_pred == pytest.approx(expected_log_pred, abs=1e-10)
        assert output.records[t].std_error[0] == pytest.approx(
            e / math.sqrt(S / n), rel=1e-12
        )
        S += e * e
        n += 1
        m = phi * m + P * e
        assert output.means[t, 0] == pytest.approx(m, rel=1e-12, abs=1e-12)
        assert output.sigma_path[t][0, 0] == pytest.approx(S / (q * (n + 2)), rel=1e-12)
    assert output.final.S[0, 0] == pytest.approx(S, rel=1e-12)
    assert output.final.n == n


@pytest.mark.parametrize("phi", [1.0, 0.8])
def test_isotropic_w_reduces_to_the_inverse_wishart_filter(phi):
    rng = np.random.default_rng(1)
    data = random_walk(rng, 3, 80, 0.5)
    S0 = np.diag([1.0, 2.0, 0.5])
    giw = run_filter_with_w(data, 0.5 * np.eye(3), phi=phi, n0=2.0, S0=S0.tolist())
    iw = iw_filter(data, 0.5, phi=phi, n0=2.0, S0=S0)
    assert_allclose(giw.means, iw.means, atol=1e-10)
    assert_allclose(giw.final.S, iw.final.S, atol=1e-10)
    assert_allclose(giw.loglik, iw.loglik, atol=1e-8)


def test_step_bookkeeping():
    model = ModelConfig(w_spec=FixedW(W=0.2), n0=3.0)
    state = filter_init(model, 2)
    assert state.t == 0 and state.n == 3.0
    y = np.array([1.0, -2.0])
    log_pred = log_predictive(state, y)
    new, record = filter_step(state, y)
    assert new.t == 1 and new.n == 4.0
    assert record.dof == 3.0
    assert record.log_pred == pytest.approx(log_pred)
    assert_allclose(new.S, state.S + np.outer(y, y))
    assert matrix.is_pd(new.sigma_tilde)
    # The old state is untouched.
    assert state.t == 0 and state.n == 3.0


def test_step_rejects_bad_observations():
    state = filter_init(ModelConfig(w_spec=FixedW(W=0.2)), 2)
    with pytest.raises(ShapeError):
        filter_step(state, [1.0, 2.0, 3.0])
    with pytest.raises(DataError) as info:
        filter_step(state, [1.0, np.nan])
    assert info.value.col == 1


def test_run_filter_reports_location_of_bad_data():
    data = np.ones((5, 2))
    data[3, 0] = np.inf
    with pytest.raises(DataError) as info:
        run_filter_with_w(data, 0.1 * np.eye(2))
    assert (info.value.row, info.value.col) == (3, 0)


def test_msse_is_calibrated_when_well_specified():
    rng = np.random.default_rng(2)
    sigma = np.array([[2.0, 0.6], [0.6, 1.0]])
    Z = matrix.sym_sqrt(sigma)
    W = np.array([[0.3, 0.05], [0.05, 0.1]])
    data = simulate_llm(sigma, Z @ W @ Z, 1.0, 2000, np.zeros(2), rng)
    output = run_filter_with_w(data, W)
    assert np.all(np.abs(output.msse - 1) < 0.1)
    assert output.missing == 0
    assert output.mse.shape == output.mad.shape == (2,)


def generic_model(rng, p):
    sigma = gen_cov(p, CovGenParams(), rng)
    omega = gen_cov(p, CovGenParams(), rng)
    model = ModelConfig(w_spec=FixedW(W=implied_w(sigma, omega)))
    return sigma, omega, model


def test_first_step_on_generic_covariances_is_bounded():
    rng = np.random.default_rng(30)
    sigma, omega, model = generic_model(rng, 5)
    data = simulate_llm(sigma, omega, 1.0, 3, np.zeros(5), rng)
    state = filter_init(model, 5)
    for y in data:
        new, record = filter_step(state, y)
        assert matrix.is_pd(new.sigma_tilde)
        assert np.linalg.norm(new.m - state.m) <= 100 * np.linalg.norm(record.error)
        state = new


def test_generic_covariances_keep_the_filter_stable():
    rng = np.random.default_rng(31)
    for _ in range(5):
        sigma, omega, model = generic_model(rng, 5)
        data = simulate_llm(sigma, omega, 1.0, 300, np.zeros(5), rng)
        output = run_filter(model, data)
        assert np.all(np.isfinite(output.means))
        assert all(matrix.is_pd(s) for s in output.sigma_path)
        assert abs(np.nanmean(output.msse) - 1) < 0.2


def test_long_run_keeps_every_state_matrix_positive_definite():
    rng = np.random.default_rng(32)
    sigma, omega, model = generic_model(rng, 10)
    data = simulate_llm(sigma, omega, 1.0, 10_000, np.zeros(10), rng)
    output = run_filter(model, data)
    assert np.all(np.isfinite(output.means))
    assert all(
        np.all(np.isfinite(s)) and matrix.is_pd(s) for s in output.sigma_path[::100]
    )
    assert matrix.is_pd(output.sigma_path[-1])
    assert matrix.is_pd(output.final.S)
    assert output.missing == 0


def test_conditional_standardization_changes_only_the_scores():
    rng = np.random.default_rng(3)
    data = random_walk(rng, 2, 40, 0.2)
    spread = run_filter_with_w(data, 0.2 * np.eye(2), n0=5.0, S0=5.0)
    conditional = run_filter_with_w(
        data, 0.2 * np.eye(2), n0=5.0, S0=5.0, standardization="conditional"
    )
    assert_allclose(spread.means, conditional.means)
    assert not np.allclose(spread.msse, conditional.msse)


def test_exact_gain_converges_to_steady_state():
    rng = np.random.default_rng(4)
    W = np.diag([0.5, 0.05])
    data = random_walk(rng, 2, 200, 0.1)
    output = run_filter_with_w(data, W, exact_gain=True)
    assert_allclose(output.final.P_t, p_limit(1.0, W), atol=1e-8)
    first = output.records[0]
    steady = run_filter_with_w(data, W)
    assert_allclose(first.error, steady.records[0].error)
    assert not np.allclose(output.means[0], steady.means[0])


def test_mode_estimator():
    rng = np.random.default_rng(5)
    data = random_walk(rng, 2, 50, 0.3)
    tilde = run_filter_with_w(data, np.diag([0.3, 0.1]))
    mode = run_filter_with_w(data, np.diag([0.3, 0.1]), estimator="mode")
    assert all(matrix.is_pd(s) for s in mode.sigma_path)
    # Both estimate the same covariance.
    assert matrix.frobenius(mode.sigma_path[-1], tilde.sigma_path[-1]) < 0.5 * (
        np.linalg.norm(tilde.sigma_path[-1], "fro")
    )


def test_reestimation_schedule():
    rng = np.random.default_rng(6)
    data = random_walk(rng, 2, 30, 0.3)
    model = ModelConfig(w_spec=EstimatedW(reestimate_every=10, max_iter=5))
    output = run_filter(model, data)
    assert [t for t, _ in output.nr_results] == [10, 20]
    assert len(output.records) == 30


def test_estimated_w_is_recorded():
    rng = np.random.default_rng(7)
    data = random_walk(rng, 2, 100, 0.3)
    output = run_filter(ModelConfig(w_spec=EstimatedW()), data)
    assert [t for t, _ in output.nr_results] == [0]


def test_standardize_floor():
    out = standardize(np.array([1.0, 2.0]), np.array([4.0, 0.0]))
    assert out[0] == 0.5
    assert np.isnan(out[1])


def test_undiscounted_volatility_step_keeps_n_and_is_gaussian():
    model = ModelConfig(w_spec=FixedW(W=0.2), n0=10.0, S0=10.0)
    state = filter_init(model, 2)
    y = np.array([0.5, -1.0])
    new, record = vol_filter_step(state, y, vol_constants(1.0, 2))
    assert math.isinf(record.dof)
    assert new.n == state.n
    assert_allclose(new.S, state.S + np.outer(y, y))
    cov = state.forecast_covariance()
    expected = stats.multivariate_normal(np.zeros(2), cov).logpdf(y)
    assert record.log_pred == pytest.approx(expected)


def test_discounted_volatility_step():
    consts = vol_constants(0.9, 2)
    model = ModelConfig(w_spec=FixedW(W=0.2), n0=10.0, S0=10.0)
    state = filter_init(model, 2)
    y = np.array([0.5, -1.0])
    new, record = vol_filter_step(state, y, consts)
    assert record.dof == pytest.approx(9.0)
    assert new.n == pytest.approx(10.0)
    assert_allclose(new.S, state.S / consts.k + np.outer(y, y))
    with pytest.raises(ShapeError):
        vol_filter_step(state, y, vol_constants(0.9, 3))


def test_discounting_tracks_a_moving_covariance():
    rng = np.random.default_rng(8)
    consts = vol_constants(0.98, 2)
    sigma0 = np.array([[1.0, 0.3], [0.3, 0.5]])
    W = 0.05 * np.eye(2)
    data, path = simulate_vol_llm(sigma0, W, consts, 1000, rng)
    common = dict(n0=50.0, S0=(50 * sigma0).tolist())
    discounted = run_filter_with_w(data, W, delta=0.98, **common)
    static = run_filter_with_w(data, W, **common)
    half = slice(500, None)
    moving = frobenius_track(discounted.sigma_path[half], path[half])
    fixed = frobenius_track(static.sigma_path[half], path[half])
    assert moving.mean < fixed.mean
