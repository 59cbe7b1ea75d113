import numpy as np
import pytest
from numpy.testing import assert_allclose

from gilevel.errors import DomainError
from gilevel.stats import matrix
from gilevel.stats.steady_state import (
    SteadyState,
    p_iterate,
    p_limit,
    p_step,
    w_from_p,
)

P_SCALAR = (np.sqrt(21) - 3) / 2


def random_w(rng, p, low=0.01, high=100.0):
    Q, _ = np.linalg.qr(rng.standard_normal((p, p)))
    eigenvalues = np.exp(rng.uniform(np.log(low), np.log(high), size=p))
    W = (Q * eigenvalues) @ Q.T
    return 0.5 * (W + W.T)


def test_p_step_examples():
    W = np.array([[2.0, 0.3], [0.3, 1.0]])
    expected = W @ np.linalg.inv(W + np.eye(2))
    for P_prev in (np.zeros((2, 2)), np.eye(2), 5 * np.eye(2)):
        assert_allclose(p_step(P_prev, 0.0, W), expected, atol=1e-14)
    assert p_step([[0.0]], 1.0, [[3.0]]).item() == pytest.approx(0.75)


def test_iterates_stay_in_unit_interval_and_converge_monotonically():
    rng = np.random.default_rng(0)
    W = random_w(rng, 3)
    limit = p_limit(1.0, W)
    P = 1000 * np.eye(3)
    distances = []
    for _ in range(60):
        P = p_step(P, 1.0, W)
        w = np.linalg.eigvalsh(P)
        assert w[0] > 0 and w[-1] < 1
        distances.append(matrix.frobenius(P, limit))
    tail = distances[3:]
    assert all(b <= a + 1e-15 for a, b in zip(tail, tail[1:]))


def test_p_limit_examples():
    assert p_limit(1.0, [[3.0]]).item() == pytest.approx(P_SCALAR, abs=1e-12)
    assert p_iterate(1.0, [[3.0]])[0].item() == pytest.approx(P_SCALAR, abs=1e-11)

    W = np.array([[2.0, 0.3], [0.3, 1.0]])
    assert_allclose(p_limit(0.0, W), W @ np.linalg.inv(W + np.eye(2)), atol=1e-14)

    W = 0.5 * np.eye(2)
    expected = (np.sqrt(0.25 + 2) - 0.5) / 2
    assert_allclose(p_limit(1.0, W), expected * np.eye(2), atol=1e-14)
    assert_allclose(p_limit(1.0, W), p_iterate(1.0, W)[0], atol=1e-10)


def test_p_limit_matches_iteration_on_random_inputs():
    rng = np.random.default_rng(1)
    for _ in range(100):
        p = rng.integers(1, 5)
        phi = rng.uniform(0, 1)
        W = random_w(rng, p)
        P = p_limit(phi, W)
        assert matrix.frobenius(p_step(P, phi, W), P) <= 1e-10

        iterated, steps = p_iterate(phi, W, P0=np.eye(p))
        assert matrix.frobenius(P, iterated) <= 1e-10
        assert steps <= 200
        assert matrix.commute_residual(P, W) <= 1e-8


def test_iterates_commute_with_w():
    rng = np.random.default_rng(2)
    W = random_w(rng, 4)
    P = 3.0 * np.eye(4)
    for _ in range(50):
        P = p_step(P, 0.9, W)
        assert matrix.commute_residual(P, W) <= 1e-9


def test_p_limit_negative_and_explosive_phi():
    W = np.diag([0.2, 4.0])
    for phi in (-0.8, 1.3):
        P = p_limit(phi, W)
        assert_allclose(p_step(P, phi, W), P, atol=1e-10)


def test_p_limit_rejects_singular_w():
    with pytest.raises(DomainError, match="positive definite"):
        p_limit(1.0, np.diag([1.0, 0.0]))


def test_w_from_p_examples():
    assert w_from_p([[P_SCALAR]], 1.0).item() == pytest.approx(3.0, rel=1e-12)
    assert_allclose(w_from_p(0.5 * np.eye(2), 1.0), 0.5 * np.eye(2))
    P = np.array([[0.4, 0.1], [0.1, 0.3]])
    assert_allclose(
        w_from_p(P, 0.0), np.linalg.inv(np.eye(2) - P) @ P, atol=1e-14
    )


def test_w_from_p_round_trip():
    rng = np.random.default_rng(3)
    for _ in range(100):
        p = rng.integers(1, 5)
        phi = rng.uniform(0, 1)
        W = random_w(rng, p)
        recovered = w_from_p(p_limit(phi, W), phi)
        assert matrix.frobenius(recovered, W) <= 1e-8 * np.linalg.norm(W)


def test_w_from_p_domain():
    with pytest.raises(DomainError, match="I - P"):
        w_from_p(np.eye(2), 1.0)
    with pytest.raises(DomainError):
        w_from_p(np.diag([0.5, -0.1]), 1.0)


def test_steady_state_bundle():
    state = SteadyState.from_w(1.0, [[3.0]])
    assert state.P.item() == pytest.approx(P_SCALAR)
    assert state.Q.item() == pytest.approx(P_SCALAR + 4.0)
    assert_allclose(state.Q_inv @ state.Q, [[1.0]])
    assert state.p == 1
