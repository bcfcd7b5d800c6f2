# tests/test_param_sampler.py

import logging

import numpy as np
import pytest

from dpconsider.models.hyper import Hyperparams
from dpconsider.models.state import ResponseParams
from dpconsider.services.likelihood import utility_table
from dpconsider.services.param_sampler import (
    beta_objective,
    check_derivatives,
    delta_objective,
    newton_mode,
    sample_b,
    sample_beta,
    sample_D,
    sample_delta,
    tailored_proposal,
)
from dpconsider.utils.random_streams import stream
from tests.conftest import make_panel


def _params(data, beta=0.0):
    return ResponseParams(np.zeros(data.J), np.full(data.d_x, beta), np.zeros((data.n, data.d_z)), np.eye(data.d_z))


def test_newton_converges_quickly_on_logit_posterior(small_sim):
    data = small_sim.data
    C = small_sim.true_cs
    V = utility_table(_params(data), data)
    objective = beta_objective(V - data.X @ np.zeros(1), data, C, 3.0)
    mode, H, iterations, converged = newton_mode(objective, np.zeros(1))
    assert converged
    assert iterations <= 10
    assert np.max(np.abs(objective(mode)[1])) < 1e-8
    assert H[0, 0] < 0


def test_analytic_derivatives_match_finite_differences(small_sim):
    data = small_sim.data
    C = small_sim.true_cs
    V = utility_table(_params(data), data)
    rng = np.random.default_rng(0)
    beta_obj = beta_objective(V, data, C, 3.0)
    for _ in range(5):
        g_err, h_err = check_derivatives(beta_obj, rng.normal(size=1))
        assert g_err < 1e-5 and h_err < 1e-5
    for k in range(data.J - 1):
        d_obj = delta_objective(V, 0.0, k, data, C, 3.0)
        g_err, h_err = check_derivatives(d_obj, rng.normal(size=1))
        assert g_err < 1e-5 and h_err < 1e-5


def test_delta_objective_handles_singleton_sets():
    # subject 2 considers only category 1, so category 1 stands alone on its occasion
    data = make_panel([[0, 1], [0]], J=3)
    C = np.array([[True, True, True], [True, False, False]])
    V = np.zeros((data.n, data.t_max, data.J))
    for k in range(2):
        objective = delta_objective(V, 0.0, k, data, C, 3.0)
        f, g, H = objective(np.array([0.2]))
        assert np.isfinite(f) and np.all(np.isfinite(g)) and H[0, 0] < 0
        g_err, h_err = check_derivatives(objective, np.array([0.2]))
        assert g_err < 1e-5 and h_err < 1e-5


def test_fallback_to_random_walk_logs_warning(caplog):
    def convex(x):
        return float(x @ x), 2 * x, 2 * np.eye(x.shape[0])

    with caplog.at_level(logging.WARNING):
        proposal = tailored_proposal(convex, np.array([1.0]), np.eye(1) * 3.0, 0.5, label="beta")
    assert proposal.fallback
    np.testing.assert_allclose(proposal.cov, [[1.5]])
    assert "random walk" in caplog.text


def test_beta_sampler_recovers_truth(small_sim):
    data = small_sim.data
    C = small_sim.true_cs
    hyper = Hyperparams()
    beta = np.zeros(1)
    V = utility_table(_params(data), data)
    draws, accepted = [], 0
    for g in range(1100):
        beta, V, acc, proposal = sample_beta(beta, V, data, C, hyper, stream(1, g))
        accepted += acc
        draws.append(beta[0])
    np.testing.assert_allclose(V, utility_table(_params(data, beta[0]), data), atol=1e-10)
    kept = np.array(draws[100:])

    # the same one-dimensional posterior by quadrature
    objective = beta_objective(utility_table(_params(data), data), data, C, hyper.v_beta)
    grid = np.linspace(-1.0, 3.0, 4001)
    logpost = np.array([objective(np.array([x]))[0] for x in grid])
    w = np.exp(logpost - logpost.max())
    w /= w.sum()
    mean = float(w @ grid)
    sd = float(np.sqrt(w @ (grid - mean) ** 2))

    assert kept.mean() == pytest.approx(mean, abs=4.0 * sd / np.sqrt(kept.size / 2))
    assert kept.std() == pytest.approx(sd, rel=0.2)
    assert abs(mean - 1.0) < 3.0 * sd
    assert accepted / 1100 >= 0.3


def test_delta_sampler_keeps_last_category_pinned(small_sim):
    data = small_sim.data
    hyper = Hyperparams()
    params = _params(data)
    V = utility_table(params, data)
    delta = params.delta
    for g in range(20):
        delta, V, accepted, updated = sample_delta(delta, V, data, small_sim.true_cs, hyper, stream(2, g))
        assert updated == data.J - 1
        assert delta[-1] == 0.0
    np.testing.assert_allclose(V, utility_table(params.with_(delta=delta), data), atol=1e-10)


def test_random_effects_and_covariance(small_sim):
    data = small_sim.data
    hyper = Hyperparams()
    params = _params(data)
    V = utility_table(params, data)
    b, D = params.b, params.D
    for g in range(30):
        b, V, accepted = sample_b(b, D, V, data, small_sim.true_cs, stream(3, g))
        D = sample_D(b, hyper, stream(4, g))
        assert np.array_equal(D, D.T)
        assert np.linalg.eigvalsh(D).min() > 0
    np.testing.assert_allclose(V, utility_table(params.with_(b=b), data), atol=1e-10)


def test_wishart_draw_mean():
    hyper = Hyperparams()
    b = np.zeros((0, 2))
    # with no subjects D^{-1} ~ Wishart(9, (1/9) I) whose mean is I
    precisions = np.array([np.linalg.inv(sample_D(b, hyper, stream(5, k))) for k in range(3000)])
    np.testing.assert_allclose(precisions.mean(axis=0), np.eye(2), atol=0.08)


def test_random_effects_without_occasions_follow_their_prior():
    # no observed occasions, so the target of every b_i is N(0, D)
    data = make_panel([[]] * 500, J=3, d_z=2)
    C = np.ones((data.n, data.J), dtype=bool)
    D = np.array([[1.0, 0.5], [0.5, 2.0]])
    V = np.zeros((data.n, data.t_max, data.J))
    b = stream(6).multivariate_normal(np.zeros(2), D, size=data.n)
    draws, rates = [], []
    for g in range(100):
        b, V, accepted = sample_b(b, D, V, data, C, stream(7, g))
        draws.append(b)
        rates.append(accepted.mean())
    cov = np.cov(np.concatenate(draws).T)
    assert np.linalg.norm(cov - D) / np.linalg.norm(D) < 0.1
    assert 0.0 < np.mean(rates) < 1.0


def test_random_effect_acceptance_is_strictly_between_zero_and_one(small_sim):
    data = small_sim.data
    params = _params(data)
    V = utility_table(params, data)
    b, D = params.b, 0.5 * np.eye(data.d_z)
    accepted = np.concatenate([sample_b(b, D, V, data, small_sim.true_cs, stream(8, g))[2] for g in range(20)])
    assert 0.0 < accepted.mean() < 1.0


def test_delta_mode_matches_grid_search(small_sim):
    data = small_sim.data
    V = utility_table(_params(data), data)
    objective = delta_objective(V, 0.0, 1, data, small_sim.true_cs, 3.0)
    mode, _, _, converged = newton_mode(objective, np.zeros(1))
    assert converged

    centre, width = 0.0, 10.0
    for _ in range(4):
        grid = np.linspace(centre - width, centre + width, 2001)
        values = [objective(np.array([x]))[0] for x in grid]
        centre = grid[int(np.argmax(values))]
        width = 2.0 * (grid[1] - grid[0])
    assert mode[0] == pytest.approx(centre, abs=1e-6)


def test_never_considered_category_has_prior_mode():
    data = make_panel([[0, 2], [2]], J=3)
    C = np.array([[True, False, True], [False, False, True]])
    V = np.zeros((data.n, data.t_max, data.J))
    objective = delta_objective(V, 0.0, 1, data, C, 3.0)
    mode, H, _, converged = newton_mode(objective, np.array([0.7]))
    assert converged
    assert mode[0] == pytest.approx(0.0, abs=1e-12)
    assert H[0, 0] == pytest.approx(-1.0 / 3.0)


def test_beta_proposal_without_occasions_is_the_prior():
    data = make_panel([[], []], J=3, d_x=2)
    C = np.ones((data.n, data.J), dtype=bool)
    V_rest = np.zeros((data.n, data.t_max, data.J))
    objective = beta_objective(V_rest, data, C, 3.0)
    proposal = tailored_proposal(objective, np.array([0.3, -0.2]), 3.0 * np.eye(2), 1.0)
    assert not proposal.fallback
    np.testing.assert_allclose(proposal.mode, 0.0, atol=1e-12)
    np.testing.assert_allclose(proposal.cov, 3.0 * np.eye(2), rtol=1e-12)
