# tests/test_simulate.py

import numpy as np
import pytest
from scipy.stats import chisquare

from dpconsider.errors import InvalidPmfError
from dpconsider.models.dataset import validate_dataset
from dpconsider.models.hyper import Hyperparams
from dpconsider.services.simulate import (
    draw_nonempty_sets,
    normalize_cs_pmf,
    simulate_large_two_pop,
    simulate_prior_cs,
    simulate_small,
    two_population_attention,
)
from dpconsider.utils.random_streams import stream
from tests.conftest import SMALL_PMF


def test_full_set_with_zero_slope_gives_uniform_responses():
    sim = simulate_small(n=1000, T=10, J=4, beta_star=0.0, cs_pmf={0b1111: 1.0}, seed=1)
    counts = np.bincount(sim.data.y.ravel(), minlength=4)
    assert chisquare(counts).pvalue > 0.001


def test_singleton_set_fixes_every_response():
    sim = simulate_small(n=50, T=4, J=4, beta_star=1.0, cs_pmf={0b0010: 1.0}, seed=2)
    assert np.all(sim.data.y == 1)


def test_simulated_panel_is_valid_and_consistent(small_sim):
    data = small_sim.data
    assert validate_dataset(data) == []
    assert (data.n, data.t_max, data.J, data.d_x, data.d_z) == (30, 5, 4, 1, 1)
    np.testing.assert_array_equal(data.X, data.Z)
    # every response lies in the true set
    assert not (data.chosen & ~small_sim.true_cs).any()
    assert small_sim.holdout.t_max == 2
    assert not (small_sim.holdout.chosen & ~small_sim.true_cs).any()


def test_covariate_variance():
    sim = simulate_small(n=500, T=10, J=4, beta_star=1.0, cs_pmf=SMALL_PMF, seed=3)
    assert sim.data.X.var() == pytest.approx(2.0, rel=0.05)


def test_same_seed_same_panel():
    a = simulate_small(n=20, T=3, J=4, beta_star=1.0, cs_pmf=SMALL_PMF, seed=4)
    b = simulate_small(n=20, T=3, J=4, beta_star=1.0, cs_pmf=SMALL_PMF, seed=4)
    np.testing.assert_array_equal(a.data.y, b.data.y)
    np.testing.assert_array_equal(a.true_cs, b.true_cs)


@pytest.mark.parametrize("pmf", [{0b0011: 0.5, 0b0001: 0.4}, {0: 0.1, 0b0011: 0.9}, {0b0011: 1.2, 0b0001: -0.2}])
def test_invalid_pmfs(pmf):
    with pytest.raises(InvalidPmfError):
        normalize_cs_pmf(pmf, 4)


def test_two_population_design():
    q = two_population_attention(100)
    assert q[0, 9] == 0.8 and q[1, 19] == 0.8 and q[0, 19] == 0.05
    assert (q[0] == 0.8).sum() == 5 and (q[1] == 0.8).sum() == 5
    C = draw_nonempty_sets(np.tile(q[0], (10_000, 1)), stream(5))
    assert C.any(axis=1).all()
    assert C.sum(axis=1).mean() == pytest.approx(8.75, abs=0.2)
    assert C[:, 9].mean() == pytest.approx(0.8, abs=0.02)


def test_large_design_subpopulations():
    sim = simulate_large_two_pop(n=100, J=100, T=3, seed=6)
    assert sim.data.J == 100
    np.testing.assert_array_equal(sim.subpopulation, np.repeat([0, 1], 50))
    assert sim.true_cs.any(axis=1).all()
    first, second = sim.true_cs[:50], sim.true_cs[50:]
    assert first[:, 9].mean() > second[:, 9].mean()


def test_prior_sets_with_uniform_attention_center_on_product():
    hyper = Hyperparams(q_prior="beta", a_q=1.0, b_q=1.0)
    draws = simulate_prior_cs(hyper, K=20, n_draws=2000, seed=7, J=4)
    np.testing.assert_allclose(draws.subset_probs.sum(axis=1), 1.0, atol=1e-12)
    means = draws.subset_probs.mean(axis=0)
    np.testing.assert_allclose(means, 0.0625, atol=0.01)


def test_sparsity_prior_shrinks_large_sets():
    draws = simulate_prior_cs(Hyperparams(), K=20, n_draws=2000, seed=8, J=4)
    table = draws.quantiles()
    sizes = table["subset"].str.count(",") + 1
    medians = table.groupby(sizes)["q50"].mean()
    assert medians.is_monotonic_decreasing
    assert np.median(draws.residual) < 0.01
    assert list(table.columns) == ["bitmask", "subset", "q05", "q50", "q95"]


def test_large_j_prior_keeps_inclusion_only():
    draws = simulate_prior_cs(Hyperparams(), K=10, n_draws=50, seed=9, J=30)
    assert draws.subset_probs is None
    assert draws.inclusion.shape == (50, 30)
    with pytest.raises(ValueError):
        draws.quantiles()
