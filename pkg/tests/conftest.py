# tests/conftest.py

import numpy as np
import pytest

from dpconsider.models.dataset import PanelDataset
from dpconsider.models.hyper import McmcSettings, ModelVariant, RunConfig
from dpconsider.models.state import ResponseParams
from dpconsider.services.simulate import simulate_small

SMALL_PMF = {
    0b0111: 0.3, 0b0011: 0.2, 0b1010: 0.15, 0b1111: 0.15, 0b0100: 0.1, 0b1110: 0.1,
}


def make_panel(y, J, d_x=1, d_z=0, seed=0, T=None):
    """Panel from a list of per-subject response lists (0-based), covariates N(0, 2)."""
    rng = np.random.default_rng(seed)
    n = len(y)
    T = np.array([len(r) for r in y]) if T is None else np.asarray(T)
    t_max = max(int(T.max()), 1) if n else 0
    Y = np.full((n, t_max), -1, dtype=int)
    for i, r in enumerate(y):
        Y[i, :len(r)] = r
    X = rng.normal(0.0, np.sqrt(2.0), size=(n, t_max, J, d_x))
    Z = rng.normal(0.0, 1.0, size=(n, t_max, J, d_z))
    mask = np.arange(t_max)[None, :] < T[:, None]
    X[~mask] = 0.0
    Z[~mask] = 0.0
    return PanelDataset(T=T, y=Y, X=X, Z=Z, subject_ids=np.arange(1, n + 1))


@pytest.fixture
def micro_data():
    """J=3, two subjects with unbalanced panels."""
    return make_panel([[0, 0, 1], [2]], J=3, d_x=1, d_z=1, seed=11)


@pytest.fixture
def micro_params():
    return ResponseParams(
        delta=np.array([0.5, -0.3, 0.0]), beta=np.array([0.8]),
        b=np.array([[0.2], [-0.4]]), D=np.array([[0.5]]),
    )


@pytest.fixture(scope="session")
def small_sim():
    return simulate_small(n=30, T=5, J=4, beta_star=1.0, cs_pmf=SMALL_PMF, seed=3, z_equals_x=True, holdout_T=2)


@pytest.fixture
def quick_config():
    def build(variant=ModelVariant.MNL_RC, iters=40, **mcmc):
        settings = dict(iters=iters, burnin=10, seed=5, report_every=10, cs_block_size=8)
        settings.update(mcmc)
        return RunConfig(variant=variant, mcmc=McmcSettings(**settings))

    return build
