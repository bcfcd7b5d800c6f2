# dpconsider/services/simulate.py
"""
Synthetic panels with known consideration sets, and draws from the prior the
mixture model implies over consideration sets.
"""

import logging
from dataclasses import dataclass
from typing import Mapping, Optional, Union

import numpy as np
import pandas as pd

from dpconsider.errors import InvalidPmfError
from dpconsider.models.dataset import PanelDataset
from dpconsider.models.hyper import Hyperparams
from dpconsider.models.state import stick_weights
from dpconsider.services.oracle import check_enumerable, mixture_cs_pmf, subset_label, subset_matrix
from dpconsider.utils.distributions import safe_beta_rvs
from dpconsider.utils.random_streams import stream

logger = logging.getLogger(__name__)

COVARIATE_VARIANCE = 2.0
LARGE_J_BASE_PROB = 0.05
LARGE_J_HIGH_PROB = 0.8
# subset pmfs are enumerated up to this J; beyond it only per-item inclusion is kept
PRIOR_SUBSET_LIMIT = 12

PmfLike = Union[np.ndarray, Mapping[int, float]]


@dataclass(frozen=True)
class SimulatedPanel:
    data: PanelDataset
    true_cs: np.ndarray
    holdout: Optional[PanelDataset] = None
    subpopulation: Optional[np.ndarray] = None


def normalize_cs_pmf(cs_pmf: PmfLike, J: int) -> np.ndarray:
    """Dense pmf over the 2^J subset codes; must put no mass on the empty set and sum to 1."""
    check_enumerable(J)
    if isinstance(cs_pmf, Mapping):
        dense = np.zeros(2 ** J)
        for code, p in cs_pmf.items():
            if not 0 <= int(code) < 2 ** J:
                raise InvalidPmfError(f"subset code {code} outside 0..{2 ** J - 1}")
            dense[int(code)] += float(p)
    else:
        dense = np.asarray(cs_pmf, dtype=float)
        if dense.shape != (2 ** J,):
            raise InvalidPmfError(f"pmf must have {2 ** J} entries, got {dense.shape}")
    if np.any(dense < 0):
        raise InvalidPmfError("pmf has negative entries")
    if dense[0] != 0:
        raise InvalidPmfError("pmf assigns mass to the empty consideration set")
    if abs(dense.sum() - 1.0) > 1e-9:
        raise InvalidPmfError(f"pmf sums to {dense.sum()}, expected 1")
    return dense


def draw_responses(V: np.ndarray, C: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Logit responses restricted to each subject's set (Gumbel-max). V (n, T, J), C (n, J)."""
    scores = np.where(C[:, None, :], V + rng.gumbel(size=V.shape), -np.inf)
    return np.argmax(scores, axis=2)


def _assemble(
    X: np.ndarray, C: np.ndarray, beta_star: float, T: int, holdout_T: int, z_equals_x: bool,
    rng: np.random.Generator, subpopulation: Optional[np.ndarray] = None,
) -> SimulatedPanel:
    n = X.shape[0]
    y = draw_responses(beta_star * X[..., 0], C, rng)
    Z = X.copy() if z_equals_x else np.zeros(X.shape[:3] + (0,))
    ids = np.arange(1, n + 1)

    def panel(sl: slice) -> PanelDataset:
        y_part = y[:, sl]
        return PanelDataset(
            T=np.full(n, y_part.shape[1]), y=y_part, X=X[:, sl], Z=Z[:, sl], subject_ids=ids,
        )

    holdout = panel(slice(T, T + holdout_T)) if holdout_T else None
    return SimulatedPanel(data=panel(slice(0, T)), true_cs=C, holdout=holdout, subpopulation=subpopulation)


def simulate_small(
    n: int,
    T: int,
    J: int,
    beta_star: float,
    cs_pmf: PmfLike,
    seed: int,
    z_equals_x: bool = False,
    holdout_T: int = 0,
) -> SimulatedPanel:
    """True sets drawn from a pmf over nonempty subsets; V_ijt = beta* x_ijt with x ~ N(0, 2)."""
    pmf = normalize_cs_pmf(cs_pmf, J)
    rng = stream(seed)
    codes = rng.choice(2 ** J, size=n, p=pmf)
    C = subset_matrix(J)[codes].copy()
    X = rng.normal(0.0, np.sqrt(COVARIATE_VARIANCE), size=(n, T + holdout_T, J, 1))
    logger.info("Simulated small-J panel: n=%d, T=%d, J=%d, beta*=%g", n, T, J, beta_star)
    return _assemble(X, C, beta_star, T, holdout_T, z_equals_x, rng)


def two_population_attention(J: int = 100) -> np.ndarray:
    """(2, J) attention probabilities: 0.05 everywhere, 0.8 on 10,30,...,90 (first) or 20,40,...,100 (second)."""
    q = np.full((2, J), LARGE_J_BASE_PROB)
    q[0, np.arange(9, J, 20)] = LARGE_J_HIGH_PROB
    q[1, np.arange(19, J, 20)] = LARGE_J_HIGH_PROB
    return q


def draw_nonempty_sets(q_rows: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Independent Bernoulli rows, redrawing any empty row until it is nonempty."""
    C = rng.random(q_rows.shape) < q_rows
    empty = ~C.any(axis=1)
    while empty.any():
        C[empty] = rng.random((int(empty.sum()), q_rows.shape[1])) < q_rows[empty]
        empty = ~C.any(axis=1)
    return C


def simulate_large_two_pop(
    n: int = 100,
    J: int = 100,
    T: int = 20,
    seed: int = 0,
    beta_star: float = 1.0,
    z_equals_x: bool = False,
    holdout_T: int = 0,
) -> SimulatedPanel:
    """First half of the subjects from subpopulation 1, second half from subpopulation 2."""
    rng = stream(seed)
    subpop = (np.arange(n) >= n // 2).astype(int)
    q = two_population_attention(J)
    C = draw_nonempty_sets(q[subpop], rng)
    X = rng.normal(0.0, np.sqrt(COVARIATE_VARIANCE), size=(n, T + holdout_T, J, 1))
    logger.info("Simulated two-subpopulation panel: n=%d, T=%d, J=%d", n, T, J)
    return _assemble(X, C, beta_star, T, holdout_T, z_equals_x, rng, subpopulation=subpop)


@dataclass(frozen=True)
class PriorCsDraws:
    """Draws of the implied prior over consideration sets."""

    inclusion: np.ndarray  # (draws, J) Pr(j in C)
    residual: np.ndarray  # (draws,) 1 - sum_{h<=K} omega_h before closing the stick
    subset_probs: Optional[np.ndarray] = None  # (draws, 2^J) when J is small

    def quantiles(self) -> pd.DataFrame:
        """q05/q50/q95 of every subset probability (nonempty subsets, bitmask order)."""
        if self.subset_probs is None:
            raise ValueError("subset probabilities are only kept for small J")
        J = self.inclusion.shape[1]
        probs = self.subset_probs[:, 1:]
        qs = np.quantile(probs, [0.05, 0.5, 0.95], axis=0)
        codes = np.arange(1, 2 ** J)
        return pd.DataFrame({
            "bitmask": codes,
            "subset": [subset_label(int(m), J) for m in codes],
            "q05": qs[0], "q50": qs[1], "q95": qs[2],
        })


def simulate_prior_cs(hyper: Hyperparams, K: int, n_draws: int, seed: int, J: int) -> PriorCsDraws:
    """
    alpha ~ Gamma, V_h ~ Beta(1, alpha), omega by stick-breaking truncated at K,
    q_hj ~ Beta priors; subset probabilities from the mixture of product measures.

    The last stick absorbs the truncation residual so every draw is a proper pmf.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    rng = stream(seed)
    a_q, b_q = hyper.q_beta_params(J)
    keep_subsets = J <= PRIOR_SUBSET_LIMIT
    inclusion = np.zeros((n_draws, J))
    residual = np.zeros(n_draws)
    subset_probs = np.zeros((n_draws, 2 ** J)) if keep_subsets else None
    for g in range(n_draws):
        alpha = rng.gamma(hyper.a_alpha, 1.0 / hyper.b_alpha)
        V = safe_beta_rvs(np.ones(K), np.full(K, alpha), rng)
        omega = stick_weights(V)
        residual[g] = 1.0 - omega.sum()
        omega[-1] += residual[g]
        q = safe_beta_rvs(np.tile(a_q, (K, 1)), np.tile(b_q, (K, 1)), rng)
        inclusion[g] = omega @ q
        if keep_subsets:
            subset_probs[g] = mixture_cs_pmf(omega, q, check_weights=False).pmf
    return PriorCsDraws(inclusion=inclusion, residual=residual, subset_probs=subset_probs)
