# dpconsider/services/dp_sampler.py
"""
Slice sampler for the stick-breaking mixture of independent-Bernoulli
consideration models.

Components are stored densely as 0..K*-1 and never relabelled during a run.
One pass follows the order sticks -> attention rows -> slices (+ extension)
-> assignments -> concentration.
"""

import logging
from typing import Tuple

import numpy as np

from dpconsider.errors import InvariantBreach
from dpconsider.models.hyper import Hyperparams
from dpconsider.models.state import ClusterStats, MixtureState, stick_weights
from dpconsider.utils.distributions import categorical_rows, clamp_prob, safe_beta_rvs

logger = logging.getLogger(__name__)

MAX_COMPONENTS = 10_000


def bernoulli_loglik_matrix(C: np.ndarray, q: np.ndarray) -> np.ndarray:
    """(n, K) sum_j [C_ij log q_hj + (1 - C_ij) log(1 - q_hj)], q clamped away from 0/1."""
    q = clamp_prob(q)
    Cf = C.astype(float)
    return Cf @ np.log(q).T + (1.0 - Cf) @ np.log1p(-q).T


def sample_q(stats: ClusterStats, hyper: Hyperparams, rng: np.random.Generator) -> np.ndarray:
    """Conjugate Beta draws per (component, category); empty components draw from the prior."""
    K, J = stats.inclusion.shape
    if K < 1:
        raise ValueError("need at least one active component")
    a, b = hyper.q_beta_params(J)
    A = a[None, :] + stats.inclusion
    B = b[None, :] + stats.sizes[:, None] - stats.inclusion
    return safe_beta_rvs(A, B, rng)


def sample_sticks(stats: ClusterStats, alpha: float, rng: np.random.Generator) -> np.ndarray:
    """V_h ~ Beta(1 + n_h, alpha + sum_{l>h} n_l); empty tails reduce to Beta(1, alpha)."""
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    sizes = stats.sizes
    tail = np.concatenate((np.cumsum(sizes[::-1])[::-1][1:], [0.0]))
    return safe_beta_rvs(1.0 + sizes, alpha + tail, rng)


def sample_slices(S: np.ndarray, omega: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """u_i ~ Uniform(0, omega_{S_i}]."""
    return omega[S] * (1.0 - rng.random(S.shape[0]))


def extend_sticks(
    V: np.ndarray,
    q: np.ndarray,
    u: np.ndarray,
    alpha: float,
    hyper: Hyperparams,
    rng: np.random.Generator,
) -> Tuple[np.ndarray, np.ndarray]:
    """
    Grow (sticks, rows) from their priors until sum_{l<=K*} omega_l > 1 - min u,
    then cut back to the smallest such K*. Occupied components are never cut:
    u_i <= omega_{S_i} rules out S_i > K*.
    """
    J = q.shape[1]
    a, b = hyper.q_beta_params(J)
    threshold = 1.0 - u.min()
    V = np.asarray(V, dtype=float)
    q = np.asarray(q, dtype=float)
    while stick_weights(V).sum() <= threshold:
        if V.shape[0] >= MAX_COMPONENTS:
            raise InvariantBreach(f"stick extension exceeded {MAX_COMPONENTS} components")
        V = np.append(V, safe_beta_rvs(1.0, alpha, rng))
        q = np.vstack([q, safe_beta_rvs(a, b, rng)[None, :]])
    cum = np.cumsum(stick_weights(V))
    k_star = int(np.argmax(cum > threshold)) + 1
    return V[:k_star], q[:k_star]


def sample_assignments(
    C: np.ndarray, u: np.ndarray, omega: np.ndarray, q: np.ndarray, rng: np.random.Generator
) -> np.ndarray:
    """S_i from the categorical over {h <= K*: omega_h >= u_i} weighted by prod_j Bernoulli(C_ij | q_hj)."""
    logw = bernoulli_loglik_matrix(C, q)
    admissible = omega[None, :] >= u[:, None]
    if not admissible.any(axis=1).all():
        bad = np.nonzero(~admissible.any(axis=1))[0]
        raise InvariantBreach(f"no admissible component for subjects {bad[:10].tolist()}")
    logw = np.where(admissible, logw, -np.inf)
    return categorical_rows(logw, rng)


def alpha_mixture_weight(a_alpha: float, G: int, n: int, rate: float) -> float:
    """Weight of Gamma(a_alpha + G, rate) in the concentration-parameter mixture."""
    shape = a_alpha + G - 1.0
    return shape / (shape + n * rate)


def sample_alpha(S: np.ndarray, alpha: float, hyper: Hyperparams, rng: np.random.Generator) -> float:
    """Auxiliary-variable update: eta ~ Beta(alpha + 1, n), then a two-component Gamma mixture."""
    n = int(S.shape[0])
    G = int(np.unique(S).size)
    if G < 1:
        raise ValueError("at least one occupied component is required")
    eta = rng.beta(alpha + 1.0, n)
    rate = hyper.b_alpha - np.log(eta)
    w = alpha_mixture_weight(hyper.a_alpha, G, n, rate)
    shape = hyper.a_alpha + G if rng.random() < w else hyper.a_alpha + G - 1.0
    return float(rng.gamma(shape, 1.0 / rate))


def initial_mixture(n: int, J: int, hyper: Hyperparams, rng: np.random.Generator) -> MixtureState:
    """One component holding every subject, alpha at its prior mean."""
    alpha = hyper.a_alpha / hyper.b_alpha
    a, b = hyper.q_beta_params(J)
    V = np.atleast_1d(safe_beta_rvs(1.0 + n, alpha, rng))
    q = safe_beta_rvs(a, b, rng)[None, :]
    S = np.zeros(n, dtype=int)
    u = stick_weights(V)[S] * (1.0 - rng.random(n))
    V, q = extend_sticks(V, q, u, alpha, hyper, rng)
    return MixtureState(V=V, q=q, S=S, u=u, alpha=alpha)


def dp_step(state: MixtureState, C: np.ndarray, hyper: Hyperparams, rng: np.random.Generator) -> MixtureState:
    """One full pass over the mixture block given the current consideration sets."""
    stats = ClusterStats.from_assignments(state.S, C, state.k_star)
    V = sample_sticks(stats, state.alpha, rng)
    q = sample_q(stats, hyper, rng)
    u = sample_slices(state.S, stick_weights(V), rng)
    V, q = extend_sticks(V, q, u, state.alpha, hyper, rng)
    S = sample_assignments(C, u, stick_weights(V), q, rng)
    alpha = sample_alpha(S, state.alpha, hyper, rng)
    return MixtureState(V=V, q=q, S=S, u=u, alpha=alpha)
