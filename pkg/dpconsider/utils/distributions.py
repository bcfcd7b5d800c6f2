# dpconsider/utils/distributions.py

import numpy as np
from scipy.stats import wishart

PROB_FLOOR = 1e-12


def clamp_prob(p):
    return np.clip(p, PROB_FLOOR, 1.0 - PROB_FLOOR)


def log_gamma_rvs(shape, rng: np.random.Generator):
    """log of Gamma(shape, 1) draws, stable for very small shapes.

    Uses Gamma(a) = Gamma(a+1) * U**(1/a), evaluated in log space.
    """
    shape = np.asarray(shape, dtype=float)
    g = rng.gamma(shape + 1.0)
    u = rng.random(shape.shape)
    # 1 - u lies in (0, 1]
    return np.log(g) + np.log1p(-u) / shape


def safe_beta_rvs(a, b, rng: np.random.Generator):
    """Beta(a, b) draws that never return exact 0 or 1."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if np.any(a <= 0) or np.any(b <= 0):
        raise ValueError("Beta parameters must be strictly positive")
    a, b = np.broadcast_arrays(a, b)
    la = log_gamma_rvs(a, rng)
    lb = log_gamma_rvs(b, rng)
    return clamp_prob(np.exp(la - np.logaddexp(la, lb)))


def wishart_rvs(df: float, scale: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """One Wishart(df, scale) draw as a 2-d array (scipy uses the Bartlett construction)."""
    scale = np.atleast_2d(scale)
    draw = wishart(df=df, scale=scale).rvs(random_state=rng)
    return np.atleast_2d(draw)


def categorical_rows(log_weights: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Draw one index per row from unnormalised log-weights (-inf = excluded)."""
    top = np.max(log_weights, axis=1, keepdims=True)
    w = np.exp(log_weights - top)
    cdf = np.cumsum(w, axis=1)
    r = rng.random(log_weights.shape[0])[:, None] * cdf[:, -1:]
    idx = np.sum(cdf <= r, axis=1)
    return np.minimum(idx, log_weights.shape[1] - 1)
