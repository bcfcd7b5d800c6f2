# dpconsider/services/likelihood.py
"""
Logit response probabilities restricted to consideration sets.

Everything is evaluated in log space. A response outside the consideration set
has log-probability NEG_INF; acceptance code treats it as "probability zero"
and never exponentiates it directly.
"""

import numpy as np
from scipy.special import logsumexp

from dpconsider.errors import EmptyConsiderationSetError
from dpconsider.models.dataset import PanelDataset
from dpconsider.models.state import ResponseParams

NEG_INF = -np.inf


def _check_index(data: PanelDataset, i: int, t: int = None):
    if not 0 <= i < data.n:
        raise IndexError(f"subject index {i} out of range 0..{data.n - 1}")
    if t is not None and not 0 <= t < data.T[i]:
        raise IndexError(f"occasion index {t} out of range for subject {i} (T_i={data.T[i]})")


def utilities(params: ResponseParams, data: PanelDataset, i: int, t: int) -> np.ndarray:
    """V_{i.t} = delta + X_{i.t} beta + Z_{i.t} b_i, length J."""
    _check_index(data, i, t)
    v = params.delta + data.X[i, t] @ params.beta
    if data.d_z:
        v = v + data.Z[i, t] @ params.b[i]
    return v


def utility_table(params: ResponseParams, data: PanelDataset) -> np.ndarray:
    """(n, T_max, J) utilities for every subject and occasion (padding included)."""
    V = params.delta[None, None, :] + data.X @ params.beta
    if data.d_z:
        V = V + np.einsum("itjd,id->itj", data.Z, params.b)
    return V


def choice_prob(j: int, C: np.ndarray, V: np.ndarray) -> float:
    """exp(V_j) / sum_{l in C} exp(V_l) if j is in C, else exactly 0."""
    C = np.asarray(C, dtype=bool)
    if not C.any():
        raise EmptyConsiderationSetError("Consideration set is empty")
    if not C[j]:
        return 0.0
    return float(np.exp(V[j] - logsumexp(V[C])))


def occasion_logprobs(V: np.ndarray, C: np.ndarray, y: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """
    log Pr(y_it | C_i) for a block of subjects; padded occasions contribute 0.

    V (m, T, J), C (m, J) bool, y (m, T) 0-based (padding may hold any valid index),
    mask (m, T).
    """
    C = C.astype(bool)
    masked = np.where(C[:, None, :], V, NEG_INF)
    with np.errstate(invalid="ignore", divide="ignore"):
        log_den = logsumexp(masked, axis=2)
        chosen = np.take_along_axis(masked, y[:, :, None], axis=2)[:, :, 0]
        lp = chosen - log_den
    return np.where(mask, lp, 0.0)


def subject_logliks(V: np.ndarray, C: np.ndarray, data: PanelDataset) -> np.ndarray:
    """(n,) per-subject log-likelihoods; NEG_INF where a response lies outside C_i."""
    return occasion_logprobs(V, C, data.y_safe, data.mask).sum(axis=1)


def subject_loglik(params: ResponseParams, data: PanelDataset, C_i: np.ndarray, i: int) -> float:
    """sum_t log Pr(y_it | C_i); NEG_INF if some y_it is not in C_i."""
    _check_index(data, i)
    C_i = np.asarray(C_i, dtype=bool)
    if data.chosen[i].any() and not C_i[data.chosen[i]].all():
        return NEG_INF
    T_i = int(data.T[i])
    total = 0.0
    for t in range(T_i):
        v = utilities(params, data, i, t)
        total += v[data.y[i, t]] - logsumexp(v[C_i])
    return float(total)


def panel_loglik(params: ResponseParams, data: PanelDataset, C: np.ndarray) -> float:
    """sum_i subject_loglik; NEG_INF propagates."""
    V = utility_table(params, data)
    lls = subject_logliks(V, np.asarray(C, dtype=bool), data)
    if np.any(np.isneginf(lls)):
        return NEG_INF
    return float(lls.sum())


def response_probs(V: np.ndarray, C: np.ndarray) -> np.ndarray:
    """Softmax of V over the consideration set along the last axis; 0 outside it."""
    C = np.asarray(C, dtype=bool)
    masked = np.where(C, V, NEG_INF)
    top = np.max(masked, axis=-1, keepdims=True)
    w = np.where(C, np.exp(masked - top), 0.0)
    return w / w.sum(axis=-1, keepdims=True)
