# dpconsider/services/oracle.py
"""
Exact references for small J by enumerating subsets.

Subset m (0 <= m < 2^J) contains category j (0-based) iff bit j of m is set, so
m = 0 is the empty set and 1..2^J-1 are the admissible consideration sets.
"""

from dataclasses import dataclass
from functools import lru_cache
from typing import Tuple

import numpy as np
from scipy.special import logsumexp

from dpconsider.errors import EnumerationLimitError, InvalidPmfError
from dpconsider.models.dataset import PanelDataset
from dpconsider.models.state import ResponseParams
from dpconsider.services.cs_sampler import conditional_cs_logpmf
from dpconsider.services.likelihood import NEG_INF, response_probs, utilities

ENUMERATION_LIMIT = 20


def check_enumerable(J: int):
    if J > ENUMERATION_LIMIT:
        raise EnumerationLimitError(f"J = {J} exceeds the enumeration limit of {ENUMERATION_LIMIT}")


@lru_cache(maxsize=8)
def subset_matrix(J: int) -> np.ndarray:
    """(2^J, J) bool matrix; row m is the membership vector of subset m."""
    check_enumerable(J)
    m = np.arange(2 ** J)[:, None]
    out = ((m >> np.arange(J)[None, :]) & 1).astype(bool)
    out.setflags(write=False)
    return out


def to_bitmask(C: np.ndarray) -> np.ndarray:
    """Membership rows (..., J) -> integer subset codes."""
    C = np.asarray(C, dtype=np.int64)
    return (C << np.arange(C.shape[-1])).sum(axis=-1)


def subset_label(m: int, J: int) -> str:
    """'{1,3}' style label with 1-based categories."""
    return "{" + ",".join(str(j + 1) for j in range(J) if (m >> j) & 1) + "}"


def parse_subset(text: str) -> int:
    """Inverse of subset_label; also accepts space or semicolon separated lists."""
    body = text.strip().strip("{}").replace(";", ",").replace(" ", ",")
    m = 0
    for tok in filter(None, body.split(",")):
        j = int(tok)
        if j < 1:
            raise ValueError(f"categories are 1-based, got {j}")
        m |= 1 << (j - 1)
    return m


@dataclass(frozen=True)
class CsPmf:
    """pmf over all 2^J subsets (index 0 = empty set)."""

    pmf: np.ndarray

    @property
    def empty_mass(self) -> float:
        return float(self.pmf[0])

    def nonempty(self) -> np.ndarray:
        """pmf restricted to nonempty subsets and renormalised (index 0 set to 0)."""
        out = self.pmf.copy()
        out[0] = 0.0
        total = out.sum()
        return out / total if total > 0 else out


def _product_measure(B: np.ndarray, Q: np.ndarray) -> np.ndarray:
    """(M, K) prod_j q_hj^{B_mj} (1 - q_hj)^{1 - B_mj}."""
    M, J = B.shape
    P = np.ones((M, Q.shape[0]))
    for j in range(J):
        P *= np.where(B[:, j, None], Q[None, :, j], 1.0 - Q[None, :, j])
    return P


def mixture_cs_pmf(omega: np.ndarray, Q: np.ndarray, check_weights: bool = True) -> CsPmf:
    """p_c = sum_h omega_h prod_{j in c} q_hj prod_{j not in c} (1 - q_hj), for every subset c."""
    omega = np.asarray(omega, dtype=float)
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    J = Q.shape[1]
    check_enumerable(J)
    if check_weights and abs(omega.sum() - 1.0) > 1e-9:
        raise InvalidPmfError(f"mixture weights sum to {omega.sum()}, expected 1")
    return CsPmf(_product_measure(subset_matrix(J), Q) @ omega)


def enumerate_cs_posterior(
    i: int, params: ResponseParams, q_row: np.ndarray, data: PanelDataset
) -> np.ndarray:
    """Exact full conditional of C_i over all 2^J subsets; inadmissible subsets get exactly 0."""
    J = data.J
    B = subset_matrix(J)
    T_i = int(data.T[i])
    V = np.array([utilities(params, data, i, t) for t in range(T_i)]).reshape(T_i, J)
    y = data.y[i, :T_i]

    admissible = B[:, data.chosen[i]].all(axis=1) & B.any(axis=1)
    masked = np.where(B[:, None, :], V[None, :, :], NEG_INF)
    with np.errstate(invalid="ignore", divide="ignore"):
        log_den = logsumexp(masked, axis=2)
    loglik = (V[np.arange(T_i), y][None, :] - log_den).sum(axis=1)

    q = np.asarray(q_row, dtype=float)
    with np.errstate(divide="ignore"):
        prior = np.where(B, np.log(q)[None, :], np.log1p(-q)[None, :]).sum(axis=1)
    logp = np.where(admissible, loglik + prior, NEG_INF)
    logp = np.where(np.isnan(logp), NEG_INF, logp)
    out = np.zeros(2 ** J)
    ok = np.isfinite(logp)
    out[ok] = np.exp(logp[ok] - logsumexp(logp[ok]))
    return out


def enumerate_cs_posterior_reference(
    i: int, params: ResponseParams, q_row: np.ndarray, data: PanelDataset
) -> np.ndarray:
    """Subset-by-subset evaluation through conditional_cs_logpmf (slow, for cross-checks)."""
    J = data.J
    B = subset_matrix(J)
    logp = np.full(2 ** J, NEG_INF)
    for m in range(1, 2 ** J):
        logp[m] = conditional_cs_logpmf(i, B[m], params, q_row, data)
    out = np.zeros(2 ** J)
    ok = np.isfinite(logp)
    out[ok] = np.exp(logp[ok] - logsumexp(logp[ok]))
    return out


def marginal_response_prob(
    j: int, params: ResponseParams, data: PanelDataset, i: int, t: int, cs_pmf: np.ndarray
) -> float:
    """Pr(Y_it = j) = sum_c Pr(Y_it = j | c) p_c over nonempty c (renormalised if p_empty > 0)."""
    J = data.J
    B = subset_matrix(J)
    pmf = CsPmf(np.asarray(cs_pmf, dtype=float)).nonempty()
    V = utilities(params, data, i, t)
    probs = response_probs(np.broadcast_to(V, B.shape)[1:], B[1:])
    return float(probs[:, j] @ pmf[1:])


def total_variation(p: np.ndarray, q: np.ndarray) -> float:
    return float(0.5 * np.abs(np.asarray(p) - np.asarray(q)).sum())


def l1_distance(p: np.ndarray, q: np.ndarray) -> float:
    return float(np.abs(np.asarray(p) - np.asarray(q)).sum())


def empirical_subset_pmf(C_draws: np.ndarray) -> np.ndarray:
    """(G, J) membership draws -> empirical pmf over the 2^J subsets."""
    J = C_draws.shape[-1]
    check_enumerable(J)
    codes = to_bitmask(C_draws)
    return np.bincount(codes, minlength=2 ** J) / codes.shape[0]


def random_mixture(K: int, J: int, rng: np.random.Generator) -> Tuple[np.ndarray, np.ndarray]:
    """Random (omega, Q) with omega on the simplex; used for oracle self-checks."""
    omega = rng.dirichlet(np.ones(K))
    Q = rng.random((K, J))
    return omega, Q
