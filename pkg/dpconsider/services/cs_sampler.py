# dpconsider/services/cs_sampler.py
"""
Metropolis-Hastings update of consideration vectors, one coordinate at a time.

For coordinate j of subject i the candidate bit is 1 when j was ever chosen,
otherwise a Bernoulli(q_{S_i j}) draw. The prior term cancels against the
proposal, so a candidate is accepted with probability
min{1, L(C~) / L(C)}. Per-occasion log-denominators are cached: adding bit j
costs O(T_i); removing it recomputes the log-sum-exp over the smaller set, so
a dominant item leaving the set never cancels catastrophically.
"""

import logging
from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
from joblib import Parallel, delayed
from scipy.special import logsumexp, xlogy

from dpconsider.errors import InvalidProbabilityError
from dpconsider.models.dataset import PanelDataset
from dpconsider.models.state import ProposalLog, ResponseParams
from dpconsider.services.likelihood import NEG_INF, subject_loglik, utility_table
from dpconsider.utils.random_streams import STREAM_CS, stream

logger = logging.getLogger(__name__)


@dataclass
class SweepStats:
    """Proposal counts from one sweep, split by direction of the proposed flip."""

    proposals: np.ndarray  # (n,) coordinates visited
    accepted: np.ndarray  # (n,) visits whose candidate was kept (no-ops included)
    add_proposed: int = 0
    add_accepted: int = 0
    add_prob_sum: float = 0.0
    remove_proposed: int = 0
    remove_accepted: int = 0

    @property
    def accept_rate(self) -> float:
        total = self.proposals.sum()
        return float(self.accepted.sum() / total) if total else float("nan")


def cs_prior_logpmf(C_i: np.ndarray, q_row: np.ndarray) -> float:
    C_i = np.asarray(C_i, dtype=float)
    return float(np.sum(xlogy(C_i, q_row) + xlogy(1.0 - C_i, 1.0 - q_row)))


def conditional_cs_logpmf(
    i: int, C_i: np.ndarray, params: ResponseParams, q_row: np.ndarray, data: PanelDataset
) -> float:
    """Unnormalised log full conditional of C_i: likelihood + Bernoulli prior + forced inclusion."""
    q_row = np.asarray(q_row, dtype=float)
    if np.any(q_row < 0) or np.any(q_row > 1) or np.any(np.isnan(q_row)):
        raise InvalidProbabilityError("attention probabilities must lie in [0, 1]")
    C_i = np.asarray(C_i, dtype=bool)
    if not C_i[data.chosen[i]].all():
        return NEG_INF
    prior = cs_prior_logpmf(C_i, q_row)
    if np.isneginf(prior):
        return NEG_INF
    return subject_loglik(params, data, C_i, i) + prior


def _log_denominators(logV: np.ndarray, C: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """(m, T) log sum_{l in C} exp V_l; padded occasions and empty sets give 0."""
    with np.errstate(divide="ignore", invalid="ignore"):
        out = logsumexp(np.where(C[:, None, :], logV, NEG_INF), axis=2)
    return np.where(mask & np.isfinite(out), out, 0.0)


def sweep_block(
    V: np.ndarray,
    mask: np.ndarray,
    chosen: np.ndarray,
    C: np.ndarray,
    q: np.ndarray,
    rng: np.random.Generator,
    log: Optional[ProposalLog] = None,
    subject_offset: int = 0,
    iteration: int = 0,
) -> Tuple[np.ndarray, SweepStats]:
    """
    One randomized-order sweep over all J coordinates for a block of m subjects.

    V (m, T, J) utilities, mask (m, T), chosen (m, J) forced bits, C (m, J) current
    sets, q (m, J) attention probabilities of each subject's component.
    Returns the updated copy of C.
    """
    m, _, J = V.shape
    C = C.astype(bool).copy()
    rows = np.arange(m)

    logV = np.where(mask[:, :, None], V, NEG_INF)
    log_den = _log_denominators(logV, C, mask)

    order = rng.permuted(np.tile(np.arange(J), (m, 1)), axis=1)
    stats = SweepStats(proposals=np.zeros(m, dtype=int), accepted=np.zeros(m, dtype=int))

    for k in range(J):
        j = order[:, k]
        current = C[rows, j]
        forced = chosen[rows, j]
        draw = rng.random(m) < q[rows, j]
        u = rng.random(m)
        proposed = forced | draw
        change = proposed != current
        adding = change & proposed
        removing = change & ~proposed

        log_den_new = log_den.copy()
        if adding.any():
            v_j = logV[rows[adding], :, j[adding]]
            log_den_new[adding] = np.where(mask[adding], np.logaddexp(log_den[adding], v_j), 0.0)
        if removing.any():
            idx = rows[removing]
            smaller = C[idx].copy()
            smaller[np.arange(idx.size), j[removing]] = False
            log_den_new[removing] = _log_denominators(logV[idx], smaller, mask[idx])
        dll = np.sum(log_den - log_den_new, axis=1)
        # removing a never-chosen item only shrinks the denominators
        dll = np.where(removing, np.maximum(dll, 0.0), dll)
        accept_prob = np.where(change, np.exp(np.minimum(dll, 0.0)), 1.0)
        accepted = ~change | (u < accept_prob)

        flip = change & accepted
        C[rows[flip], j[flip]] = proposed[flip]
        log_den = np.where(flip[:, None], log_den_new, log_den)

        stats.proposals += 1
        stats.accepted += accepted
        stats.add_proposed += int(adding.sum())
        stats.add_accepted += int((adding & accepted).sum())
        stats.add_prob_sum += float(accept_prob[adding].sum())
        stats.remove_proposed += int(removing.sum())
        stats.remove_accepted += int((removing & accepted).sum())
        if log is not None:
            log.append(iteration, rows + subject_offset, j, current, proposed, accept_prob, accepted)

    return C, stats


def mh_update_cs(
    i: int,
    C_i: np.ndarray,
    params: ResponseParams,
    q_row: np.ndarray,
    data: PanelDataset,
    rng: np.random.Generator,
    log: Optional[ProposalLog] = None,
) -> Tuple[np.ndarray, ProposalLog]:
    """Single-subject sweep; returns the new C_i and the per-coordinate proposal log."""
    C_i = np.asarray(C_i, dtype=bool)
    if not C_i[data.chosen[i]].all():
        raise ValueError(f"subject {i}: current consideration set violates forced inclusion")
    sub = data.subset([i])
    V = utility_table(params.with_(b=params.b[[i]]), sub)
    log = log if log is not None else ProposalLog()
    C_new, _ = sweep_block(
        V, sub.mask, sub.chosen, C_i[None, :], np.asarray(q_row, dtype=float)[None, :], rng,
        log=log, subject_offset=i,
    )
    return C_new[0], log


def _merge(stats: List[SweepStats]) -> SweepStats:
    out = SweepStats(
        proposals=np.concatenate([s.proposals for s in stats]),
        accepted=np.concatenate([s.accepted for s in stats]),
    )
    for s in stats:
        out.add_proposed += s.add_proposed
        out.add_accepted += s.add_accepted
        out.add_prob_sum += s.add_prob_sum
        out.remove_proposed += s.remove_proposed
        out.remove_accepted += s.remove_accepted
    return out


class ConsiderationSetSampler:
    """
    Sweeps every subject's consideration vector.

    Subjects are cut into fixed blocks of `block_size`; block b of iteration g
    draws from stream(seed, g, STREAM_CS, b), so results do not depend on how
    many threads process the blocks.
    """

    def __init__(self, data: PanelDataset, seed: int, block_size: int = 64, threads: int = 1):
        self.data = data
        self.seed = seed
        self.block_size = block_size
        self.threads = threads
        self.blocks = [
            np.arange(start, min(start + block_size, data.n)) for start in range(0, data.n, block_size)
        ]

    def sweep(
        self,
        iteration: int,
        V: np.ndarray,
        C: np.ndarray,
        q_rows: np.ndarray,
        log: Optional[ProposalLog] = None,
    ) -> Tuple[np.ndarray, SweepStats]:
        """q_rows (n, J): attention probabilities of each subject's current component."""
        data = self.data

        def run(b: int):
            idx = self.blocks[b]
            block_log = ProposalLog() if log is not None else None
            rng = stream(self.seed, iteration, STREAM_CS, b)
            C_b, stats = sweep_block(
                V[idx], data.mask[idx], data.chosen[idx], C[idx], q_rows[idx], rng,
                log=block_log, subject_offset=int(idx[0]), iteration=iteration,
            )
            return C_b, stats, block_log

        if self.threads > 1 and len(self.blocks) > 1:
            results = Parallel(n_jobs=self.threads, prefer="threads")(
                delayed(run)(b) for b in range(len(self.blocks))
            )
        else:
            results = [run(b) for b in range(len(self.blocks))]

        C_new = np.concatenate([r[0] for r in results], axis=0) if results else C.copy()
        if log is not None:
            for r in results:
                log.extend(r[2])
        return C_new, _merge([r[1] for r in results]) if results else SweepStats(np.zeros(0, int), np.zeros(0, int))
