# dpconsider/services/oracle_check.py
"""
Sampler-versus-oracle checks on micro instances.

    cs_stationary      consideration-set sweeps vs the enumerated full conditional
    slice_assignment   slice-sampled assignments vs direct categorical normalisation
    mixture_pmf_sum    the subset pmf of random mixtures sums to 1
    exclusion_accept   proposals dropping a never-chosen item are always accepted
"""

import logging
from typing import List

import numpy as np

from dpconsider.models.dataset import PanelDataset
from dpconsider.models.response import CheckResult, OracleReport
from dpconsider.models.state import ProposalLog, ResponseParams
from dpconsider.services.cs_sampler import sweep_block
from dpconsider.services.dp_sampler import bernoulli_loglik_matrix, sample_assignments, sample_slices
from dpconsider.services.likelihood import utility_table
from dpconsider.services.oracle import (
    empirical_subset_pmf,
    enumerate_cs_posterior,
    mixture_cs_pmf,
    random_mixture,
    total_variation,
)
from dpconsider.utils.random_streams import stream

logger = logging.getLogger(__name__)

TV_THRESHOLD = 0.01
PMF_SUM_TOL = 1e-12
BURN_SWEEPS = 10


def micro_panel(seed: int, J: int = 3, T: int = 2, chosen: int = 0) -> PanelDataset:
    """One subject who picked category `chosen` on every occasion; x ~ N(0, 2)."""
    rng = stream(seed, 0)
    X = rng.normal(0.0, np.sqrt(2.0), size=(1, T, J, 1))
    return PanelDataset(
        T=np.array([T]), y=np.full((1, T), chosen), X=X, Z=np.zeros((1, T, J, 0)), subject_ids=np.array([1]),
    )


def micro_params(J: int = 3) -> ResponseParams:
    delta = np.linspace(0.4, 0.0, J)
    return ResponseParams(delta=delta, beta=np.array([1.0]), b=np.zeros((1, 0)), D=np.zeros((0, 0)))


def check_cs_stationary(seed: int, samples: int = 200_000, chains: int = 2_000) -> CheckResult:
    data = micro_panel(seed)
    params = micro_params(data.J)
    q_row = np.array([0.4, 0.6, 0.3])
    exact = enumerate_cs_posterior(0, params, q_row, data)

    sweeps = int(np.ceil(samples / chains))
    V = np.repeat(utility_table(params, data), chains, axis=0)
    mask = np.repeat(data.mask, chains, axis=0)
    chosen = np.repeat(data.chosen, chains, axis=0)
    q = np.tile(q_row, (chains, 1))
    C = np.ones((chains, data.J), dtype=bool)
    kept = []
    for s in range(BURN_SWEEPS + sweeps):
        C, _ = sweep_block(V, mask, chosen, C, q, stream(seed, 1, s))
        if s >= BURN_SWEEPS:
            kept.append(C.copy())
    empirical = empirical_subset_pmf(np.concatenate(kept))
    tv = total_variation(empirical, exact)
    zeros_ok = bool(np.all(empirical[exact == 0] == 0))
    return CheckResult(
        name="cs_stationary", passed=bool(tv < TV_THRESHOLD and zeros_ok), observed=tv, threshold=TV_THRESHOLD,
        detail=f"{len(kept) * chains} sweeps; structural zeros {'exact' if zeros_ok else 'VIOLATED'}",
    )


def check_slice_assignment(seed: int, samples: int = 100_000, chains: int = 1_000) -> CheckResult:
    """With omega and q fixed, alternating u | S and S | u leaves S ~ omega_h f(C | q_h)."""
    omega = np.array([0.55, 0.45])
    q = np.array([[0.8, 0.3, 0.5], [0.2, 0.7, 0.5]])
    C = np.tile(np.array([True, True, False]), (chains, 1))
    logw = np.log(omega) + bernoulli_loglik_matrix(C[:1], q)[0]
    exact = np.exp(logw - np.logaddexp.reduce(logw))

    sweeps = int(np.ceil(samples / chains))
    S = np.zeros(chains, dtype=int)
    counts = np.zeros(2)
    for s in range(BURN_SWEEPS + sweeps):
        rng = stream(seed, 2, s)
        u = sample_slices(S, omega, rng)
        S = sample_assignments(C, u, omega, q, rng)
        if s >= BURN_SWEEPS:
            counts += np.bincount(S, minlength=2)
    tv = total_variation(counts / counts.sum(), exact)
    return CheckResult(
        name="slice_assignment", passed=bool(tv < TV_THRESHOLD), observed=tv, threshold=TV_THRESHOLD,
        detail=f"{int(counts.sum())} draws",
    )


def check_mixture_pmf(seed: int, trials: int = 100) -> CheckResult:
    rng = stream(seed, 3)
    worst = 0.0
    for _ in range(trials):
        K = int(rng.integers(1, 6))
        J = int(rng.integers(1, 9))
        omega, Q = random_mixture(K, J, rng)
        worst = max(worst, abs(mixture_cs_pmf(omega, Q).pmf.sum() - 1.0))
    return CheckResult(
        name="mixture_pmf_sum", passed=bool(worst <= PMF_SUM_TOL), observed=worst, threshold=PMF_SUM_TOL,
        detail=f"{trials} random mixtures",
    )


def check_exclusion_acceptance(seed: int, subjects: int = 200, sweeps: int = 20) -> CheckResult:
    rng = stream(seed, 4)
    J, T = 6, 5
    V = rng.normal(0.0, 2.0, size=(subjects, T, J))
    mask = np.ones((subjects, T), dtype=bool)
    y = rng.integers(0, J, size=(subjects, T))
    chosen = np.zeros((subjects, J), dtype=bool)
    np.put_along_axis(chosen, y, True, axis=1)
    q = rng.random((subjects, J))
    C = np.ones((subjects, J), dtype=bool)
    log = ProposalLog()
    for s in range(sweeps):
        C, _ = sweep_block(V, mask, chosen, C, q, stream(seed, 5, s), log=log, iteration=s)
    removing = (log.column("current") == 1) & (log.column("proposed") == 0)
    probs = log.column("accept_prob")[removing]
    worst = float(np.max(1.0 - probs, initial=0.0))
    return CheckResult(
        name="exclusion_accept", passed=bool(probs.size > 0 and worst == 0.0), observed=worst, threshold=0.0,
        detail=f"{probs.size} exclusion proposals",
    )


def run_oracle_checks(seed: int = 0, samples: int = 200_000) -> OracleReport:
    checks: List[CheckResult] = [
        check_cs_stationary(seed, samples),
        check_slice_assignment(seed, max(samples // 2, 1)),
        check_mixture_pmf(seed),
        check_exclusion_acceptance(seed),
    ]
    for c in checks:
        log_fn = logger.info if c.passed else logger.error
        log_fn("%s: %s (observed %.3g, threshold %.3g; %s)", c.name, "pass" if c.passed else "FAIL",
               c.observed, c.threshold, c.detail)
    return OracleReport(seed=seed, passed=all(c.passed for c in checks), checks=checks)
