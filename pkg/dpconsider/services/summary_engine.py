# dpconsider/services/summary_engine.py
"""
Posterior summaries computed from a stored chain: inclusion probabilities,
point-estimate sets, co-clustering similarity, the marginal distribution over
consideration sets, parameter tables and predictive likelihoods.
"""

import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
import pandas as pd
from scipy.special import logsumexp

from dpconsider.errors import UnknownSubjectError
from dpconsider.models.chain import ChainStore
from dpconsider.models.dataset import PanelDataset
from dpconsider.models.response import PredictReport, SummaryReport
from dpconsider.models.state import ResponseParams
from dpconsider.services.likelihood import occasion_logprobs, response_probs, utility_table
from dpconsider.services.oracle import check_enumerable, empirical_subset_pmf, mixture_cs_pmf, subset_label
from dpconsider.utils.file_handler import write_csv, write_json

logger = logging.getLogger(__name__)

# subset pmfs are written for J up to this size; larger J gets co-inclusion pairs for the first subject instead
SUBSET_OUTPUT_LIMIT = 12


def _subject_index(chain: ChainStore, subject_id) -> int:
    ids = np.asarray(chain.metadata.subject_ids)
    hits = np.nonzero(ids == subject_id)[0]
    if hits.size == 0:
        raise UnknownSubjectError(f"Subject {subject_id} is not in the chain")
    return int(hits[0])


def _set_label(row: np.ndarray) -> str:
    return "{" + ",".join(str(int(j) + 1) for j in np.nonzero(row)[0]) + "}"


def inclusion_probs(chain: ChainStore) -> np.ndarray:
    """(n, J) posterior mean of 1{j in C_i}; observed responses give exactly 1."""
    return chain.C.mean(axis=0)


def cs_point_estimate(inclusion: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """C_hat_ij = 1 iff Pr(C_ij = 1) > threshold (ties excluded)."""
    return np.asarray(inclusion) > threshold


def similarity_matrix(chain: ChainStore) -> np.ndarray:
    """(n, n) posterior Pr(S_i = S_i'). Only label equality is used, so relabelling is harmless."""
    S = chain.S
    n = S.shape[1]
    counts = np.zeros((n, n))
    for s in S:
        counts += s[:, None] == s[None, :]
    return counts / S.shape[0]


@dataclass(frozen=True)
class MarginalCsDistribution:
    """Posterior mean and 95% bands of the subset pmf over nonempty sets (bitmask order)."""

    J: int
    mean: np.ndarray
    q025: np.ndarray
    q975: np.ndarray
    empty_mass: float
    truncation_mass: float

    @property
    def deficit(self) -> float:
        return 1.0 - float(self.mean.sum())

    def frame(self) -> pd.DataFrame:
        codes = np.arange(1, 2 ** self.J)
        return pd.DataFrame({
            "bitmask": codes,
            "subset": [subset_label(int(m), self.J) for m in codes],
            "mean": self.mean, "q025": self.q025, "q975": self.q975,
        })


def marginal_cs_distribution(chain: ChainStore) -> MarginalCsDistribution:
    """
    Per draw the mixture pmf truncated at K*; it is not renormalised, so the
    mean falls short of 1 by the mean empty-set plus truncation mass.
    """
    J = chain.metadata.J
    check_enumerable(J)
    if not chain.has_mixture:
        raise ValueError("chain has no mixture draws (variant without consideration sets)")
    G = chain.n_draws
    pmfs = np.zeros((G, 2 ** J))
    truncation = np.zeros(G)
    for g in range(G):
        omega, q = chain.draw_mixture(g)
        pmfs[g] = mixture_cs_pmf(omega, q, check_weights=False).pmf
        truncation[g] = 1.0 - omega.sum()
    nonempty = pmfs[:, 1:]
    return MarginalCsDistribution(
        J=J,
        mean=nonempty.mean(axis=0),
        q025=np.quantile(nonempty, 0.025, axis=0),
        q975=np.quantile(nonempty, 0.975, axis=0),
        empty_mass=float(pmfs[:, 0].mean()),
        truncation_mass=float(truncation.mean()),
    )


def predictive_draw_logliks(chain: ChainStore, holdout: PanelDataset) -> np.ndarray:
    """(G, m) log Pr(holdout responses of subject i | draw g)."""
    out = np.zeros((chain.n_draws, holdout.n))
    for g, (V, C) in enumerate(_holdout_draws(chain, holdout)):
        out[g] = occasion_logprobs(V, C, holdout.y_safe, holdout.mask).sum(axis=1)
    return out


def predictive_loglik(chain: ChainStore, holdout: PanelDataset) -> pd.DataFrame:
    """
    subject, h, logpred with logpred = log (1/G) sum_g prod_s Pr(y_is | draw g).

    The average is over probabilities, not log-probabilities. Subjects whose
    held-out responses fall outside every sampled set get -inf.
    """
    if holdout.n == 0:
        return pd.DataFrame({"subject": pd.Series(dtype=int), "h": pd.Series(dtype=int),
                             "logpred": pd.Series(dtype=float)})
    draws = predictive_draw_logliks(chain, holdout)
    with np.errstate(divide="ignore"):
        logpred = logsumexp(draws, axis=0) - np.log(draws.shape[0])
    for s in holdout.subject_ids[np.isneginf(logpred)]:
        logger.info("Subject %s: held-out responses have predictive probability 0", s)
    return pd.DataFrame({"subject": holdout.subject_ids, "h": holdout.T.astype(int), "logpred": logpred})


def parameter_table(chain: ChainStore) -> pd.DataFrame:
    """Posterior mean, sd and 95% equal-tailed interval of delta_1..delta_{J-1} and beta."""
    J = chain.metadata.J
    names = [f"delta_{k + 1}" for k in range(J - 1)] + [f"beta_{k + 1}" for k in range(chain.beta.shape[1])]
    draws = np.hstack([chain.delta[:, :J - 1], chain.beta])
    return _describe(names, draws, significance=True)


def _describe(names: List[str], draws: np.ndarray, significance: bool = False) -> pd.DataFrame:
    ddof = 1 if draws.shape[0] > 1 else 0
    table = pd.DataFrame({
        "name": names,
        "mean": draws.mean(axis=0),
        "sd": draws.std(axis=0, ddof=ddof),
        "q025": np.quantile(draws, 0.025, axis=0),
        "q975": np.quantile(draws, 0.975, axis=0),
    })
    if significance:
        table["significant"] = (table["q025"] > 0) | (table["q975"] < 0)
    return table


def significant_effects(table: pd.DataFrame) -> int:
    """Number of category effects whose 95% interval excludes 0."""
    return int(table.loc[table["name"].str.startswith("delta_"), "significant"].sum())


def random_effect_scale_table(chain: ChainStore) -> pd.DataFrame:
    """Posterior of D_hh^{1/2}, taking square roots draw by draw."""
    d_z = chain.D.shape[1] if chain.D.ndim == 3 else 0
    scales = np.sqrt(np.diagonal(chain.D, axis1=1, axis2=2)) if d_z else np.zeros((chain.n_draws, 0))
    return _describe([f"sd_z{h + 1}" for h in range(d_z)], scales)


@dataclass(frozen=True)
class ClusterSummary:
    occupied: pd.DataFrame
    mode: int
    alpha: Dict[str, float]


def cluster_summary(chain: ChainStore) -> ClusterSummary:
    occupied = np.array([np.unique(s).size for s in chain.S])
    values, counts = np.unique(occupied, return_counts=True)
    table = pd.DataFrame({"components": values, "draws": counts, "share": counts / counts.sum()})
    alpha = chain.alpha
    return ClusterSummary(
        occupied=table,
        mode=int(values[np.argmax(counts)]),
        alpha={
            "mean": float(alpha.mean()), "sd": float(alpha.std()),
            "q025": float(np.quantile(alpha, 0.025)), "q50": float(np.median(alpha)),
            "q975": float(np.quantile(alpha, 0.975)),
        },
    )


def co_inclusion_probs(chain: ChainStore, i: int) -> np.ndarray:
    """(J, J) Pr(C_ij = 1, C_il = 1); the diagonal is the inclusion probability."""
    Ci = chain.C[:, i].astype(float)
    return Ci.T @ Ci / Ci.shape[0]


def co_inclusion_frame(chain: ChainStore, i: int) -> pd.DataFrame:
    """Long-format co-inclusion table of subject index i, one row per pair a <= b."""
    probs = co_inclusion_probs(chain, i)
    a, b = np.triu_indices(probs.shape[0])
    return pd.DataFrame({
        "subject": int(chain.metadata.subject_ids[i]), "category_a": a + 1, "category_b": b + 1, "prob": probs[a, b],
    })


def nearest_subjects(
    similarity: np.ndarray, inclusion: np.ndarray, data: PanelDataset, i: int, k: int = 3
) -> pd.DataFrame:
    """The k subjects most often clustered with subject i (ties broken by position)."""
    others = np.delete(np.arange(similarity.shape[0]), i)
    order = others[np.argsort(-similarity[i, others], kind="stable")][:k]
    point = cs_point_estimate(inclusion)
    observed = [_set_label(np.isin(np.arange(data.J), data.y[r, :data.T[r]])) for r in order]
    return pd.DataFrame({
        "subject": data.subject_ids[order],
        "similarity": similarity[i, order],
        "observed": observed,
        "point_estimate": [_set_label(point[r]) for r in order],
    })


def cs_acceptance_by_subject(chain: ChainStore) -> pd.DataFrame:
    accepted = chain.cs_accepted.sum(axis=0)
    proposals = chain.cs_proposals.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        rate = np.where(proposals > 0, accepted / np.maximum(proposals, 1), np.nan)
    return pd.DataFrame({"subject": chain.metadata.subject_ids, "acc_rate": rate})


def subset_posterior(chain: ChainStore, i: int) -> np.ndarray:
    """Empirical posterior of C_i over all 2^J subsets."""
    return empirical_subset_pmf(chain.C[:, i])


def subset_posterior_frame(chain: ChainStore, i: int) -> pd.DataFrame:
    """Subsets visited by C_i with their posterior frequency, most frequent first."""
    pmf = subset_posterior(chain, i)
    seen = np.nonzero(pmf)[0]
    seen = seen[np.argsort(-pmf[seen], kind="stable")]
    J = chain.metadata.J
    return pd.DataFrame({
        "subject": int(chain.metadata.subject_ids[i]), "bitmask": seen,
        "subset": [subset_label(int(m), J) for m in seen], "prob": pmf[seen],
    })


def _holdout_draws(chain: ChainStore, holdout: PanelDataset):
    """Yields (V, C) per draw with the chain's b_i and C_i aligned to holdout subjects."""
    if holdout.J != chain.metadata.J:
        raise ValueError(f"holdout has J={holdout.J}, chain has J={chain.metadata.J}")
    idx = np.array([_subject_index(chain, s) for s in holdout.subject_ids], dtype=int)
    for g in range(chain.n_draws):
        params = ResponseParams(chain.delta[g], chain.beta[g], chain.b[g][idx], chain.D[g])
        yield utility_table(params, holdout), chain.C[g][idx]


def marginal_response_probs(chain: ChainStore, holdout: PanelDataset) -> np.ndarray:
    """(m, T_max, J) response probabilities averaged over draws of (delta, beta, b_i, C_i); padding is 0."""
    total = np.zeros((holdout.n, holdout.y.shape[1], holdout.J))
    for V, C in _holdout_draws(chain, holdout):
        with np.errstate(invalid="ignore"):
            total += np.nan_to_num(response_probs(V, C[:, None, :]))
    return np.where(holdout.mask[:, :, None], total / max(chain.n_draws, 1), 0.0)


def response_probs_frame(chain: ChainStore, holdout: PanelDataset) -> pd.DataFrame:
    """subject, occasion, category, prob for every observed holdout occasion."""
    if holdout.n == 0:
        return pd.DataFrame(columns=["subject", "occasion", "category", "prob"])
    probs = marginal_response_probs(chain, holdout)
    i, t, j = np.nonzero(np.broadcast_to(holdout.mask[:, :, None], probs.shape))
    return pd.DataFrame({
        "subject": holdout.subject_ids[i], "occasion": t + 1, "category": j + 1, "prob": probs[i, t, j],
    })


class PosteriorSummaryEngine:
    """
    Turns a stored chain into CSV summaries.
    Data is optional; without it the nearest-subject table is skipped.
    """

    def __init__(self, chain: ChainStore, data: Optional[PanelDataset] = None, threshold: float = 0.5):
        self.chain = chain
        self.data = data
        self.threshold = threshold
        self.files: List[str] = []

    def _write(self, df: pd.DataFrame, out_dir: Path, name: str):
        write_csv(df, out_dir / name)
        self.files.append(name)

    def write(self, out_dir: Union[str, Path]) -> SummaryReport:
        out_dir = Path(out_dir)
        chain = self.chain
        ids = np.asarray(chain.metadata.subject_ids)
        J = chain.metadata.J

        # 1. Inclusion probabilities and point estimates
        incl = inclusion_probs(chain)
        point = cs_point_estimate(incl, self.threshold)
        i, j = np.indices(incl.shape)
        self._write(pd.DataFrame({
            "subject": ids[i.ravel()], "category": j.ravel() + 1,
            "prob": incl.ravel(), "point_estimate": point.ravel().astype(int),
        }), out_dir, "inclusion_probs.csv")

        # 2. Parameters
        params = parameter_table(chain)
        self._write(params, out_dir, "parameters.csv")
        if chain.metadata.d_z:
            self._write(random_effect_scale_table(chain), out_dir, "random_effects.csv")

        mode = None
        if chain.has_mixture:
            # 3. Clustering
            sim = similarity_matrix(chain)
            sim_df = pd.DataFrame(sim, columns=[str(s) for s in ids])
            sim_df.insert(0, "subject", ids)
            self._write(sim_df, out_dir, "similarity.csv")
            clusters = cluster_summary(chain)
            mode = clusters.mode
            self._write(clusters.occupied, out_dir, "clusters.csv")
            self._write(cs_acceptance_by_subject(chain), out_dir, "cs_acceptance.csv")
            write_json({"alpha": clusters.alpha, "occupied_mode": clusters.mode}, out_dir / "clusters.json")
            self.files.append("clusters.json")

            # 4. Marginal distribution over sets
            if J <= SUBSET_OUTPUT_LIMIT:
                marginal = marginal_cs_distribution(chain)
                self._write(marginal.frame(), out_dir, "cs_pmf.csv")
                logger.info(
                    "Subset pmf: empty-set mass %.4f, truncation mass %.4f",
                    marginal.empty_mass, marginal.truncation_mass,
                )
                self._write(subset_posterior_frame(chain, 0), out_dir, "subject_cs_pmf.csv")
            else:
                self._write(co_inclusion_frame(chain, 0), out_dir, "co_inclusion.csv")

            if self.data is not None and self.data.n > 1:
                self._write(nearest_subjects(sim, incl, self.data, 0), out_dir, "nearest_subjects.csv")

        report = SummaryReport(
            chain_dir=str(out_dir), files=list(self.files),
            significant_effects=significant_effects(params), occupied_components_mode=mode,
        )
        write_json(report, out_dir / "summary.json")
        return report


def write_predictions(chain: ChainStore, holdout: PanelDataset, out_dir: Union[str, Path]) -> PredictReport:
    out_dir = Path(out_dir)
    table = predictive_loglik(chain, holdout)
    write_csv(table, out_dir / "pred_loglik.csv")
    write_csv(response_probs_frame(chain, holdout), out_dir / "response_probs.csv")
    zeros = int(np.isneginf(table["logpred"]).sum())
    finite = table["logpred"][np.isfinite(table["logpred"])]
    report = PredictReport(
        chain_dir=str(out_dir), subjects=len(table),
        total_logpred=float(table["logpred"].sum()) if zeros == 0 else float("-inf"),
        structural_zeros=zeros,
    )
    logger.info("Predictive log-likelihood over %d subjects: %.3f (%d finite)", len(table), report.total_logpred, len(finite))
    return report
