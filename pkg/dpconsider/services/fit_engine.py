# dpconsider/services/fit_engine.py
"""
The full sampling cycle for the consideration-set logit model.

Each iteration updates, in order: beta, the random effects b and their
covariance D, the category effects delta, the consideration sets C, and then
the mixture block (sticks, attention rows, slices, assignments, alpha).
Iteration g draws only from stream(seed, g, ...), and the utility table is
rebuilt from the parameters at the start of every iteration, so a run resumed
from a checkpoint continues exactly like an uninterrupted one.
"""

import json
import logging
import time
from pathlib import Path
from typing import Dict, List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

from dpconsider.config import dump_config
from dpconsider.errors import ConfigError, DatasetValidationError, InvariantBreach, NumericalAbort
from dpconsider.models.chain import ARRAY_FIELDS, ChainMetadata, ChainStore
from dpconsider.models.dataset import PanelDataset, validate_dataset
from dpconsider.models.hyper import RunConfig
from dpconsider.models.response import FitReport, RunTiming
from dpconsider.models.state import ConsiderationState, MixtureState, ProposalLog, ResponseParams, SamplerState
from dpconsider.services.cs_sampler import ConsiderationSetSampler, SweepStats
from dpconsider.services.dp_sampler import dp_step, initial_mixture
from dpconsider.services.likelihood import subject_logliks, utility_table
from dpconsider.services.param_sampler import (
    beta_objective,
    check_derivatives,
    delta_objective,
    sample_b,
    sample_beta,
    sample_D,
    sample_delta,
)
from dpconsider.utils.file_handler import ensure_dir, read_npy, write_csv, write_json, write_npy, write_text
from dpconsider.utils.random_streams import (
    STREAM_B,
    STREAM_BETA,
    STREAM_D,
    STREAM_DEBUG,
    STREAM_DELTA,
    STREAM_DP,
    STREAM_INIT,
    stream,
)

logger = logging.getLogger(__name__)

CHECKPOINT_DIR = "checkpoint"
DERIVATIVE_TOL = 1e-5
CACHE_TOL = 1e-8
TIMING_BLOCK = 1000
TIMING_FILE = "timing.json"


class AcceptanceTally(BaseModel):
    """Acceptance counters accumulated over one reporting block."""

    iterations: int = 0
    beta_accepted: int = 0
    beta_fallbacks: int = 0
    delta_accepted: int = 0
    delta_updates: int = 0
    b_accepted: int = 0
    b_updates: int = 0
    cs_accepted: int = 0
    cs_proposals: int = 0
    cs_add_proposed: int = 0
    cs_add_accepted: int = 0
    cs_remove_proposed: int = 0
    cs_remove_accepted: int = 0
    k_star_sum: int = 0

    @staticmethod
    def _rate(num: int, den: int) -> float:
        return num / den if den else float("nan")

    def add(self, other: "AcceptanceTally"):
        for name in type(self).model_fields:
            setattr(self, name, getattr(self, name) + getattr(other, name))

    def rates(self) -> Dict[str, float]:
        return {
            "beta": self._rate(self.beta_accepted, self.iterations),
            "delta": self._rate(self.delta_accepted, self.delta_updates),
            "b": self._rate(self.b_accepted, self.b_updates),
            "cs": self._rate(self.cs_accepted, self.cs_proposals),
            "cs_add": self._rate(self.cs_add_accepted, self.cs_add_proposed),
            "cs_remove": self._rate(self.cs_remove_accepted, self.cs_remove_proposed),
            "mean_k_star": self._rate(self.k_star_sum, self.iterations),
        }

    def row(self, iteration: int) -> Dict[str, float]:
        return {"iteration": iteration, "iterations": self.iterations, **self.rates(),
                "beta_fallbacks": self.beta_fallbacks}


def proposals_frame(log: ProposalLog, subject_ids: np.ndarray) -> pd.DataFrame:
    """Proposal log as `iter,subject,coord,from,to,accept_prob,accepted` (1-based coordinates)."""
    subject = log.column("subject").astype(int)
    return pd.DataFrame({
        "iter": log.column("iteration").astype(int),
        "subject": subject_ids[subject] if subject.size else subject,
        "coord": log.column("coord").astype(int) + 1,
        "from": log.column("current").astype(int),
        "to": log.column("proposed").astype(int),
        "accept_prob": log.column("accept_prob"),
        "accepted": log.column("accepted").astype(int),
    })


class ConsiderationFitEngine:
    """Runs one chain for a validated dataset under a resolved RunConfig."""

    def __init__(self, data: PanelDataset, config: RunConfig, data_path: Optional[str] = None):
        violations = validate_dataset(data)
        if violations:
            raise DatasetValidationError(violations)
        if data.n == 0:
            raise DatasetValidationError([], "Dataset has no subjects")

        self.data = data
        self.config = config
        self.hyper = config.hyper
        self.mcmc = config.mcmc
        self.variant = config.variant
        self.data_path = data_path
        self.uses_random_effects = self.variant.random_effects and data.d_z > 0

        if self.uses_random_effects and self.hyper.wishart_v < data.d_z:
            raise ConfigError(f"Wishart degrees of freedom v={self.hyper.wishart_v} below d_z={data.d_z}")
        if self.variant.consideration:
            try:
                self.hyper.q_beta_params(data.J)
            except ValueError as e:
                raise ConfigError(str(e)) from e

        self.cs_sampler = ConsiderationSetSampler(
            data, self.mcmc.seed, self.mcmc.cs_block_size, self.mcmc.threads
        )
        self.acceptance: Optional[pd.DataFrame] = None
        self.proposals: Optional[pd.DataFrame] = None
        self.report: Optional[FitReport] = None
        self.timing: Optional[RunTiming] = None

    # --- state ------------------------------------------------------------

    def initial_state(self) -> SamplerState:
        """delta = 0, beta = 0, b = 0, D = (vR)^{-1}, full sets, one mixture component."""
        data, hyper = self.data, self.hyper
        d_z = data.d_z
        D = np.linalg.inv(hyper.wishart_v * hyper.wishart_scale(d_z)) if d_z else np.zeros((0, 0))
        params = ResponseParams(np.zeros(data.J), np.zeros(data.d_x), np.zeros((data.n, d_z)), D)
        mixture = None
        if self.variant.consideration:
            mixture = initial_mixture(data.n, data.J, hyper, stream(self.mcmc.seed, 0, STREAM_INIT))
        return SamplerState(params=params, cs=ConsiderationState.full(data.n, data.J), mixture=mixture)

    def step(
        self, g: int, state: SamplerState, tally: AcceptanceTally, log: Optional[ProposalLog] = None
    ) -> Tuple[SamplerState, np.ndarray, Optional[SweepStats]]:
        """One full cycle; returns the new state, its utility table and the sweep counts."""
        data, hyper, mcmc, seed = self.data, self.hyper, self.mcmc, self.mcmc.seed
        params = state.params
        C = state.cs.C
        V = utility_table(params, data)

        beta, V, accepted, proposal = sample_beta(
            params.beta, V, data, C, hyper, stream(seed, g, STREAM_BETA), mcmc.newton_max_iter, mcmc.newton_tol
        )
        tally.beta_accepted += int(accepted)
        tally.beta_fallbacks += int(proposal is not None and proposal.fallback)

        b, D = params.b, params.D
        if self.uses_random_effects:
            b, V, b_accepted = sample_b(b, D, V, data, C, stream(seed, g, STREAM_B))
            D = sample_D(b, hyper, stream(seed, g, STREAM_D))
            tally.b_accepted += int(b_accepted.sum())
            tally.b_updates += data.n

        delta, V, d_accepted, d_updates = sample_delta(
            params.delta, V, data, C, hyper, stream(seed, g, STREAM_DELTA), mcmc.newton_max_iter, mcmc.newton_tol
        )
        tally.delta_accepted += d_accepted
        tally.delta_updates += d_updates

        mixture: Optional[MixtureState] = state.mixture
        stats = None
        if self.variant.consideration:
            C, stats = self.cs_sampler.sweep(g, V, C, mixture.q[mixture.S], log)
            mixture = dp_step(mixture, C, hyper, stream(seed, g, STREAM_DP))
            tally.cs_accepted += int(stats.accepted.sum())
            tally.cs_proposals += int(stats.proposals.sum())
            tally.cs_add_proposed += stats.add_proposed
            tally.cs_add_accepted += stats.add_accepted
            tally.cs_remove_proposed += stats.remove_proposed
            tally.cs_remove_accepted += stats.remove_accepted
            tally.k_star_sum += mixture.k_star

        tally.iterations += 1
        new_state = SamplerState(
            params=ResponseParams(delta, beta, b, D), cs=ConsiderationState(C), mixture=mixture
        )
        return new_state, V, stats

    # --- checks -----------------------------------------------------------

    def _check_numerics(self, g: int, V: np.ndarray, loglik: np.ndarray):
        if np.isnan(V).any():
            raise NumericalAbort(g, "utilities contain NaN")
        if not np.all(np.isfinite(loglik)):
            bad = self.data.subject_ids[~np.isfinite(loglik)]
            raise NumericalAbort(g, f"non-finite log-likelihood for subjects {bad[:5].tolist()}")

    def _debug_checks(self, g: int, state: SamplerState, V: np.ndarray, log: Optional[ProposalLog]):
        data = self.data
        fresh = utility_table(state.params, data)
        drift = float(np.max(np.abs(np.where(data.mask[:, :, None], fresh - V, 0.0)), initial=0.0))
        if drift > CACHE_TOL:
            raise InvariantBreach(f"iteration {g}: cached utilities drifted by {drift:.3g}")

        issues = state.params.violations()
        if state.mixture is not None:
            issues += state.mixture.violations()
        if not state.cs.satisfies_forced_inclusion(data):
            issues.append("forced inclusion broken")
        if issues:
            raise InvariantBreach(f"iteration {g}: " + "; ".join(issues))

        if log is not None:
            removing = (log.column("current") == 1) & (log.column("proposed") == 0)
            probs = log.column("accept_prob")[removing]
            if probs.size and np.any(probs != 1.0):
                raise InvariantBreach(f"iteration {g}: exclusion proposal accepted with probability {probs.min()}")

        if g == 1:
            self._check_derivatives(g, state, V)

    def _check_derivatives(self, g: int, state: SamplerState, V: np.ndarray):
        """Analytic gradients/Hessians against central differences at 5 random points."""
        data, params = self.data, state.params
        rng = stream(self.mcmc.seed, g, STREAM_DEBUG)
        C = state.cs.C
        worst = 0.0
        if data.d_x:
            V_rest = V - data.X @ params.beta
            objective = beta_objective(V_rest, data, C, self.hyper.v_beta)
            for _ in range(5):
                point = params.beta + rng.standard_normal(data.d_x)
                worst = max(worst, *check_derivatives(objective, point))
        if data.J > 1:
            k = int(rng.integers(data.J - 1))
            objective = delta_objective(V, params.delta[k], k, data, C, self.hyper.v_delta)
            for _ in range(5):
                point = np.array([params.delta[k] + rng.standard_normal()])
                worst = max(worst, *check_derivatives(objective, point))
        logger.debug("Derivative check: max relative error %.3g", worst)
        if worst > DERIVATIVE_TOL:
            raise InvariantBreach(f"analytic derivatives disagree with finite differences ({worst:.3g})")

    # --- recording --------------------------------------------------------

    def _record(self, draws: Dict[str, List[np.ndarray]], state: SamplerState, loglik: np.ndarray,
                stats: Optional[SweepStats]):
        data = self.data
        p, mixture = state.params, state.mixture
        draws["delta"].append(p.delta.copy())
        draws["beta"].append(p.beta.copy())
        draws["b"].append(p.b.copy())
        draws["D"].append(p.D.copy())
        draws["C"].append(state.cs.C.astype(bool).copy())
        draws["loglik"].append(np.float64(loglik.sum()))
        if mixture is not None:
            draws["S"].append(mixture.S.astype(int).copy())
            draws["alpha"].append(np.float64(mixture.alpha))
            draws["k_star"].append(np.int64(mixture.k_star))
            draws["omega"].append(mixture.omega)
            draws["q"].append(mixture.q.copy())
        else:
            draws["S"].append(np.zeros(data.n, dtype=int))
            draws["alpha"].append(np.float64(0.0))
            draws["k_star"].append(np.int64(0))
            draws["omega"].append(np.zeros(0))
            draws["q"].append(np.zeros((0, data.J)))
        if stats is not None:
            draws["cs_accepted"].append(stats.accepted.astype(int))
            draws["cs_proposals"].append(stats.proposals.astype(int))
        else:
            draws["cs_accepted"].append(np.zeros(data.n, dtype=int))
            draws["cs_proposals"].append(np.zeros(data.n, dtype=int))

    def metadata(self, iterations_completed: int) -> ChainMetadata:
        data, mcmc = self.data, self.mcmc
        return ChainMetadata(
            seed=mcmc.seed, variant=self.variant.value, iters=mcmc.iters, burnin=mcmc.resolved_burnin,
            thin=mcmc.thin, n=data.n, J=data.J, d_x=data.d_x, d_z=data.d_z,
            subject_ids=[int(s) for s in data.subject_ids], outside_option=data.outside_option,
            hyper=self.hyper.model_dump(mode="json"), iterations_completed=iterations_completed,
            data_path=self.data_path,
        )

    # --- checkpoints ------------------------------------------------------

    def _save_checkpoint(self, out_dir: Path, g: int, state: SamplerState, draws, tally, total,
                         rows, proposals: List[pd.DataFrame], elapsed_per_1000, block_elapsed: float):
        ckpt = ensure_dir(out_dir / CHECKPOINT_DIR)
        p, mixture = state.params, state.mixture
        arrays = {"delta": p.delta, "beta": p.beta, "b": p.b, "D": p.D, "C": state.cs.C}
        if mixture is not None:
            arrays.update({"sticks": mixture.V, "q": mixture.q, "S": mixture.S, "u": mixture.u})
        for name, arr in arrays.items():
            write_npy(arr, ckpt / f"state_{name}.npy")
        ChainStore.from_draws(self.metadata(g), draws, self.data.J).save(ckpt / "draws")
        if proposals:
            write_csv(pd.concat(proposals, ignore_index=True), ckpt / "proposals.csv")
        write_json({
            "iteration": g,
            "seed": self.mcmc.seed,
            "variant": self.variant.value,
            "alpha": mixture.alpha if mixture is not None else None,
            "tally": tally.model_dump(),
            "total": total.model_dump(),
            "rows": rows,
        }, ckpt / "progress.json")
        write_json({"elapsed_per_1000": elapsed_per_1000, "block_elapsed": block_elapsed}, ckpt / TIMING_FILE)
        logger.info("Checkpoint written at iteration %d (%s)", g, ckpt)

    def _load_checkpoint(self, out_dir: Path):
        ckpt = out_dir / CHECKPOINT_DIR
        progress_file = ckpt / "progress.json"
        if not progress_file.is_file():
            return None
        progress = json.loads(progress_file.read_text())
        if progress["seed"] != self.mcmc.seed or progress["variant"] != self.variant.value:
            raise ConfigError(
                f"Checkpoint in {ckpt} was written with seed={progress['seed']}, variant={progress['variant']}"
            )
        load = lambda name: read_npy(ckpt / f"state_{name}.npy")  # noqa: E731
        params = ResponseParams(load("delta"), load("beta"), load("b"), load("D"))
        mixture = None
        if self.variant.consideration:
            mixture = MixtureState(
                V=load("sticks"), q=load("q"), S=load("S"), u=load("u"), alpha=float(progress["alpha"])
            )
        state = SamplerState(params=params, cs=ConsiderationState(load("C")), mixture=mixture)
        draws = ChainStore.load(ckpt / "draws").to_draws()
        proposals = []
        if (ckpt / "proposals.csv").is_file():
            proposals.append(pd.read_csv(ckpt / "proposals.csv"))
        timing = {"elapsed_per_1000": [], "block_elapsed": 0.0}
        if (ckpt / TIMING_FILE).is_file():
            timing = json.loads((ckpt / TIMING_FILE).read_text())
        logger.info("Resuming from checkpoint at iteration %d", progress["iteration"])
        return (
            int(progress["iteration"]), state, draws,
            AcceptanceTally(**progress["tally"]), AcceptanceTally(**progress["total"]),
            list(progress["rows"]), proposals, list(timing["elapsed_per_1000"]), float(timing["block_elapsed"]),
        )

    # --- driver -----------------------------------------------------------

    def run(self, out_dir: Optional[Union[str, Path]] = None, resume: bool = False) -> ChainStore:
        """Run the chain to mcmc.iters, writing the chain directory when out_dir is given."""
        mcmc = self.mcmc
        out_dir = Path(out_dir) if out_dir is not None else None
        burnin = mcmc.resolved_burnin

        restored = self._load_checkpoint(out_dir) if (resume and out_dir is not None) else None
        if restored is not None:
            start, state, draws, tally, total, rows, proposals, elapsed_per_1000, block_elapsed = restored
        else:
            if resume:
                logger.warning("No checkpoint found; starting a fresh chain")
            start, state = 0, self.initial_state()
            draws = {name: [] for name in ARRAY_FIELDS}
            tally, total = AcceptanceTally(), AcceptanceTally()
            rows: List[Dict[str, float]] = []
            proposals: List[pd.DataFrame] = []
            elapsed_per_1000: List[float] = []
            block_elapsed = 0.0

        logger.info(
            "Fitting %s: n=%d, J=%d, iters=%d, burnin=%d, thin=%d, seed=%d",
            self.variant.value, self.data.n, self.data.J, mcmc.iters, burnin, mcmc.thin, mcmc.seed,
        )
        tick = time.perf_counter()
        for g in range(start + 1, mcmc.iters + 1):
            log = ProposalLog() if (mcmc.log_proposals and self.variant.consideration) else None
            state, V, stats = self.step(g, state, tally, log)
            loglik = subject_logliks(V, state.cs.C, self.data)
            self._check_numerics(g, V, loglik)
            if mcmc.debug:
                self._debug_checks(g, state, V, log)
            if log is not None:
                proposals.append(proposals_frame(log, self.data.subject_ids))

            if g > burnin and (g - burnin) % mcmc.thin == 0:
                self._record(draws, state, loglik, stats)

            if g % mcmc.report_every == 0 or g == mcmc.iters:
                row = tally.row(g)
                rows.append(row)
                logger.info(
                    "iter %d: loglik=%.2f acc beta=%.2f delta=%.2f b=%.2f cs=%.3f K*=%.1f",
                    g, float(loglik.sum()), row["beta"], row["delta"], row["b"], row["cs"], row["mean_k_star"],
                )
                total.add(tally)
                tally = AcceptanceTally()

            now = time.perf_counter()
            block_elapsed += now - tick
            tick = now
            if g % TIMING_BLOCK == 0:
                elapsed_per_1000.append(round(block_elapsed, 3))
                block_elapsed = 0.0

            if out_dir is not None and mcmc.checkpoint_every and g % mcmc.checkpoint_every == 0 and g < mcmc.iters:
                self._save_checkpoint(out_dir, g, state, draws, tally, total, rows, proposals,
                                      elapsed_per_1000, block_elapsed)

        chain = ChainStore.from_draws(self.metadata(mcmc.iters), draws, self.data.J)
        self.acceptance = pd.DataFrame(rows)
        if proposals:
            self.proposals = pd.concat(proposals, ignore_index=True)
        elapsed = float(sum(elapsed_per_1000) + block_elapsed)
        self.report = FitReport(
            chain_dir=str(out_dir) if out_dir is not None else "",
            variant=self.variant.value, iterations=mcmc.iters, draws=chain.n_draws,
            acceptance={k: v for k, v in total.rates().items() if np.isfinite(v)},
        )
        self.timing = RunTiming(elapsed_seconds=round(elapsed, 3), elapsed_per_1000=list(elapsed_per_1000))
        if out_dir is not None:
            self.save(out_dir, chain)
        logger.info("Finished %d iterations in %.1fs; %d draws stored", mcmc.iters, elapsed, chain.n_draws)
        return chain

    def save(self, out_dir: Path, chain: ChainStore):
        chain.save(out_dir)
        write_text(dump_config(self.config), out_dir / "config.env")
        write_csv(self.acceptance, out_dir / "acceptance.csv")
        if self.proposals is not None:
            write_csv(self.proposals, out_dir / "proposals.csv")
        write_json(self.report, out_dir / "fit_report.json")
        write_json(self.timing, out_dir / TIMING_FILE)
