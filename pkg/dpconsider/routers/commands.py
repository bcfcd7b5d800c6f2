# dpconsider/routers/commands.py

import argparse
import logging
from pathlib import Path
from typing import Any, Dict, Optional

import numpy as np
import pandas as pd

from dpconsider.config import dump_config, load_config
from dpconsider.errors import InvalidPmfError
from dpconsider.models.chain import ChainStore
from dpconsider.models.hyper import RunConfig
from dpconsider.services.data_engine import load_dataset, write_dataset
from dpconsider.services.fit_engine import ConsiderationFitEngine
from dpconsider.services.oracle import parse_subset
from dpconsider.services.oracle_check import run_oracle_checks
from dpconsider.services.simulate import (
    SimulatedPanel,
    simulate_large_two_pop,
    simulate_prior_cs,
    simulate_small,
)
from dpconsider.services.summary_engine import PosteriorSummaryEngine, write_predictions
from dpconsider.utils.file_handler import ensure_dir, write_csv, write_json, write_text

logger = logging.getLogger(__name__)

# used when a small-J simulation names no pmf file
DEFAULT_SMALL_PMF = {
    "{1,2,3}": 0.3, "{1,2}": 0.2, "{2,4}": 0.15, "{1,2,3,4}": 0.15, "{3}": 0.1, "{2,3,4}": 0.1,
}


def _overrides(args: argparse.Namespace, seed_key: str = "MCMC_SEED") -> Dict[str, Any]:
    return {
        seed_key: getattr(args, "seed", None),
        "MCMC_ITERS": getattr(args, "iters", None),
        "MCMC_BURNIN": getattr(args, "burnin", None),
        "MCMC_THREADS": getattr(args, "threads", None),
        "MODEL_VARIANT": getattr(args, "variant", None),
    }


def _resolve(args: argparse.Namespace, seed_key: str = "MCMC_SEED") -> RunConfig:
    return load_config(args.config, _overrides(args, seed_key))


def load_pmf(path: Optional[str], J: int) -> Dict[int, float]:
    """Subset pmf from a `subset,prob` CSV with subsets written as {1,3}."""
    if path is None:
        if J != 4:
            raise InvalidPmfError(f"no pmf file given and the built-in pmf is for J=4, not J={J}")
        table = pd.DataFrame({"subset": list(DEFAULT_SMALL_PMF), "prob": list(DEFAULT_SMALL_PMF.values())})
    else:
        table = pd.read_csv(path)
        if not {"subset", "prob"} <= set(table.columns):
            raise InvalidPmfError(f"{path}: expected columns subset,prob")
    pmf: Dict[int, float] = {}
    for subset, prob in zip(table["subset"], table["prob"]):
        try:
            code = parse_subset(str(subset))
        except ValueError as e:
            raise InvalidPmfError(f"bad subset {subset!r}: {e}") from e
        if code >= 2 ** J:
            raise InvalidPmfError(f"subset {subset} mentions a category above J={J}")
        pmf[code] = pmf.get(code, 0.0) + float(prob)
    return pmf


def _truth_frame(sim: SimulatedPanel) -> pd.DataFrame:
    ids = sim.data.subject_ids
    i, j = np.indices(sim.true_cs.shape)
    frame = pd.DataFrame({
        "subject": ids[i.ravel()], "category": j.ravel() + 1, "included": sim.true_cs.ravel().astype(int),
    })
    if sim.subpopulation is not None:
        frame["subpopulation"] = sim.subpopulation[i.ravel()] + 1
    return frame


def cmd_simulate(args: argparse.Namespace) -> int:
    config = _resolve(args, seed_key="SIM_SEED")
    sim_cfg = config.sim
    out = ensure_dir(args.out)
    written = []

    if sim_cfg.design == "prior":
        draws = simulate_prior_cs(config.hyper, sim_cfg.k, sim_cfg.draws, sim_cfg.seed, sim_cfg.j)
        if draws.subset_probs is not None:
            write_csv(draws.quantiles(), out / "prior_cs_quantiles.csv")
            written.append("prior_cs_quantiles.csv")
        qs = np.quantile(draws.inclusion, [0.05, 0.5, 0.95], axis=0)
        write_csv(pd.DataFrame({
            "category": np.arange(1, sim_cfg.j + 1), "q05": qs[0], "q50": qs[1], "q95": qs[2],
        }), out / "prior_inclusion_quantiles.csv")
        write_csv(pd.DataFrame({"draw": np.arange(1, draws.residual.size + 1), "residual": draws.residual}),
                  out / "prior_residuals.csv")
        written += ["prior_inclusion_quantiles.csv", "prior_residuals.csv"]
        logger.info("Median truncation residual at K=%d: %.3g", sim_cfg.k, float(np.median(draws.residual)))
    else:
        if sim_cfg.design == "small":
            sim = simulate_small(
                sim_cfg.n, sim_cfg.t, sim_cfg.j, sim_cfg.beta, load_pmf(sim_cfg.pmf, sim_cfg.j), sim_cfg.seed,
                z_equals_x=sim_cfg.z_equals_x, holdout_T=sim_cfg.holdout_t,
            )
        else:
            sim = simulate_large_two_pop(
                sim_cfg.n, sim_cfg.j, sim_cfg.t, sim_cfg.seed, beta_star=sim_cfg.beta,
                z_equals_x=sim_cfg.z_equals_x, holdout_T=sim_cfg.holdout_t,
            )
        write_dataset(sim.data, out / "data.csv")
        write_csv(_truth_frame(sim), out / "truth_cs.csv")
        written += ["data.csv", "data.json", "truth_cs.csv"]
        if sim.holdout is not None:
            write_dataset(sim.holdout, out / "holdout.csv")
            written += ["holdout.csv", "holdout.json"]

    write_text(dump_config(config), out / "config.env")
    logger.info("Simulation (%s design) written to %s: %s", sim_cfg.design, out, ", ".join(written))
    return 0


def cmd_fit(args: argparse.Namespace) -> int:
    config = _resolve(args)
    data = load_dataset(args.data)
    engine = ConsiderationFitEngine(data, config, data_path=str(args.data))
    engine.run(ensure_dir(args.out), resume=args.resume)
    return 0


def _echo_chain_config(chain_dir: Path, out: Path):
    """Copies the chain's resolved config next to outputs written outside the chain directory."""
    source = Path(chain_dir) / "config.env"
    if source.is_file() and Path(out).resolve() != Path(chain_dir).resolve():
        write_text(source.read_text(), Path(out) / "config.env")


def cmd_summarize(args: argparse.Namespace) -> int:
    chain = ChainStore.load(args.chain)
    data = load_dataset(args.data) if args.data else None
    out = ensure_dir(args.out or args.chain)
    PosteriorSummaryEngine(chain, data, threshold=args.threshold).write(out)
    _echo_chain_config(args.chain, out)
    return 0


def cmd_predict(args: argparse.Namespace) -> int:
    chain = ChainStore.load(args.chain)
    holdout = load_dataset(args.holdout)
    out = ensure_dir(args.out or args.chain)
    report = write_predictions(chain, holdout, out)
    write_json(report, Path(out) / "predict.json")
    _echo_chain_config(args.chain, out)
    return 0


def cmd_oracle_check(args: argparse.Namespace) -> int:
    report = run_oracle_checks(seed=args.seed or 0, samples=args.samples)
    if args.out:
        write_json(report, ensure_dir(args.out) / "oracle_check.json")
    print(report.model_dump_json(indent=2))
    return 0 if report.passed else 2


def _common(p: argparse.ArgumentParser, seed: bool = True):
    p.add_argument("--config", help="key=value config file")
    if seed:
        p.add_argument("--seed", type=int)


def register(subparsers) -> None:
    p = subparsers.add_parser("simulate", help="write a synthetic dataset or prior draws")
    _common(p)
    p.add_argument("--out", required=True, help="output directory")
    p.set_defaults(handler=cmd_simulate)

    p = subparsers.add_parser("fit", help="run the sampler and store the chain")
    _common(p)
    p.add_argument("--data", required=True, help="dataset CSV (sidecar JSON next to it)")
    p.add_argument("--out", required=True, help="chain directory")
    p.add_argument("--iters", type=int)
    p.add_argument("--burnin", type=int)
    p.add_argument("--threads", type=int)
    p.add_argument("--variant", choices=["mnl", "mnl_r", "mnl_c", "mnl_rc"])
    p.add_argument("--resume", action="store_true", help="continue from the chain's checkpoint")
    p.set_defaults(handler=cmd_fit)

    p = subparsers.add_parser("summarize", help="posterior summaries of a stored chain")
    p.add_argument("--chain", required=True)
    p.add_argument("--data", help="estimation dataset, for the nearest-subject table")
    p.add_argument("--out", help="defaults to the chain directory")
    p.add_argument("--threshold", type=float, default=0.5)
    p.set_defaults(handler=cmd_summarize)

    p = subparsers.add_parser("predict", help="predictive log-likelihood of held-out occasions")
    p.add_argument("--chain", required=True)
    p.add_argument("--holdout", required=True, help="holdout dataset CSV")
    p.add_argument("--out", help="defaults to the chain directory")
    p.set_defaults(handler=cmd_predict)

    p = subparsers.add_parser("oracle-check", help="sampler-vs-enumeration checks on micro instances")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--samples", type=int, default=200_000)
    p.add_argument("--out")
    p.set_defaults(handler=cmd_oracle_check)
