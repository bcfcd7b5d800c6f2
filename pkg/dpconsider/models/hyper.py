# dpconsider/models/hyper.py

from enum import Enum
from typing import Literal, Optional, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator


class ModelVariant(str, Enum):
    """The four multinomial-logit variants: random effects and/or latent consideration."""

    MNL = "mnl"
    MNL_R = "mnl_r"
    MNL_C = "mnl_c"
    MNL_RC = "mnl_rc"

    @property
    def random_effects(self) -> bool:
        return self in (ModelVariant.MNL_R, ModelVariant.MNL_RC)

    @property
    def consideration(self) -> bool:
        return self in (ModelVariant.MNL_C, ModelVariant.MNL_RC)


class Hyperparams(BaseModel):
    """Prior hyperparameters and the tailored-proposal variance scale."""

    model_config = ConfigDict(extra="forbid")

    profile: Literal["simulation", "application"] = "simulation"
    a_alpha: float = Field(2.0, gt=0)
    b_alpha: float = Field(4.0, gt=0)
    q_prior: Literal["beta", "sparsity"] = "sparsity"
    # Beta(a_q, b_q) when q_prior == "beta"
    a_q: float = Field(1.0, gt=0)
    b_q: float = Field(1.0, gt=0)
    # (s, r0) with a = s*r, b = s*(1-r), r = r0/J when q_prior == "sparsity"
    s: Optional[float] = Field(None, gt=0)
    r0: Optional[float] = Field(None, gt=0)
    v_delta: float = Field(3.0, gt=0)
    v_beta: float = Field(3.0, gt=0)
    wishart_v: float = Field(9.0, gt=0)
    # R = wishart_r * I
    wishart_r: float = Field(1.0 / 9.0, gt=0)
    proposal_scale: Optional[float] = Field(None, gt=0)

    @model_validator(mode="after")
    def _apply_profile(self) -> "Hyperparams":
        application = self.profile == "application"
        if self.s is None:
            self.s = 5.0 if application else 1.0
        if self.r0 is None:
            self.r0 = 30.0 if application else 1.0
        if self.proposal_scale is None:
            self.proposal_scale = 1e-2 if application else 1.0
        return self

    def q_beta_params(self, J: int) -> Tuple[np.ndarray, np.ndarray]:
        """Per-category Beta parameters (a_{q_j}, b_{q_j}) for the attention probabilities."""
        if self.q_prior == "beta":
            return np.full(J, self.a_q), np.full(J, self.b_q)
        r = self.r0 / J
        if not 0.0 < r < 1.0:
            raise ValueError(f"Sparsity prior needs 0 < r0/J < 1, got r0={self.r0}, J={J}")
        return np.full(J, self.s * r), np.full(J, self.s * (1.0 - r))

    def wishart_scale(self, d_z: int) -> np.ndarray:
        return self.wishart_r * np.eye(d_z)


class McmcSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    iters: int = Field(1000, ge=1)
    burnin: Optional[int] = Field(None, ge=0)
    thin: int = Field(1, ge=1)
    seed: int = Field(0, ge=0)
    threads: int = Field(1, ge=1)
    checkpoint_every: int = Field(0, ge=0)
    newton_max_iter: int = Field(50, ge=1)
    newton_tol: float = Field(1e-8, gt=0)
    cs_block_size: int = Field(64, ge=1)
    report_every: int = Field(1000, ge=1)
    debug: bool = False
    log_proposals: bool = False

    @property
    def resolved_burnin(self) -> int:
        return self.burnin if self.burnin is not None else int(0.2 * self.iters)

    @property
    def n_draws(self) -> int:
        kept = max(self.iters - self.resolved_burnin, 0)
        return kept // self.thin

    @model_validator(mode="after")
    def _check_burnin(self) -> "McmcSettings":
        if self.resolved_burnin >= self.iters:
            raise ValueError(f"burnin ({self.resolved_burnin}) must be smaller than iters ({self.iters})")
        if self.n_draws < 1:
            raise ValueError(f"thin={self.thin} keeps no draws after burn-in")
        return self


class SimulationSettings(BaseModel):
    model_config = ConfigDict(extra="forbid")

    design: Literal["small", "large", "prior"] = "small"
    n: int = Field(100, ge=1)
    t: int = Field(10, ge=1)
    j: int = Field(4, ge=1)
    beta: float = 1.0
    pmf: Optional[str] = None
    z_equals_x: bool = False
    holdout_t: int = Field(0, ge=0)
    k: int = Field(20, ge=1)
    draws: int = Field(10_000, ge=1)
    seed: int = Field(0, ge=0)


class RunConfig(BaseModel):
    """Everything a CLI command needs, grouped by config-file section."""

    model_config = ConfigDict(extra="forbid")

    hyper: Hyperparams = Field(default_factory=Hyperparams)
    mcmc: McmcSettings = Field(default_factory=McmcSettings)
    variant: ModelVariant = ModelVariant.MNL_RC
    sim: SimulationSettings = Field(default_factory=SimulationSettings)
