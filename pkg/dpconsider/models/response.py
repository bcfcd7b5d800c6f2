# dpconsider/models/response.py

from typing import Dict, List, Optional

from pydantic import BaseModel, Field


class DatasetMeta(BaseModel):
    """JSON sidecar written next to every dataset CSV. J counts the listed alternatives."""

    n: int = Field(ge=0)
    J: int = Field(ge=1)
    d_x: int = Field(ge=0)
    d_z: int = Field(ge=0)
    outside_option: bool = False


class CheckResult(BaseModel):
    name: str
    passed: bool
    observed: float
    threshold: float
    detail: str = ""


class OracleReport(BaseModel):
    seed: int
    passed: bool
    checks: List[CheckResult]


class FitReport(BaseModel):
    chain_dir: str
    variant: str
    iterations: int
    draws: int
    acceptance: Dict[str, float]


class RunTiming(BaseModel):
    """Wall-clock timings; the only chain-directory file that differs between identical runs."""

    elapsed_seconds: float
    elapsed_per_1000: List[float]


class SummaryReport(BaseModel):
    chain_dir: str
    files: List[str]
    significant_effects: int
    occupied_components_mode: Optional[int] = None


class PredictReport(BaseModel):
    chain_dir: str
    subjects: int
    total_logpred: float
    structural_zeros: int
