# dpconsider/models/chain.py

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Union

import numpy as np
from pydantic import BaseModel

from dpconsider.errors import ChainNotFoundError
from dpconsider.models.state import ResponseParams
from dpconsider.utils.file_handler import read_npy, write_json, write_npy

logger = logging.getLogger(__name__)

METADATA_FILE = "metadata.json"

# per-draw fields; omega and q are zero-padded to the largest K* in the chain
ARRAY_FIELDS = (
    "delta", "beta", "b", "D", "C", "S", "alpha", "k_star", "omega", "q",
    "loglik", "cs_accepted", "cs_proposals",
)


class ChainMetadata(BaseModel):
    seed: int
    variant: str
    iters: int
    burnin: int
    thin: int
    n: int
    J: int
    d_x: int
    d_z: int
    subject_ids: List[int]
    outside_option: bool = False
    hyper: Dict[str, object] = {}
    iterations_completed: int = 0
    data_path: Optional[str] = None


@dataclass(eq=False)
class ChainStore:
    """
    Stored post-burn-in draws, G = number of kept iterations.

        delta (G, J), beta (G, d_x), b (G, n, d_z), D (G, d_z, d_z), C (G, n, J) bool,
        S (G, n), alpha (G,), k_star (G,), omega (G, K_max), q (G, K_max, J),
        loglik (G,), cs_accepted / cs_proposals (G, n).

    Without consideration sets S is all zeros, alpha and k_star are 0 and
    omega/q have width 0.
    """

    metadata: ChainMetadata
    arrays: Dict[str, np.ndarray] = field(default_factory=dict)

    def __getattr__(self, name: str) -> np.ndarray:
        if name in ARRAY_FIELDS:
            return self.__dict__["arrays"][name]
        raise AttributeError(name)

    @property
    def n_draws(self) -> int:
        return int(self.arrays["delta"].shape[0])

    @property
    def has_mixture(self) -> bool:
        return self.arrays["omega"].shape[1] > 0

    def draw_params(self, g: int) -> ResponseParams:
        return ResponseParams(self.delta[g], self.beta[g], self.b[g], self.D[g])

    def draw_mixture(self, g: int):
        """(omega, q) of draw g truncated at its own K*."""
        k = int(self.k_star[g])
        return self.omega[g, :k], self.q[g, :k]

    @classmethod
    def from_draws(cls, metadata: ChainMetadata, draws: Dict[str, List[np.ndarray]], J: int) -> "ChainStore":
        """Stack per-draw lists; omega/q rows of varying K* are zero-padded."""
        arrays: Dict[str, np.ndarray] = {}
        k_max = max((w.shape[0] for w in draws["omega"]), default=0)
        for name in ARRAY_FIELDS:
            rows = draws[name]
            if name == "omega":
                arrays[name] = np.zeros((len(rows), k_max))
                for g, w in enumerate(rows):
                    arrays[name][g, :w.shape[0]] = w
            elif name == "q":
                arrays[name] = np.zeros((len(rows), k_max, J))
                for g, w in enumerate(rows):
                    arrays[name][g, :w.shape[0]] = w
            else:
                arrays[name] = np.stack(rows) if rows else np.zeros((0,))
        return cls(metadata=metadata, arrays=arrays)

    def to_draws(self) -> Dict[str, List[np.ndarray]]:
        """Inverse of from_draws, used when resuming from a checkpoint."""
        draws: Dict[str, List[np.ndarray]] = {}
        for name in ARRAY_FIELDS:
            if name in ("omega", "q"):
                draws[name] = [self.arrays[name][g, :int(k)] for g, k in enumerate(self.k_star)]
            else:
                draws[name] = list(self.arrays[name])
        return draws

    def save(self, directory: Union[str, Path]) -> Path:
        directory = Path(directory)
        for name in ARRAY_FIELDS:
            write_npy(self.arrays[name], directory / f"{name}.npy")
        write_json(self.metadata, directory / METADATA_FILE)
        return directory

    @classmethod
    def load(cls, directory: Union[str, Path]) -> "ChainStore":
        directory = Path(directory)
        meta_file = directory / METADATA_FILE
        if not meta_file.is_file():
            raise ChainNotFoundError(f"No chain at {directory} (missing {METADATA_FILE})")
        metadata = ChainMetadata(**json.loads(meta_file.read_text()))
        arrays = {}
        for name in ARRAY_FIELDS:
            path = directory / f"{name}.npy"
            if not path.is_file():
                raise ChainNotFoundError(f"Chain at {directory} is missing {path.name}")
            arrays[name] = read_npy(path)
        logger.debug("Loaded chain %s with %d draws", directory, arrays["delta"].shape[0])
        return cls(metadata=metadata, arrays=arrays)
