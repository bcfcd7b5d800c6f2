# dpconsider/models/state.py

from dataclasses import dataclass, field, replace
from typing import List, Optional, Tuple

import numpy as np

from dpconsider.models.dataset import PanelDataset


@dataclass(frozen=True, eq=False)
class ConsiderationState:
    """Binary inclusion matrix C (n, J); row i is subject i's consideration vector."""

    C: np.ndarray

    @classmethod
    def full(cls, n: int, J: int) -> "ConsiderationState":
        return cls(np.ones((n, J), dtype=bool))

    def sets(self) -> List[Tuple[int, ...]]:
        """Set view with 1-based category labels."""
        return [tuple(int(j) + 1 for j in np.nonzero(row)[0]) for row in self.C]

    def forced_inclusion_violations(self, data: PanelDataset) -> np.ndarray:
        """(n, J) True where an observed response is missing from the set."""
        return data.chosen & ~self.C.astype(bool)

    def satisfies_forced_inclusion(self, data: PanelDataset) -> bool:
        return not self.forced_inclusion_violations(data).any()


@dataclass(frozen=True, eq=False)
class ResponseParams:
    """delta (J,) with the last entry pinned at 0, beta (d_x,), b (n, d_z), D (d_z, d_z)."""

    delta: np.ndarray
    beta: np.ndarray
    b: np.ndarray
    D: np.ndarray

    @classmethod
    def zeros(cls, n: int, J: int, d_x: int, d_z: int) -> "ResponseParams":
        return cls(np.zeros(J), np.zeros(d_x), np.zeros((n, d_z)), np.eye(d_z))

    def with_(self, **changes) -> "ResponseParams":
        return replace(self, **changes)

    def violations(self) -> List[str]:
        issues = []
        if self.delta.size and self.delta[-1] != 0.0:
            issues.append(f"delta_J must be exactly 0, got {self.delta[-1]}")
        if self.D.size:
            if not np.array_equal(self.D, self.D.T):
                issues.append("D is not symmetric")
            elif np.linalg.eigvalsh(self.D).min() <= 0:
                issues.append("D is not positive definite")
        return issues


def stick_weights(V: np.ndarray) -> np.ndarray:
    """omega_h = V_h * prod_{l<h} (1 - V_l)."""
    V = np.asarray(V, dtype=float)
    remaining = np.concatenate(([1.0], np.cumprod(1.0 - V)[:-1]))
    return V * remaining


@dataclass(frozen=True, eq=False)
class MixtureState:
    """
    Slice-sampled stick-breaking mixture over attention-probability rows.

    V (K*,), q (K*, J), S (n,) 0-based component labels, u (n,), alpha > 0.
    """

    V: np.ndarray
    q: np.ndarray
    S: np.ndarray
    u: np.ndarray
    alpha: float

    @property
    def k_star(self) -> int:
        return int(self.V.shape[0])

    @property
    def omega(self) -> np.ndarray:
        return stick_weights(self.V)

    def violations(self) -> List[str]:
        issues = []
        omega = self.omega
        if np.any((self.V <= 0) | (self.V >= 1)):
            issues.append("stick variables must lie in (0, 1)")
        if omega.sum() > 1.0 + 1e-12:
            issues.append(f"stick weights sum to {omega.sum()} > 1")
        if np.any(self.S >= self.k_star) or np.any(self.S < 0):
            issues.append("assignment outside active components")
        elif self.u.size and np.any(self.u > omega[self.S]):
            issues.append("slice admissibility u_i <= omega_{S_i} broken")
        if self.u.size and not omega.sum() > 1.0 - self.u.min():
            issues.append("active truncation does not cover 1 - min u")
        if self.alpha <= 0:
            issues.append("alpha must be positive")
        return issues


@dataclass(frozen=True, eq=False)
class ClusterStats:
    """n_h (K,) component sizes and (K, J) per-component inclusion counts."""

    sizes: np.ndarray
    inclusion: np.ndarray

    @classmethod
    def from_assignments(cls, S: np.ndarray, C: np.ndarray, k: int) -> "ClusterStats":
        onehot = np.zeros((S.shape[0], k))
        onehot[np.arange(S.shape[0]), S] = 1.0
        return cls(onehot.sum(axis=0), onehot.T @ C.astype(float))


@dataclass
class ProposalLog:
    """Column store of consideration-set proposals (one row per coordinate visit)."""

    iteration: List[np.ndarray] = field(default_factory=list)
    subject: List[np.ndarray] = field(default_factory=list)
    coord: List[np.ndarray] = field(default_factory=list)
    current: List[np.ndarray] = field(default_factory=list)
    proposed: List[np.ndarray] = field(default_factory=list)
    accept_prob: List[np.ndarray] = field(default_factory=list)
    accepted: List[np.ndarray] = field(default_factory=list)

    def append(self, iteration, subject, coord, current, proposed, accept_prob, accepted):
        m = len(subject)
        self.iteration.append(np.full(m, iteration, dtype=int))
        self.subject.append(np.asarray(subject, dtype=int))
        self.coord.append(np.asarray(coord, dtype=int))
        self.current.append(np.asarray(current, dtype=int))
        self.proposed.append(np.asarray(proposed, dtype=int))
        self.accept_prob.append(np.asarray(accept_prob, dtype=float))
        self.accepted.append(np.asarray(accepted, dtype=bool))

    def extend(self, other: "ProposalLog"):
        for name in ("iteration", "subject", "coord", "current", "proposed", "accept_prob", "accepted"):
            getattr(self, name).extend(getattr(other, name))

    def column(self, name: str) -> np.ndarray:
        parts = getattr(self, name)
        return np.concatenate(parts) if parts else np.zeros(0)


@dataclass(frozen=True)
class TailoredProposal:
    """Gaussian independence proposal centred at the conditional mode."""

    mode: np.ndarray
    cov: np.ndarray
    scale: float
    iterations: int
    converged: bool
    fallback: bool = False


@dataclass(frozen=True)
class SamplerState:
    """Everything the fit loop carries between iterations."""

    params: ResponseParams
    cs: ConsiderationState
    mixture: Optional[MixtureState]
