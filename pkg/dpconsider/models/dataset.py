# dpconsider/models/dataset.py

from dataclasses import dataclass, field
from functools import cached_property
from typing import List, Optional

import numpy as np
from pydantic import BaseModel


class Violation(BaseModel):
    """One broken dataset invariant. Indices are 1-based, as in the data files."""

    kind: str
    subject: Optional[int] = None
    occasion: Optional[int] = None
    category: Optional[int] = None
    message: str

    def __str__(self) -> str:
        return self.message


@dataclass(frozen=True, eq=False)
class PanelDataset:
    """
    Unbalanced panel of categorical responses with alternative-specific covariates.

    Arrays are padded to the longest panel. Categories and occasions are 0-based
    internally; padded occasions hold y = -1 and zero covariates.
        y: (n, T_max) ints
        X: (n, T_max, J, d_x)
        Z: (n, T_max, J, d_z)
    """

    T: np.ndarray
    y: np.ndarray
    X: np.ndarray
    Z: np.ndarray
    subject_ids: np.ndarray
    outside_option: bool = False
    # categories whose inclusion is forced for every subject (outside option)
    forced_categories: np.ndarray = field(default=None)

    def __post_init__(self):
        if self.forced_categories is None:
            object.__setattr__(self, "forced_categories", np.zeros(self.J, dtype=bool))

    @property
    def n(self) -> int:
        return int(self.y.shape[0])

    @property
    def t_max(self) -> int:
        return int(self.y.shape[1])

    @property
    def J(self) -> int:
        return int(self.X.shape[2])

    @property
    def d_x(self) -> int:
        return int(self.X.shape[3])

    @property
    def d_z(self) -> int:
        return int(self.Z.shape[3])

    @cached_property
    def mask(self) -> np.ndarray:
        """(n, T_max) True for real occasions."""
        return np.arange(self.t_max)[None, :] < self.T[:, None]

    @cached_property
    def chosen(self) -> np.ndarray:
        """(n, J) True where inclusion is forced: observed responses and forced categories."""
        out = np.zeros((self.n, self.J), dtype=bool)
        rows, cols = np.nonzero(self.mask)
        ys = self.y[rows, cols]
        ok = (ys >= 0) & (ys < self.J)
        out[rows[ok], ys[ok]] = True
        out[:, self.forced_categories] = True
        return out

    @cached_property
    def y_safe(self) -> np.ndarray:
        """Responses with padding mapped to category 0 (always masked out downstream)."""
        return np.where(self.mask, self.y, 0)

    def subject_index(self, subject_id) -> int:
        hits = np.nonzero(self.subject_ids == subject_id)[0]
        if hits.size == 0:
            from dpconsider.errors import UnknownSubjectError

            raise UnknownSubjectError(f"Unknown subject id: {subject_id}")
        return int(hits[0])

    def subset(self, index: np.ndarray) -> "PanelDataset":
        index = np.asarray(index, dtype=int)
        return PanelDataset(
            T=self.T[index],
            y=self.y[index],
            X=self.X[index],
            Z=self.Z[index],
            subject_ids=self.subject_ids[index],
            outside_option=self.outside_option,
            forced_categories=self.forced_categories,
        )


def validate_dataset(data: PanelDataset) -> List[Violation]:
    """Every broken PanelDataset invariant; an empty list means the data is usable."""
    violations: List[Violation] = []
    ids = data.subject_ids

    for i in np.nonzero(data.T < 1)[0]:
        violations.append(Violation(
            kind="empty panel", subject=int(ids[i]),
            message=f"subject {ids[i]}: T_i = {int(data.T[i])}, at least one occasion is required",
        ))

    mask = data.mask
    bad = mask & ((data.y < 0) | (data.y >= data.J))
    for i, t in zip(*np.nonzero(bad)):
        violations.append(Violation(
            kind="response out of range", subject=int(ids[i]), occasion=int(t) + 1,
            message=f"subject {ids[i]}, occasion {t + 1}: response {int(data.y[i, t]) + 1} outside 1..{data.J}",
        ))

    for name, arr in (("x", data.X), ("z", data.Z)):
        if arr.shape[3] == 0:
            continue
        missing = np.isnan(arr).any(axis=3) & mask[:, :, None]
        for i, t, j in zip(*np.nonzero(missing)):
            violations.append(Violation(
                kind="missing covariate", subject=int(ids[i]), occasion=int(t) + 1, category=int(j) + 1,
                message=f"subject {ids[i]}, occasion {t + 1}, category {j + 1}: missing {name} covariates",
            ))
    return violations
