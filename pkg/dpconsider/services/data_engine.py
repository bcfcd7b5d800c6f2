# dpconsider/services/data_engine.py

import json
import logging
from pathlib import Path
from typing import List, Optional, Tuple, Union

import numpy as np
import pandas as pd
from pydantic import ValidationError

from dpconsider.errors import DatasetValidationError
from dpconsider.models.dataset import PanelDataset, Violation, validate_dataset
from dpconsider.models.response import DatasetMeta
from dpconsider.utils.file_handler import write_csv, write_json

logger = logging.getLogger(__name__)


def sidecar_path(csv_path: Union[str, Path]) -> Path:
    return Path(csv_path).with_suffix(".json")


def _as_int(value) -> Optional[int]:
    return int(value) if pd.notna(value) and np.isfinite(value) and value == np.floor(value) else None


class PanelDataEngine:
    """Loads the long-format panel CSV (one row per subject, occasion and alternative)."""

    REQUIRED_COLUMNS = ["subject", "occasion", "choice", "alternative"]
    INTEGER_COLUMNS = ["subject", "occasion", "alternative", "choice"]

    def __init__(self):
        self.df: Optional[pd.DataFrame] = None
        self.meta: Optional[DatasetMeta] = None
        self.validation_errors: List[Violation] = []

    def process_csv(self, file_path: Union[str, Path], meta_path: Optional[Union[str, Path]] = None) -> PanelDataset:
        """
        Main loading pipeline.
        Raises DatasetValidationError listing every violation found.
        """
        # Step 1: Load and validate structure
        self._load_and_validate(Path(file_path), meta_path)
        if self.validation_errors:
            raise DatasetValidationError(self.validation_errors)

        # Step 2: Assemble padded arrays
        data = self._build_panel()

        # Step 3: Dataset invariants
        self.validation_errors.extend(validate_dataset(data))
        if self.validation_errors:
            raise DatasetValidationError(self.validation_errors)

        logger.info(
            "Loaded %s: n=%d, J=%d, d_x=%d, d_z=%d, occasions=%d",
            file_path, data.n, data.J, data.d_x, data.d_z, int(data.T.sum()),
        )
        return data

    def _load_and_validate(self, file_path: Path, meta_path) -> None:
        self.df = pd.read_csv(file_path)

        missing_cols = [col for col in self.REQUIRED_COLUMNS if col not in self.df.columns]
        if missing_cols:
            self.validation_errors.append(Violation(
                kind="missing column", message=f"Missing required columns: {missing_cols}",
            ))
            return

        self._coerce_integer_columns()
        self.x_cols = self._numbered_columns("x")
        self.z_cols = self._numbered_columns("z")

        meta_path = Path(meta_path) if meta_path is not None else sidecar_path(file_path)
        if meta_path.is_file():
            try:
                self.meta = DatasetMeta(**json.loads(meta_path.read_text()))
            except (ValueError, ValidationError) as e:
                self.validation_errors.append(Violation(kind="bad metadata", message=f"{meta_path}: {e}"))
                return
        else:
            logger.info("No metadata sidecar at %s; inferring dimensions from the CSV", meta_path)
            J = int(self.df["alternative"].max()) if len(self.df) else 1
            self.meta = DatasetMeta(
                n=int(self.df["subject"].nunique()), J=max(J, 1),
                d_x=len(self.x_cols), d_z=len(self.z_cols),
            )

        if (self.meta.d_x, self.meta.d_z) != (len(self.x_cols), len(self.z_cols)):
            self.validation_errors.append(Violation(
                kind="bad metadata",
                message=f"sidecar declares d_x={self.meta.d_x}, d_z={self.meta.d_z} but the CSV has "
                        f"{len(self.x_cols)} x and {len(self.z_cols)} z columns",
            ))
        n_found = int(self.df["subject"].nunique())
        if n_found != self.meta.n:
            self.validation_errors.append(Violation(
                kind="bad metadata", message=f"sidecar declares n={self.meta.n} but the CSV has {n_found} subjects",
            ))

        J_total = self.meta.J + int(self.meta.outside_option)
        bad_alt = self.df[(self.df["alternative"] < 1) | (self.df["alternative"] > J_total)]
        for row in bad_alt.itertuples(index=False):
            self.validation_errors.append(Violation(
                kind="alternative out of range", subject=int(row.subject), occasion=int(row.occasion),
                message=f"subject {row.subject}, occasion {row.occasion}: alternative {row.alternative} outside 1..{J_total}",
            ))

        spread = self.df.groupby(["subject", "occasion"])["choice"].nunique(dropna=False)
        for (subject, occasion) in spread[spread > 1].index:
            self.validation_errors.append(Violation(
                kind="inconsistent response", subject=int(subject), occasion=int(occasion),
                message=f"subject {subject}, occasion {occasion}: rows disagree on the chosen alternative",
            ))

    def _coerce_integer_columns(self) -> None:
        """Rows whose ids, alternative or choice are not whole numbers are reported, then dropped."""
        df = self.df
        numeric = {col: pd.to_numeric(df[col], errors="coerce") for col in self.INTEGER_COLUMNS}
        bad = pd.Series(False, index=df.index)
        for col, values in numeric.items():
            broken = values.map(_as_int).isna()
            for idx in df.index[broken]:
                self.validation_errors.append(Violation(
                    kind="non-integer value",
                    subject=_as_int(numeric["subject"][idx]), occasion=_as_int(numeric["occasion"][idx]),
                    message=f"row {idx + 2}: {col} = {df.at[idx, col]!r} is not an integer",
                ))
            bad |= broken
        self.df = df.loc[~bad].assign(**{col: values[~bad].astype("int64") for col, values in numeric.items()})

    def _numbered_columns(self, prefix: str) -> List[str]:
        cols = [c for c in self.df.columns if c.startswith(prefix) and c[len(prefix):].isdigit()]
        return sorted(cols, key=lambda c: int(c[len(prefix):]))

    def _build_panel(self) -> PanelDataset:
        df = self.df
        meta = self.meta
        J = meta.J + int(meta.outside_option)
        subjects = np.sort(df["subject"].unique())
        n = subjects.size

        # occasions are ranked within subject, so labels need not be contiguous
        s_idx = np.searchsorted(subjects, df["subject"].to_numpy())
        t_idx = (df.groupby("subject")["occasion"].rank(method="dense").to_numpy() - 1).astype(int)
        T = np.zeros(n, dtype=int)
        if len(df):
            np.maximum.at(T, s_idx, t_idx + 1)
        t_max = int(T.max()) if n else 0
        mask = np.arange(t_max)[None, :] < T[:, None]

        X = np.zeros((n, t_max, J, meta.d_x))
        Z = np.zeros((n, t_max, J, meta.d_z))
        # every listed alternative must carry covariates; the outside option defaults to zeros
        listed = slice(0, meta.J)
        X[:, :, listed][mask] = np.nan
        Z[:, :, listed][mask] = np.nan
        j_idx = df["alternative"].to_numpy().astype(int) - 1
        X[s_idx, t_idx, j_idx] = df[self.x_cols].to_numpy(dtype=float).reshape(len(df), meta.d_x)
        Z[s_idx, t_idx, j_idx] = df[self.z_cols].to_numpy(dtype=float).reshape(len(df), meta.d_z)

        y = np.full((n, t_max), -1, dtype=int)
        choice = df["choice"].to_numpy()
        y[s_idx, t_idx] = choice - 1

        forced = np.zeros(J, dtype=bool)
        if meta.outside_option:
            forced[-1] = True
        return PanelDataset(
            T=T, y=y, X=X, Z=Z, subject_ids=subjects,
            outside_option=meta.outside_option, forced_categories=forced,
        )


def load_dataset(file_path: Union[str, Path], meta_path: Optional[Union[str, Path]] = None) -> PanelDataset:
    return PanelDataEngine().process_csv(file_path, meta_path)


def dataset_frame(data: PanelDataset) -> pd.DataFrame:
    """Long-format rows in (subject, occasion, alternative) order."""
    J_listed = data.J - int(data.outside_option)
    i, t, j = np.nonzero(data.mask[:, :, None] & np.ones(J_listed, dtype=bool)[None, None, :])
    frame = {
        "subject": data.subject_ids[i],
        "occasion": t + 1,
        "choice": data.y[i, t] + 1,
    }
    for k in range(data.d_x):
        frame[f"x{k + 1}"] = data.X[i, t, j, k]
    for k in range(data.d_z):
        frame[f"z{k + 1}"] = data.Z[i, t, j, k]
    frame["alternative"] = j + 1
    return pd.DataFrame(frame)


def write_dataset(data: PanelDataset, csv_path: Union[str, Path]) -> Tuple[Path, Path]:
    """CSV plus JSON sidecar (same stem)."""
    meta = DatasetMeta(
        n=data.n, J=data.J - int(data.outside_option), d_x=data.d_x, d_z=data.d_z,
        outside_option=data.outside_option,
    )
    csv_path = write_csv(dataset_frame(data), csv_path)
    meta_path = write_json(meta, sidecar_path(csv_path))
    return csv_path, meta_path
