# dpconsider/utils/file_handler.py

import json
import os
import tempfile
from pathlib import Path
from typing import Union

import numpy as np
import pandas as pd
from pydantic import BaseModel

PathLike = Union[str, Path]
FLOAT_FORMAT = "%.10g"


def ensure_dir(path: PathLike) -> Path:
    path = Path(path)
    path.mkdir(parents=True, exist_ok=True)
    return path


def save_atomic(path: PathLike, payload: bytes) -> Path:
    """Write through a temp file in the same directory, then rename over the target."""
    path = Path(path)
    ensure_dir(path.parent)
    fd, temp_path = tempfile.mkstemp(dir=path.parent, suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as buffer:
            buffer.write(payload)
        os.replace(temp_path, path)
    except BaseException:
        if os.path.exists(temp_path):
            os.remove(temp_path)
        raise
    return path


def write_csv(df: pd.DataFrame, path: PathLike) -> Path:
    return save_atomic(path, df.to_csv(index=False, float_format=FLOAT_FORMAT, lineterminator="\n").encode())


def write_json(obj: Union[BaseModel, dict, list], path: PathLike) -> Path:
    if isinstance(obj, BaseModel):
        text = obj.model_dump_json(indent=2)
    else:
        text = json.dumps(obj, indent=2, sort_keys=True, default=float)
    return save_atomic(path, (text + "\n").encode())


def write_text(text: str, path: PathLike) -> Path:
    return save_atomic(path, text.encode())


def write_npy(array: np.ndarray, path: PathLike) -> Path:
    path = Path(path)
    ensure_dir(path.parent)
    # np.save writes no timestamps, so identical arrays give identical bytes
    with open(path, "wb") as f:
        np.save(f, np.ascontiguousarray(array), allow_pickle=False)
    return path


def read_npy(path: PathLike) -> np.ndarray:
    return np.load(path, allow_pickle=False)
