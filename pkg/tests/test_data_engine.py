# tests/test_data_engine.py

import json

import numpy as np
import pandas as pd
import pytest

from dpconsider.errors import DatasetValidationError
from dpconsider.services.data_engine import PanelDataEngine, load_dataset, write_dataset


def long_rows(responses, J, d_x=1, d_z=0, seed=0):
    """One row per (subject, occasion, alternative) for 1-based responses."""
    rng = np.random.default_rng(seed)
    rows = []
    for s, occasions in responses.items():
        for t, choice in enumerate(occasions, start=1):
            for j in range(1, J + 1):
                row = {"subject": s, "occasion": t, "choice": choice}
                row.update({f"x{k}": rng.normal() for k in range(1, d_x + 1)})
                row.update({f"z{k}": rng.normal() for k in range(1, d_z + 1)})
                row["alternative"] = j
                rows.append(row)
    return pd.DataFrame(rows)


def write_case(tmp_path, name, df, meta=None):
    path = tmp_path / f"{name}.csv"
    df.to_csv(path, index=False)
    if meta is not None:
        (tmp_path / f"{name}.json").write_text(json.dumps(meta))
    return path


def test_normal_data(tmp_path):
    df = long_rows({1: [1, 3], 2: [2, 2, 4]}, J=4, d_x=2, d_z=1)
    path = write_case(tmp_path, "normal", df, {"n": 2, "J": 4, "d_x": 2, "d_z": 1, "outside_option": False})

    data = load_dataset(path)

    assert (data.n, data.J, data.d_x, data.d_z) == (2, 4, 2, 1)
    np.testing.assert_array_equal(data.T, [2, 3])
    np.testing.assert_array_equal(data.y, [[0, 2, -1], [1, 1, 3]])
    first = df[(df.subject == 2) & (df.occasion == 3) & (df.alternative == 4)]
    assert data.X[1, 2, 3, 1] == pytest.approx(float(first["x2"].iloc[0]))
    assert np.all(data.X[0, 2] == 0.0)


def test_unbalanced_and_noncontiguous_occasions(tmp_path):
    df = long_rows({7: [1, 2], 3: [2]}, J=2)
    df.loc[(df.subject == 7) & (df.occasion == 2), "occasion"] = 10
    path = write_case(tmp_path, "gaps", df)

    data = load_dataset(path)

    np.testing.assert_array_equal(data.subject_ids, [3, 7])
    np.testing.assert_array_equal(data.T, [1, 2])
    np.testing.assert_array_equal(data.y[1], [0, 1])


def test_missing_row_is_a_missing_covariate(tmp_path):
    df = long_rows({1: [1], 2: [2, 1, 1]}, J=4)
    df = df[~((df.subject == 2) & (df.occasion == 3) & (df.alternative == 1))]
    path = write_case(tmp_path, "messy", df)

    with pytest.raises(DatasetValidationError) as info:
        load_dataset(path)

    kinds = [v.kind for v in info.value.violations]
    assert kinds == ["missing covariate"]
    v = info.value.violations[0]
    assert (v.subject, v.occasion, v.category) == (2, 3, 1)


def test_response_out_of_range(tmp_path):
    df = long_rows({1: [5]}, J=4)
    path = write_case(tmp_path, "range", df, {"n": 1, "J": 4, "d_x": 1, "d_z": 0})

    with pytest.raises(DatasetValidationError) as info:
        load_dataset(path)
    assert [v.kind for v in info.value.violations] == ["response out of range"]


def test_missing_columns(tmp_path):
    df = long_rows({1: [1]}, J=2).drop(columns=["choice"])
    path = write_case(tmp_path, "columns", df)

    engine = PanelDataEngine()
    with pytest.raises(DatasetValidationError):
        engine.process_csv(path)
    assert engine.validation_errors[0].kind == "missing column"


def test_non_integer_ids_are_violations(tmp_path):
    df = long_rows({1: [1], 2: [2]}, J=2)
    df["subject"] = df["subject"].astype(object)
    df.loc[0, "subject"] = "abc"
    df.loc[2, "occasion"] = 1.5
    df.loc[3, "alternative"] = np.nan
    path = write_case(tmp_path, "ids", df)

    with pytest.raises(DatasetValidationError) as info:
        load_dataset(path)

    violations = info.value.violations
    assert [v.kind for v in violations] == ["non-integer value"] * 3
    assert [(v.subject, v.occasion) for v in violations] == [(None, 1), (2, None), (2, 1)]
    assert "row 2: subject" in violations[0].message
    assert "alternative" in violations[2].message


def test_inconsistent_choice_within_occasion(tmp_path):
    df = long_rows({1: [1]}, J=2)
    df.loc[df.alternative == 2, "choice"] = 2
    path = write_case(tmp_path, "inconsistent", df)

    with pytest.raises(DatasetValidationError) as info:
        load_dataset(path)
    assert info.value.violations[0].kind == "inconsistent response"


def test_outside_option_is_appended_and_forced(tmp_path):
    df = long_rows({1: [1, 3], 2: [2]}, J=2)
    path = write_case(tmp_path, "outside", df, {"n": 2, "J": 2, "d_x": 1, "d_z": 0, "outside_option": True})

    data = load_dataset(path)

    assert data.J == 3
    assert data.outside_option
    np.testing.assert_array_equal(data.forced_categories, [False, False, True])
    assert np.all(data.X[:, :, 2] == 0.0)
    assert data.y[0, 1] == 2
    assert data.chosen[:, 2].all()


def test_header_only_csv_gives_empty_panel(tmp_path):
    path = tmp_path / "empty.csv"
    path.write_text("subject,occasion,choice,x1,alternative\n")

    data = load_dataset(path)

    assert data.n == 0


def test_written_dataset_loads_back(tmp_path, small_sim):
    csv_path, meta_path = write_dataset(small_sim.data, tmp_path / "data.csv")

    meta = json.loads(meta_path.read_text())
    assert meta == {"n": 30, "J": 4, "d_x": 1, "d_z": 1, "outside_option": False}
    data = load_dataset(csv_path)
    np.testing.assert_array_equal(data.y, small_sim.data.y)
    np.testing.assert_allclose(data.X, small_sim.data.X, rtol=1e-9)
