# tests/test_cli.py

import json
import os

import pandas as pd
import pytest

from dpconsider.main import EXIT_IO, EXIT_OK, EXIT_VALIDATION, main

PIPELINE_CONFIG = """\
SIM_DESIGN=small
SIM_N=20
SIM_T=4
SIM_J=4
SIM_HOLDOUT_T=1
SIM_SEED=2
MODEL_VARIANT=mnl_c
MCMC_ITERS=30
MCMC_BURNIN=10
MCMC_SEED=3
MCMC_REPORT_EVERY=10
"""


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "run.env"
    path.write_text(PIPELINE_CONFIG)
    return path


@pytest.fixture(autouse=True)
def clean_environment(monkeypatch):
    for key in list(os.environ):
        if key.startswith(("SIM_", "MCMC_", "HYPER_", "MODEL_")):
            monkeypatch.delenv(key)


def test_simulate_is_reproducible(config_file, tmp_path):
    assert main(["simulate", "--config", str(config_file), "--out", str(tmp_path / "a")]) == EXIT_OK
    assert main(["simulate", "--config", str(config_file), "--out", str(tmp_path / "b")]) == EXIT_OK
    for name in ("data.csv", "data.json", "truth_cs.csv", "holdout.csv", "config.env"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    meta = json.loads((tmp_path / "a" / "data.json").read_text())
    assert (meta["n"], meta["J"], meta["d_x"], meta["d_z"]) == (20, 4, 1, 0)


def test_seed_flag_changes_simulation(config_file, tmp_path):
    main(["simulate", "--config", str(config_file), "--out", str(tmp_path / "a")])
    main(["simulate", "--config", str(config_file), "--seed", "9", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "data.csv").read_bytes() != (tmp_path / "b" / "data.csv").read_bytes()
    assert "SIM_SEED=9" in (tmp_path / "b" / "config.env").read_text()


def test_simulate_fit_summarize_predict(config_file, tmp_path):
    sim, chain = tmp_path / "sim", tmp_path / "chain"
    assert main(["simulate", "--config", str(config_file), "--out", str(sim)]) == EXIT_OK
    assert main([
        "fit", "--config", str(config_file), "--data", str(sim / "data.csv"), "--out", str(chain),
    ]) == EXIT_OK
    assert (chain / "metadata.json").is_file()
    assert main(["summarize", "--chain", str(chain), "--data", str(sim / "data.csv")]) == EXIT_OK
    incl = pd.read_csv(chain / "inclusion_probs.csv")
    assert len(incl) == 20 * 4
    assert incl["prob"].between(0, 1).all()
    assert main(["predict", "--chain", str(chain), "--holdout", str(sim / "holdout.csv")]) == EXIT_OK
    pred = pd.read_csv(chain / "pred_loglik.csv")
    assert list(pred.columns) == ["subject", "h", "logpred"]
    assert (pred["h"] == 1).all()
    report = json.loads((chain / "predict.json").read_text())
    assert report["subjects"] == 20


def test_outputs_outside_the_chain_carry_its_config(config_file, tmp_path):
    sim, chain = tmp_path / "sim", tmp_path / "chain"
    summary, prediction = tmp_path / "summary", tmp_path / "prediction"
    main(["simulate", "--config", str(config_file), "--out", str(sim)])
    main(["fit", "--config", str(config_file), "--data", str(sim / "data.csv"), "--out", str(chain)])
    assert main(["summarize", "--chain", str(chain), "--out", str(summary)]) == EXIT_OK
    assert main([
        "predict", "--chain", str(chain), "--holdout", str(sim / "holdout.csv"), "--out", str(prediction),
    ]) == EXIT_OK
    for out in (summary, prediction):
        assert (out / "config.env").read_bytes() == (chain / "config.env").read_bytes()
    assert "MCMC_SEED=3" in (summary / "config.env").read_text()
    probs = pd.read_csv(prediction / "response_probs.csv")
    assert probs.groupby(["subject", "occasion"])["prob"].sum().to_numpy() == pytest.approx(1.0)


def test_prior_design_writes_quantiles(tmp_path):
    config = tmp_path / "prior.env"
    config.write_text("SIM_DESIGN=prior\nSIM_J=3\nSIM_K=10\nSIM_DRAWS=200\n")
    assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "prior")]) == EXIT_OK
    table = pd.read_csv(tmp_path / "prior" / "prior_cs_quantiles.csv")
    assert len(table) == 7
    assert (table["q05"] <= table["q95"]).all()


def test_invalid_dataset_exits_with_validation_code(config_file, tmp_path):
    sim = tmp_path / "sim"
    main(["simulate", "--config", str(config_file), "--out", str(sim)])
    df = pd.read_csv(sim / "data.csv")
    df.loc[df["subject"] == 1, "choice"] = 9
    df.to_csv(sim / "data.csv", index=False)
    code = main(["fit", "--config", str(config_file), "--data", str(sim / "data.csv"), "--out", str(tmp_path / "c")])
    assert code == EXIT_VALIDATION


def test_unknown_config_key_exits_with_validation_code(tmp_path):
    config = tmp_path / "bad.env"
    config.write_text("MCMC_ITERATIONS=10\n")
    assert main(["simulate", "--config", str(config), "--out", str(tmp_path / "x")]) == EXIT_VALIDATION


def test_missing_chain_exits_with_io_code(tmp_path):
    assert main(["summarize", "--chain", str(tmp_path / "nowhere")]) == EXIT_IO


def test_missing_data_file_exits_with_io_code(config_file, tmp_path):
    code = main(["fit", "--config", str(config_file), "--data", str(tmp_path / "none.csv"), "--out", str(tmp_path / "c")])
    assert code == EXIT_IO
