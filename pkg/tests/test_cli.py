import json

import numpy as np
import pytest

from fcpqr import SimScenario, generate_dataset, save_dataset
from fcpqr.cli import dispatch


@pytest.fixture()
def toy_files(tmp_path):
    sc = SimScenario(n=40, m=6, tau=0.5, error_family="gaussian", xi_effect=1.0,
                     seed=12)
    ds, _ = generate_dataset(sc)
    schema = save_dataset(ds, tmp_path / "y.csv", tmp_path / "cov.csv")
    (tmp_path / "schema.json").write_text(json.dumps(schema))
    return tmp_path


def base_fit_argv(tmp_path, out):
    return ["fit", "--data", str(tmp_path / "y.csv"),
            "--covariates", str(tmp_path / "cov.csv"),
            "--schema", str(tmp_path / "schema.json"),
            "--tau", "0.5", "--lambda-tilde", "4", "--seed", "7",
            "--max-iter", "80", "--out", str(out)]


def test_fit_writes_artifacts(toy_files):
    out = toy_files / "run"
    assert dispatch(base_fit_argv(toy_files, out)) == 0
    payload = json.loads((out / "fit.json").read_text())
    assert "gamma" in payload and "labels" in payload and "trace" in payload
    assert payload["kernel"] == "gaussian:0.2"
    assert payload["config"]["tau"] == 0.5
    assert payload["config"]["seed"] == 7
    assert payload["config"]["h"] > 0
    curves = (out / "curves.csv").read_text().splitlines()
    assert curves[0] == "s,beta1,beta2,beta3,theta1,theta2"
    assert len(curves) == 7
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 7
    assert manifest["command"] == "fit"
    assert "fcpqr" in manifest["versions"]


def test_manifest_replay_is_byte_identical(toy_files):
    out1 = toy_files / "run1"
    assert dispatch(base_fit_argv(toy_files, out1)) == 0
    manifest = json.loads((out1 / "manifest.json").read_text())
    out2 = toy_files / "run2"
    argv = [str(out2) if tok == str(out1) else tok for tok in manifest["argv"]]
    assert dispatch(argv) == 0
    for name in ("fit.json", "curves.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_fit_infers_canonical_schema(toy_files):
    out = toy_files / "run_noschema"
    argv = base_fit_argv(toy_files, out)
    k = argv.index("--schema")
    del argv[k:k + 2]
    assert dispatch(argv) == 0
    assert (out / "fit.json").exists()


def test_seed_drawn_and_recorded_when_absent(toy_files):
    out = toy_files / "run_noseed"
    argv = base_fit_argv(toy_files, out)
    k = argv.index("--seed")
    del argv[k:k + 2]
    assert dispatch(argv) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert isinstance(manifest["seed"], int)
    assert "--seed" in manifest["argv"]


def test_usage_error_exits_2(toy_files):
    with pytest.raises(SystemExit) as err:
        dispatch(["fit", "--bogus-flag", "1"])
    assert err.value.code == 2


def test_data_error_exits_3(toy_files, tmp_path):
    # break the z2 constant column
    cov = (toy_files / "cov.csv").read_text().splitlines()
    header = cov[0].split(",")
    k = header.index("z2_const")
    rows = [cov[0]]
    for line in cov[1:]:
        cells = line.split(",")
        cells[k] = "2.0"
        rows.append(",".join(cells))
    (toy_files / "cov.csv").write_text("\n".join(rows) + "\n")
    rc = dispatch(base_fit_argv(toy_files, toy_files / "run_bad"))
    assert rc == 3


def test_test_command_writes_wast(toy_files):
    out = toy_files / "runt"
    argv = ["test", "--data", str(toy_files / "y.csv"),
            "--covariates", str(toy_files / "cov.csv"),
            "--schema", str(toy_files / "schema.json"),
            "--tau", "0.5", "--lambda-tilde", "4", "--B", "12", "--seed", "5",
            "--max-iter", "100", "--out", str(out)]
    assert dispatch(argv) == 0
    payload = json.loads((out / "wast.json").read_text())
    assert 0.0 <= payload["p_value"] <= 1.0
    assert len(payload["boot_sorted"]) == 12
    assert payload["boot_sorted"] == sorted(payload["boot_sorted"])
    assert payload["b"] == 12 and payload["tau"] == 0.5
    assert isinstance(payload["reject"], bool)


def test_simulate_power_command(tmp_path):
    out = tmp_path / "runs"
    argv = ["simulate", "--scenario", "power", "--dist", "gaussian", "--n", "24",
            "--m", "4", "--reps", "2", "--B", "6", "--xi", "0,0.5",
            "--tau", "0.5", "--seed", "3", "--max-iter", "50",
            "--jobs", "2", "--out", str(out)]
    assert dispatch(argv) == 0
    lines = (out / "power.csv").read_text().splitlines()
    assert len(lines) == 3  # header + one row per xi
    assert lines[0].split(",")[:5] == ["tau", "n", "m", "dist", "xi"]


def test_simulate_estimation_command(tmp_path):
    out = tmp_path / "rune"
    argv = ["simulate", "--scenario", "estimation", "--dist", "gaussian",
            "--n", "24", "--m", "4", "--reps", "2", "--tau", "0.5", "--seed", "3",
            "--max-iter", "50", "--jobs", "2", "--out", str(out)]
    assert dispatch(argv) == 0
    lines = (out / "summary.csv").read_text().splitlines()
    assert len(lines) == 2
    assert "rmise_beta1_mean" in lines[0]


def test_simulate_replay_byte_identical(tmp_path):
    out1 = tmp_path / "s1"
    argv = ["simulate", "--scenario", "power", "--dist", "gaussian", "--n", "20",
            "--m", "3", "--reps", "2", "--B", "5", "--xi", "0",
            "--tau", "0.5", "--seed", "11", "--max-iter", "40", "--out", str(out1)]
    assert dispatch(argv) == 0
    manifest = json.loads((out1 / "manifest.json").read_text())
    out2 = tmp_path / "s2"
    argv2 = [str(out2) if tok == str(out1) else tok for tok in manifest["argv"]]
    assert dispatch(argv2) == 0
    assert (out1 / "power.csv").read_bytes() == (out2 / "power.csv").read_bytes()


def test_simulate_config_file(tmp_path):
    config = {"scenario": "power", "dist": "gaussian", "tau": 0.5, "n": 20,
              "m": 3, "xi": [0, 0.5], "reps": 2, "B": 5, "alpha": 0.05,
              "lambda_tilde": 4.0, "seed": 11}
    (tmp_path / "scenarios.json").write_text(json.dumps(config))
    out = tmp_path / "cfg_run"
    argv = ["simulate", "--config", str(tmp_path / "scenarios.json"),
            "--max-iter", "40", "--seed", "11", "--out", str(out)]
    assert dispatch(argv) == 0
    lines = (out / "power.csv").read_text().splitlines()
    assert len(lines) == 3


def test_simulate_requires_scenario_or_config(tmp_path):
    rc = dispatch(["simulate", "--out", str(tmp_path / "x")])
    assert rc == 2


def test_simulate_multi_tau_grid(tmp_path):
    out = tmp_path / "taugrid"
    argv = ["simulate", "--scenario", "power", "--dist", "gaussian", "--n", "20",
            "--m", "3", "--reps", "1", "--B", "4", "--xi", "0",
            "--tau", "0.25,0.75", "--seed", "2", "--max-iter", "30",
            "--out", str(out)]
    assert dispatch(argv) == 0
    lines = (out / "power.csv").read_text().splitlines()
    assert len(lines) == 3
    taus = [line.split(",")[0] for line in lines[1:]]
    assert taus == ["0.25", "0.75"]
