import pytest
import os
import json
import numpy as np
import pandas as pd

from src.cli import *

run_config = {
    "tile_37": {
        "subcommand": "tile",
        "descriptor": {"p": 3, "q": 7, "n": 2},
        "flags": [],
        "files": ["tiling.json", "boundary_letters.csv"],
        },
    "contract_37": {
        "subcommand": "contract",
        "descriptor": {"p": 3, "q": 7, "n": 1, "bulk": {"a": 0.6}, "seed": 7},
        "flags": [],
        "files": ["covariance.csv", "covariance.svg"],
        },
    "contract_no_svg": {
        "subcommand": "contract",
        "descriptor": {"p": 3, "q": 7, "n": 1, "bulk": {"a": 0.6}},
        "flags": ["--no-svg"],
        "files": ["covariance.csv"],
        },
    "disorder_37": {
        "subcommand": "disorder",
        "descriptor": {"p": 3, "q": 7, "n": 1, "bulk": {"a": 0.6}},
        "flags": ["--no-svg"],
        "files": ["decay_profile.csv", "disorder_vector.csv", "h_profile.csv", "translation_scan.csv", "averaged_correlators.csv"],
        },
    "mqa_fit_37": {
        "subcommand": "mqa-fit",
        "descriptor": {"p": 3, "q": 7, "n": 1, "bulk": {"a": 0.6}},
        "flags": [],
        "files": ["mqa_couplings.csv", "mqa_stack.json", "mqa_couplings.svg"],
        "summary": ["weights", "residual", "shift", "average_coupling", "max_product_fraction"],
        },
    "spectrum_37": {
        "subcommand": "spectrum",
        "descriptor": {"p": 3, "q": 7, "n": 2, "bulk": {"a": 0.6}, "analysis": {"n_values": [1, 2]}},
        "flags": ["--no-svg"],
        "files": ["spectrum.csv"],
        "summary": ["sizes", "gap_exponent"],
        },
    "fidelity_sweep_37": {
        "subcommand": "fidelity-sweep",
        "descriptor": {"p": 3, "q": 7, "n": 1, "bulk": {"a": 0.6}, "analysis": {"chi_values": [2]}},
        "flags": [],
        "files": ["fidelity_sweep.csv", "fidelity_sweep.svg"],
        "summary": ["fidelity", "monotone"],
        },
    "parent_fit_37": {
        "subcommand": "parent-fit",
        "descriptor": {"p": 3, "q": 7, "n": 1, "bulk": {"a": 0.6}},
        "flags": ["--no-svg"],
        "files": ["parent_couplings.csv"],
        "summary": ["fidelity", "null_dimension", "ground", "linear_feasibility", "restart_spread"],
        },
    "excite_37": {
        "subcommand": "excite",
        "descriptor": {"p": 3, "q": 7, "n": 1, "bulk": {"a": 0.6}, "seed": 2,
                       "analysis": {"a0_grid": [-1.0, 1.0, 0.5], "a1_grid": [0.0, 0.6, 0.6], "targets": ["E1"]}},
        "flags": ["--no-svg"],
        "files": ["central_sweep.csv", "ring_sweep.csv", "occupations.csv", "defect_spec.json"],
        "summary": ["landmarks", "ring_best_a1", "eigenstates"],
        },
    }

invalid_config = {
    "not_hyperbolic": {
        "descriptor": {"p": 3, "q": 6},
        "messages": ["not hyperbolic"],
        },
    "several_violations": {
        "descriptor": {"p": 3, "q": 6, "chi_bulk": 3, "analysis": {"colour": "red"}},
        "messages": ["not hyperbolic", "chi_bulk", "unknown analysis options: colour"],
        },
    "excite_45": {
        "descriptor": {"p": 4, "q": 5, "n": 1, "bulk": {"a": 0.2, "b": 0.1}},
        "subcommand": "excite",
        "messages": ["{3,7}"],
        },
    }


def write_descriptor(folder, descriptor):
    path = os.path.join(folder, "run.json")
    with open(path, 'w') as file:
        json.dump(descriptor, file)
    return path


@pytest.fixture
def initialize_test_directory(tmp_path):
    folders = {"config": tmp_path / "config", "out": tmp_path / "out"}
    for folder in folders.values():
        os.makedirs(folder, exist_ok=True)
    return {name: str(folder) for name, folder in folders.items()}


@pytest.mark.parametrize("id, setting", run_config.items())
def test_01_full_run(id, setting, initialize_test_directory):
    folders = initialize_test_directory
    config = write_descriptor(folders["config"], setting["descriptor"])
    status = run([setting["subcommand"], "--config", config, "--out", folders["out"], *setting["flags"]])
    assert status == 0

    produced = os.listdir(folders["out"])
    for name in setting["files"] + ["summary.json", "manifest.json", "run.log"]:
        assert name in produced
    if "--no-svg" in setting["flags"]:
        assert not any(name.endswith(".svg") for name in produced)

    with open(os.path.join(folders["out"], "manifest.json")) as file:
        manifest = json.load(file)
    assert set(setting["files"]) <= set(manifest["artifacts"])
    assert manifest["steps"][-1] == {"step": setting["subcommand"].replace("-", "_"), "status": "ok", "detail": ""}

    with open(os.path.join(folders["out"], "summary.json")) as file:
        summary = json.load(file)
    for key in setting.get("summary", []):
        assert key in summary


def test_02_tile_summary(initialize_test_directory):
    folders = initialize_test_directory
    config = write_descriptor(folders["config"], {"p": 3, "q": 7, "n": 2})
    assert run(["tile", "--config", config, "--out", folders["out"]]) == 0
    with open(os.path.join(folders["out"], "summary.json")) as file:
        summary = json.load(file)
    assert summary["boundary_size"] == 33
    assert summary["layer_lengths"] == [3, 12, 33]
    assert summary["predicted_lengths"] == [3, 12, 33]
    letters = pd.read_csv(os.path.join(folders["out"], "boundary_letters.csv"))
    assert len(letters) == 48


def test_03_contract_summary(initialize_test_directory):
    folders = initialize_test_directory
    config = write_descriptor(folders["config"], {"p": 3, "q": 7, "n": 1, "bulk": {"a": 0.6}})
    assert run(["contract", "--config", config, "--out", folders["out"], "--no-svg"]) == 0
    with open(os.path.join(folders["out"], "summary.json")) as file:
        summary = json.load(file)
    assert summary["n_sites"] == 12
    assert summary["source"] == "given"
    assert summary["purity_error"] < 1e-8
    covariance = np.loadtxt(os.path.join(folders["out"], "covariance.csv"), delimiter=",")
    assert covariance.shape == (24, 24)
    assert np.allclose(covariance, -covariance.T)


def test_04_runs_are_deterministic(tmp_path):
    config = write_descriptor(str(tmp_path), {"p": 3, "q": 7, "n": 1, "bulk": {"a": 0.55}})
    checksums = []
    for name in ("first", "second"):
        out = str(tmp_path / name)
        assert run(["contract", "--config", config, "--out", out, "--seed", "3", "--no-svg"]) == 0
        with open(os.path.join(out, "manifest.json")) as file:
            artifacts = json.load(file)["artifacts"]
        checksums.append({k: v for k, v in artifacts.items() if k != "run.log"})
    assert checksums[0] == checksums[1]


@pytest.mark.parametrize("id, setting", invalid_config.items())
def test_05_configuration_errors(id, setting, initialize_test_directory, capsys):
    folders = initialize_test_directory
    config = write_descriptor(folders["config"], setting["descriptor"])
    status = run([setting.get("subcommand", "contract"), "--config", config, "--out", folders["out"]])
    assert status == 2
    stderr = capsys.readouterr().err
    for message in setting["messages"]:
        assert message in stderr
    assert os.listdir(folders["out"]) == []


def test_06_domain_error_exit_status(initialize_test_directory):
    folders = initialize_test_directory
    config = write_descriptor(folders["config"], {"p": 3, "q": 7, "n": 1, "target": "zero"})
    status = run(["fidelity-sweep", "--config", config, "--out", folders["out"], "--no-svg"])
    assert status == 2
    with open(os.path.join(folders["out"], "manifest.json")) as file:
        manifest = json.load(file)
    assert manifest["steps"][-1]["status"] == "failed"
    assert "DegenerateGroundStateError" in manifest["steps"][-1]["detail"]
    assert "summary.json" not in os.listdir(folders["out"])


def test_07_unexpected_error_exit_status(initialize_test_directory):
    folders = initialize_test_directory
    config = write_descriptor(folders["config"], {"p": 3, "q": 7, "n": 1, "chi_bulk": 4, "bulk": {"params": [0.1]}})
    assert run(["contract", "--config", config, "--out", folders["out"]]) == 1
    assert "manifest.json" in os.listdir(folders["out"])


def test_08_missing_descriptor(tmp_path, capsys):
    status = run(["tile", "--config", str(tmp_path / "absent.json"), "--out", str(tmp_path / "out")])
    assert status == 2
    assert "cannot read run descriptor" in capsys.readouterr().err
