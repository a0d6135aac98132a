import pytest

from src.exceptions import ConfigurationError
from src.run_config import *

valid_cases = {
    "defaults": {"descriptor": {"subcommand": "tile"}, "expected": {"p": 3, "q": 7, "n": 2, "k": 1, "optimize": True}},
    "hyphenated": {"descriptor": {"subcommand": "mqa-fit", "n": 2}, "expected": {"subcommand": "mqa_fit"}},
    "given_bulk": {"descriptor": {"subcommand": "contract", "bulk": {"a": 0.6}}, "expected": {"optimize": False, "bulk": {"a": 0.6}}},
    "chi_8": {"descriptor": {"subcommand": "contract", "chi_bulk": 8}, "expected": {"k": 3}},
    "45_tile": {"descriptor": {"subcommand": "tile", "p": 4, "q": 5, "n": 1}, "expected": {"p": 4, "q": 5}},
    "untabled_tile": {"descriptor": {"subcommand": "tile", "p": 5, "q": 4, "n": 1}, "expected": {"tiling_entry": None}},
}

invalid_cases = {
    "unknown_subcommand": {"descriptor": {"subcommand": "render"}, "message": "subcommand must be one of"},
    "euclidean": {"descriptor": {"subcommand": "tile", "p": 4, "q": 4}, "message": "not hyperbolic"},
    "negative_n": {"descriptor": {"subcommand": "tile", "n": -1}, "message": "n must be non-negative"},
    "untabled_contract": {"descriptor": {"subcommand": "contract", "p": 5, "q": 4}, "message": "no tensor/MQA settings"},
    "bad_chi": {"descriptor": {"subcommand": "contract", "chi_bulk": 6}, "message": "chi_bulk"},
    "missing_param": {"descriptor": {"subcommand": "contract", "p": 4, "q": 5, "bulk": {"a": 0.3}}, "message": "bulk parameter 'b'"},
    "missing_params_list": {"descriptor": {"subcommand": "contract", "chi_bulk": 4, "bulk": {"a": 0.3}}, "message": "'params' list"},
    "bad_target": {"descriptor": {"subcommand": "contract", "target": "xy"}, "message": "target must be"},
    "bad_schedule": {"descriptor": {"subcommand": "contract", "schedule": "spiral"}, "message": "schedule"},
    "bad_grid": {"descriptor": {"subcommand": "excite", "analysis": {"a0_grid": [2.0, -5.0, 0.1]}}, "message": "a0_grid"},
    "scalar_grid": {"descriptor": {"subcommand": "excite", "analysis": {"a0_grid": 5}}, "message": "a0_grid"},
    "text_grid": {"descriptor": {"subcommand": "excite", "analysis": {"a1_grid": ["a", "b", "c"]}}, "message": "a1_grid"},
    "scalar_chi_values": {"descriptor": {"subcommand": "fidelity_sweep", "analysis": {"chi_values": 4}}, "message": "chi_values"},
    "scalar_n_values": {"descriptor": {"subcommand": "spectrum", "analysis": {"n_values": 3}}, "message": "n_values"},
    "bad_subsystem_length": {"descriptor": {"subcommand": "disorder", "analysis": {"subsystem_length": 0}}, "message": "subsystem_length"},
    "bad_chi_values": {"descriptor": {"subcommand": "fidelity_sweep", "analysis": {"chi_values": [2, 16]}}, "message": "chi_values"},
    "disorder_n0": {"descriptor": {"subcommand": "disorder", "n": 0}, "message": "disorder needs n >= 1"},
}


@pytest.mark.parametrize("id, setting", valid_cases.items())
def test_01_valid_descriptors(id, setting):
    run = RunConfig(setting["descriptor"])
    for name, value in setting["expected"].items():
        assert getattr(run, name) == value


@pytest.mark.parametrize("id, setting", invalid_cases.items())
def test_02_invalid_descriptors(id, setting):
    with pytest.raises(ConfigurationError) as error:
        RunConfig(setting["descriptor"])
    assert any(setting["message"] in violation for violation in error.value.violations)


def test_03_every_violation_is_reported():
    with pytest.raises(ConfigurationError) as error:
        RunConfig({"subcommand": "contract", "p": 3, "q": 6, "chi_bulk": 5, "seed": "x"})
    assert len(error.value.violations) >= 3


def test_04_flag_overrides(monkeypatch):
    monkeypatch.setenv("HYPERBOLIC_MTN_OUT", "from_env")
    monkeypatch.setenv("HYPERBOLIC_MTN_THREADS", "3")
    run = RunConfig({"subcommand": "tile", "seed": 1, "threads": 2}, seed=9)
    assert run.seed == 9
    assert run.threads == 3
    assert run.output_folder == "from_env"
    run = RunConfig({"subcommand": "tile"}, out="from_flag", threads=64)
    assert run.output_folder == "from_flag"
    assert run.threads == settings().runtime["max_threads"]


def test_05_bad_thread_variable(monkeypatch):
    monkeypatch.setenv("HYPERBOLIC_MTN_THREADS", "many")
    with pytest.raises(ConfigurationError) as error:
        RunConfig({"subcommand": "tile"})
    assert any("threads" in violation for violation in error.value.violations)


def test_06_echo():
    run = RunConfig({"subcommand": "contract", "bulk": {"a": 0.6}, "seed": 4})
    echo = run.echo
    assert echo["subcommand"] == "contract"
    assert echo["bulk"] == {"a": 0.6}
    assert echo["seed"] == 4
    assert echo["analysis"]["targets"] == ["E1"]


def test_07_packaged_settings():
    config = settings()
    assert config.tiling(3, 7)["seed"] == "bbb"
    assert config.tiling(5, 4) is None
    assert config.outputs("common")["summary"] == "summary.json"
