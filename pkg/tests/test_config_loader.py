import json

import pytest

from src.config_loader import (
    RunConfig,
    build_family_map,
    build_operator,
    load_config_file,
    load_run_config,
    resolve_run_config,
)
from src.errors import ConfigurationError, ValidationError


def test_precedence_flag_env_file_default():
    data = {"run": {"n_trunc": 10}}
    assert resolve_run_config("spectrum", {}, env={}).n_trunc == 32
    assert resolve_run_config("spectrum", data, env={}).n_trunc == 10
    assert resolve_run_config("spectrum", data, env={"n_trunc": 11}).n_trunc == 11
    assert resolve_run_config("spectrum", data, flags={"n_trunc": 12}, env={"n_trunc": 11}).n_trunc == 12


def test_unset_flags_do_not_override():
    config = resolve_run_config("spectrum", {"run": {"seed": 5}}, flags={"seed": None}, env={})
    assert config.seed == 5


def test_environment_overrides(monkeypatch):
    monkeypatch.setenv("SPECTRA_N_TRUNC", "7")
    monkeypatch.setenv("SPECTRA_STRIP_HEIGHT", "0.25")
    monkeypatch.setenv("SPECTRA_SEED", "not-a-number")
    config = resolve_run_config("kernel", {"run": {"n_trunc": 10, "seed": 3}})
    assert config.n_trunc == 7
    assert config.strip_height == 0.25
    assert config.seed == 3


def test_unknown_run_options_are_ignored(caplog):
    config = resolve_run_config("spectrum", {"run": {"bogus": 1}}, env={})
    assert config.command == "spectrum"
    assert "bogus" in caplog.text


def test_validation_errors():
    with pytest.raises(ValidationError):
        RunConfig(command="plot")
    with pytest.raises(ConfigurationError, match="exceeds"):
        RunConfig(command="spectrum", n_trunc=400, strip_height=1.0)
    with pytest.raises(ConfigurationError):
        RunConfig(command="spectrum", keep=0)
    with pytest.raises(ConfigurationError):
        RunConfig(command="evolve", time_ladder=(1e-3, 1e-2))
    with pytest.raises(ConfigurationError):
        RunConfig(command="monodromy", rectangle=(1.0, 0.0, -1.0, 1.0))
    with pytest.raises(ConfigurationError):
        RunConfig(command="evolve", shift=-1.0)


def test_lists_become_tuples():
    config = RunConfig(command="monodromy", rectangle=[0, 1, -1, 1], scan_grid=[5, 3])
    assert config.rectangle == (0, 1, -1, 1)
    assert config.scan_grid == (5, 3)


def test_hash_record_ignores_output_location():
    a = RunConfig(command="spectrum", out="one", threads=1)
    b = RunConfig(command="spectrum", out="two", threads=4)
    assert a.hash_record() == b.hash_record()
    assert a.output_dir != b.output_dir
    assert "verbose" not in a.to_record()


def test_load_config_file_errors(tmp_path):
    assert load_config_file(None) == {}
    with pytest.raises(ValidationError, match="not found"):
        load_config_file(str(tmp_path / "missing.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{not json", encoding="utf-8")
    with pytest.raises(ValidationError, match="decode"):
        load_config_file(str(broken))
    listing = tmp_path / "list.json"
    listing.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(ValidationError):
        load_config_file(str(listing))


def test_name_defaults_to_file_stem(tmp_path):
    path = tmp_path / "my_run.json"
    path.write_text(json.dumps({"operator": {"named": "minus_d2"}}), encoding="utf-8")
    config, data = load_run_config("spectrum", str(path))
    assert config.name == "my_run"
    assert data["operator"]["named"] == "minus_d2"


def test_bundled_configs_load(data_path):
    config, data = load_run_config("evolve", data_path("mathieu.json"))
    assert config.name == "mathieu"
    assert config.n_trunc == 64
    L = build_operator(config, data)
    assert L.domain.T == 0.5


def test_explicit_operator_block_takes_run_strip():
    block = {
        "K": 1,
        "T": 0.5,
        "form": "standard",
        "coeffs": {"P2": [[[[0, -1.0, 0.0]]]]},
    }
    config = RunConfig(command="spectrum", strip_height=1.0)
    assert build_operator(config, {"operator": block}).domain.T == 1.0


def test_missing_blocks():
    config = RunConfig(command="spectrum")
    with pytest.raises(ValidationError):
        build_operator(config, {})
    with pytest.raises(ValidationError):
        build_family_map(config, {})
    with pytest.raises(ValidationError):
        build_family_map(config, {"family": {"kind": "sine", "a": 1.0}})


def test_family_map(data_path):
    config, data = load_run_config("completeness", data_path("exp_cos_a2.json"))
    a, cmap = build_family_map(config, data)
    assert a == 2.0
    assert cmap.domain.T == config.t_max
    assert cmap.scale == pytest.approx(1.0)


def test_non_numeric_shift_is_a_validation_error():
    with pytest.raises(ConfigurationError, match="shift"):
        RunConfig(command="evolve", shift="foo")
    with pytest.raises(ValidationError):
        resolve_run_config("evolve", {"run": {"n_trunc": "many"}}, env={})
    assert RunConfig(command="evolve", shift="2.5").shift == "2.5"


def test_bad_named_operator_parameter():
    config = RunConfig(command="spectrum")
    with pytest.raises(ValidationError, match="operator block"):
        build_operator(config, {"operator": {"named": "mathieu", "q": "one"}})
    with pytest.raises(ValidationError, match="operator block"):
        build_operator(config, {"operator": {"named": "minus_d2", "size": "two"}})


def test_bad_explicit_operator_block():
    config = RunConfig(command="spectrum")
    block = {"K": 1, "form": "standard", "coeffs": {"P2": [[[["x", -1.0, 0.0]]]]}}
    with pytest.raises(ValidationError):
        build_operator(config, {"operator": block})


def test_bad_family_parameters():
    config = RunConfig(command="completeness")
    with pytest.raises(ValidationError):
        build_family_map(config, {"family": {"kind": "exp_cos", "a": "two"}})
    with pytest.raises(ValidationError):
        build_family_map(config, {"family": {"kind": "exp_cos", "a": 2.0, "n_trunc": "lots"}})
