"""Carregamento e validação da configuração de runs."""

import json
from pathlib import Path

import pytest

from core.config import RunConfig, load_run_config, run_config_from_dict
from core.exceptions import OdeInfConfigError, OdeInfIOError

CONFIG_DIR = Path(__file__).resolve().parent.parent / "config"


def test_defaults():
    config = load_run_config(None)
    assert config == RunConfig()
    assert config.model.preset == "desk"
    assert config.training.lr == 1e-5
    assert config.grid.t_end == 9.95
    assert config.effective_workers() >= 1


@pytest.mark.parametrize("name", ["example_config.json", "tiny_config.json", "desk_smoke_config.json"])
def test_shipped_configs_are_valid(name):
    config = load_run_config(CONFIG_DIR / name)
    config.model_config()


def test_unknown_key_is_named():
    with pytest.raises(OdeInfConfigError, match=r"chave de configuração desconhecida: 'training\.lrr'"):
        run_config_from_dict({"training": {"lrr": 1e-4}})


def test_unknown_top_level_and_model_keys():
    with pytest.raises(OdeInfConfigError, match="'optimiser'"):
        run_config_from_dict({"optimiser": {}})
    with pytest.raises(OdeInfConfigError, match=r"'model\.embed_dimm'"):
        run_config_from_dict({"model": {"preset": "tiny", "embed_dimm": 8}})


@pytest.mark.parametrize("data", [
    {"seed": "zero"},
    {"seed": True},
    {"training": {"k_range": [1, 2, 3]}},
    {"training": 5},
    {"finetune": {"step_noise": "yes"}},
    {"eval": {"sigmas": 0.1}},
])
def test_type_errors(data):
    with pytest.raises(OdeInfConfigError):
        run_config_from_dict(data)


@pytest.mark.parametrize("data", [
    {"seed": -1},
    {"workers": 0},
    {"training": {"batch_size": 0}},
    {"model": {"preset": "huge"}},
])
def test_invalid_values(data):
    with pytest.raises(OdeInfConfigError):
        run_config_from_dict(data)


def test_overrides_take_precedence(tmp_path):
    path = tmp_path / "config.json"
    path.write_text(json.dumps({"seed": 1, "model": {"preset": "desk"}}), encoding="utf-8")
    config = load_run_config(path, {"seed": 9, "model.preset": "tiny", "paths.dataset": "runs/x",
                                    "workers": None})
    assert config.seed == 9
    assert config.model.preset == "tiny"
    assert config.paths.dataset == "runs/x"
    assert config.workers is None


def test_model_overrides_are_applied_on_top_of_preset():
    config = run_config_from_dict({"model": {"preset": "tiny", "dropout": 0.0, "d_max": 2}})
    resolved = config.model_config()
    assert resolved.dropout == 0.0
    assert resolved.d_max == 2
    assert config.to_file_dict()["model"] == {"preset": "tiny", "dropout": 0.0, "d_max": 2}


def test_ints_are_accepted_for_floats():
    config = run_config_from_dict({"training": {"clip_norm": 5}})
    assert isinstance(config.training.clip_norm, float)


def test_resolved_config_round_trips():
    config = run_config_from_dict({"seed": 4, "model": {"preset": "tiny"}})
    again = run_config_from_dict(json.loads(json.dumps(config.to_file_dict())))
    assert again == config


def test_missing_or_malformed_file(tmp_path):
    with pytest.raises(OdeInfIOError):
        load_run_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(OdeInfConfigError):
        load_run_config(bad)


def test_paper_preset_override():
    config = load_run_config(None, {"model.preset": "paper"})
    assert config.model.preset == "paper"
    assert config.model.resolve().embed_dim == 256
