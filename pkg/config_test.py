# -*- coding: utf-8 -*-
import json

import pytest

from config import (
    DEFAULT_CONFIG, DESK_SCALE_OVERRIDES, apply_overrides, get_dotted, load_run_config, parse_override,
    save_run_config,
)
from errors import ConfigError


def write_json(path, data):
    path.write_text(json.dumps(data), encoding="utf-8")
    return str(path)


def test_defaults_are_copied():
    config = load_run_config()
    config["train"]["epochs"] = 1
    assert DEFAULT_CONFIG["train"]["epochs"] == 400
    assert load_run_config()["train"]["epochs"] == 400


def test_full_scale_training_defaults():
    train = load_run_config()["train"]
    assert (train["lr0"], train["batch_size"], train["epochs"]) == (0.001, 8, 400)
    assert (train["decay_period"], train["decay_factor"]) == (100, 0.5)
    assert train["resize"] == [1024, 1024]
    assert train["augment_flip"] is False


def test_precedence(tmp_path):
    path = write_json(tmp_path / "run.json", {"train": {"epochs": 10, "lr0": 0.01}, "seed": 3})
    config = load_run_config(path, {"train.epochs": 5})
    assert config["train"]["epochs"] == 5
    assert config["train"]["lr0"] == 0.01
    assert config["seed"] == 3
    assert config["train"]["batch_size"] == 8


def test_unknown_file_key(tmp_path):
    path = write_json(tmp_path / "run.json", {"train": {"epoch": 10}})
    with pytest.raises(ConfigError, match="train.epoch"):
        load_run_config(path)


def test_unknown_override_key():
    with pytest.raises(ConfigError, match="model.ftb.cutoff"):
        load_run_config(overrides={"model.ftb.cutoff": 0.2})


def test_section_cannot_become_scalar(tmp_path):
    path = write_json(tmp_path / "run.json", {"model": 3})
    with pytest.raises(ConfigError):
        load_run_config(path)
    with pytest.raises(ConfigError):
        apply_overrides(load_run_config(), {"model.backbone": "tiny"})


def test_missing_file(tmp_path):
    with pytest.raises(FileNotFoundError):
        load_run_config(str(tmp_path / "absent.json"))


def test_invalid_json(tmp_path):
    path = tmp_path / "broken.json"
    path.write_text("{not json", encoding="utf-8")
    with pytest.raises(ConfigError):
        load_run_config(str(path))


def test_top_level_must_be_object(tmp_path):
    with pytest.raises(ConfigError):
        load_run_config(write_json(tmp_path / "list.json", [1, 2]))


@pytest.mark.parametrize("text,expected", [
    ("train.epochs=3", ("train.epochs", 3)),
    ("train.resize=[64, 64]", ("train.resize", [64, 64])),
    ("model.backbone.variant=tiny", ("model.backbone.variant", "tiny")),
    ("paths.checkpoint=null", ("paths.checkpoint", None)),
    ("model.enable_ab=false", ("model.enable_ab", False)),
])
def test_parse_override(text, expected):
    assert parse_override(text) == expected


def test_parse_override_needs_equals():
    with pytest.raises(ConfigError):
        parse_override("train.epochs")


def test_dotted_access():
    original = load_run_config()
    config = apply_overrides(original, {"model.backbone.variant": "tiny", "train.resize": [64, 64]})
    assert get_dotted(config, "model.backbone.variant") == "tiny"
    assert get_dotted(config, "train.resize") == [64, 64]
    assert get_dotted(config, "model.backbone") == {"variant": "tiny", "pretrained_weights": None, "freeze": False}
    assert original["model"]["backbone"]["variant"] == "resnet50"
    with pytest.raises(ConfigError):
        get_dotted(config, "model.backbone.depth")
    with pytest.raises(ConfigError, match="train.epoch"):
        apply_overrides(config, {"train.epoch": 3})


def test_desk_scale_keys_exist():
    config = apply_overrides(load_run_config(), DESK_SCALE_OVERRIDES)
    assert config["model"]["backbone"]["variant"] == "tiny"


def test_command_defaults_sit_below_file_and_flags(tmp_path):
    path = write_json(tmp_path / "run.json", {"train": {"epochs": 2, "batch_size": 2}})
    config = load_run_config(path, {"train.batch_size": 3}, defaults=DESK_SCALE_OVERRIDES)
    assert config["train"]["epochs"] == 2
    assert config["train"]["batch_size"] == 3
    assert config["train"]["resize"] == [256, 256]
    assert config["model"]["backbone"]["variant"] == "tiny"
    assert load_run_config(defaults=DESK_SCALE_OVERRIDES)["train"]["epochs"] == 40


def test_yaml_file(tmp_path):
    path = tmp_path / "run.yaml"
    path.write_text("train:\n  epochs: 7\nmodel:\n  enable_ftb: false\n", encoding="utf-8")
    config = load_run_config(str(path))
    assert config["train"]["epochs"] == 7
    assert config["model"]["enable_ftb"] is False


def test_result_is_plain_json():
    config = load_run_config(overrides={"train.resize": [64, 64], "eval.resize": [64, 64]})
    assert type(config) is dict and type(config["train"]["resize"]) is list
    assert json.loads(json.dumps(config)) == config


def test_save_round_trip(tmp_path):
    config = load_run_config(overrides={"seed": 11})
    path = str(tmp_path / "saved.json")
    save_run_config(config, path)
    assert load_run_config(path) == config
