#!/usr/bin/env python3
"""
Tests for run configuration resolution: settings, --config files and flags.
"""
import json

import pytest
from pydantic import ValidationError

from app.core.config import Settings, parse_float_list
from app.core.errors import ConfigContradictionError, MissingInputError, TensorFormatError
from app.schemas.enums import ClassificationMode, TaskMode
from app.services.settings_resolver import RunConfigResolver, load_config_file


@pytest.fixture
def defaults():
    return Settings(steps=11, tau=0.4, workers=1)


def test_flags_beat_file_beat_settings(defaults):
    assert RunConfigResolver("climb", {"steps": 5}, {"steps": 9}, defaults).resolve().climb.steps == 5
    assert RunConfigResolver("climb", {}, {"steps": 9}, defaults).resolve().climb.steps == 9
    assert RunConfigResolver("climb", {}, {}, defaults).resolve().climb.steps == 11


def test_unset_flags_fall_through(defaults):
    resolver = RunConfigResolver("climb", {"steps": None}, {"steps": 9}, defaults)
    assert resolver.resolve().climb.steps == 9


def test_tau_alias(defaults):
    assert RunConfigResolver("climb", {"mask_threshold": 0.3}, {}, defaults).resolve().climb.tau == 0.3
    assert RunConfigResolver("climb", {"tau": 0.3, "mask_threshold": 0.3}, {}, defaults).get_tau() == 0.3
    assert RunConfigResolver("climb", {}, {}, defaults).get_tau() == 0.4


def test_tau_contradiction(defaults):
    resolver = RunConfigResolver("climb", {"tau": 0.3, "mask_threshold": 0.6}, {}, defaults)
    with pytest.raises(ConfigContradictionError):
        resolver.resolve()


def test_localization_preset(defaults):
    run = RunConfigResolver("climb", {"mode": "loc"}, {}, defaults).resolve()
    assert run.task == TaskMode.LOC
    assert run.climb.reg_lambda == 0.01
    assert run.classification_mode == ClassificationMode.SINGLE_LABEL


def test_explicit_lambda_overrides_preset(defaults):
    run = RunConfigResolver("climb", {"mode": "loc", "lambda": 2.0}, {}, defaults).resolve()
    assert run.climb.reg_lambda == 2.0


def test_unknown_mode(defaults):
    with pytest.raises(ConfigContradictionError):
        RunConfigResolver("climb", {"mode": "detect"}, {}, defaults).resolve()


def test_switches(defaults):
    resolver = RunConfigResolver("climb", {"suppress_others": "off"}, {}, defaults)
    assert resolver.resolve().climb.suppress_other_classes is False
    assert RunConfigResolver("climb", {}, {"suppress_others": True}, defaults).get_switch("suppress_others", False)


def test_theta_grid_from_string(defaults):
    run = RunConfigResolver("seed", {"theta_grid": "0.5, 0.2"}, {}, defaults).resolve()
    assert run.theta_grid == [0.2, 0.5]


def test_theta_grid_outside_unit_interval(defaults):
    with pytest.raises(ValidationError):
        RunConfigResolver("seed", {"theta_grid": "0.2,1.0"}, {}, defaults).resolve()


def test_default_output_directory(defaults):
    run = RunConfigResolver("train", {}, {}, defaults).resolve()
    assert run.out.endswith("train")


def test_config_file_normalizes_dashes(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"mask-threshold": 0.3, "steps": 4}))
    assert load_config_file(str(path)) == {"mask_threshold": 0.3, "steps": 4}


def test_config_file_unknown_keys(tmp_path):
    path = tmp_path / "run.json"
    path.write_text(json.dumps({"stepz": 4}))
    with pytest.raises(ConfigContradictionError, match="stepz"):
        load_config_file(str(path))


def test_config_file_errors(tmp_path):
    with pytest.raises(MissingInputError):
        load_config_file(str(tmp_path / "absent.json"))
    broken = tmp_path / "broken.json"
    broken.write_text("{steps: 4")
    with pytest.raises(TensorFormatError):
        load_config_file(str(broken))
    assert load_config_file(None) == {}


def test_parse_float_list():
    assert parse_float_list("0.1, 0.2,,0.3") == [0.1, 0.2, 0.3]
    assert parse_float_list("") == []


def test_audit_dict_is_json_safe(defaults):
    run = RunConfigResolver("climb", {"steps": 2}, {}, defaults).resolve()
    audit = json.loads(json.dumps(run.audit_dict()))
    assert audit["climb"]["steps"] == 2
    assert audit["climb"]["saliency_background"] is False
