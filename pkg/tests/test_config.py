import json

import pytest

from chainforge.config import apply_overrides, from_dict, load_config, parse_value
from chainforge.errors import ConfigError, SplitSpecError
from conftest import REPO_ROOT, make_config


def test_shipped_configs_load():
    for name in ("run.json", "finetuned.json"):
        cfg = load_config(REPO_ROOT / "configs" / name, check_paths=False)
        assert cfg.generation.n_max == (10, 20)
        assert cfg.backend.kind == "mock"
        assert cfg.split.spec().train


def test_sections_become_typed(write_config, tmp_path):
    cfg = load_config(write_config(generation={"n_max": [20, 10, 20]}))
    assert cfg.generation.n_max == (10, 20)
    assert cfg.generation.n_c == 12
    assert cfg.backend.mock.error_rate == 0.3
    assert cfg.dpo.core().beta == 0.1
    assert cfg.dataset_dir == tmp_path / "out" / "dataset"
    assert cfg.stage_dir("sample") == tmp_path / "out" / "sample"


def test_seeds_are_mandatory(tmp_path):
    raw = make_config(tmp_path)
    del raw["seeds"]
    with pytest.raises(ConfigError, match="seeds"):
        from_dict(raw)

    raw = make_config(tmp_path)
    raw["seeds"] = {"generate": 1, "sample": 2}
    with pytest.raises(ConfigError):
        from_dict(raw)

    with pytest.raises(ConfigError, match="integer"):
        from_dict(make_config(tmp_path, seeds={"generate": "1", "sample": 2, "dpo": 3}))


@pytest.mark.parametrize("section, values", [
    ("sampling", {"n_sample": 3}),
    ("backend", {"kind": "mock", "retries": 2}),
    ("generation", {"workers": 0}),
    ("evaluation", {"alpha": 1.0}),
    ("dpo", {"beta": -0.1}),
    ("backend", {"kind": "grpc"}),
])
def test_invalid_sections(tmp_path, section, values):
    raw = make_config(tmp_path)
    raw[section] = values
    with pytest.raises(ConfigError):
        from_dict(raw)


def test_unknown_top_level_key(tmp_path):
    with pytest.raises(ConfigError, match="top-level"):
        from_dict({**make_config(tmp_path), "plots": True})


def test_bad_split_is_reported(tmp_path):
    with pytest.raises(SplitSpecError):
        from_dict(make_config(tmp_path, split={"train_fol": [0, 9]}))


def test_missing_inputs(tmp_path):
    with pytest.raises(ConfigError, match="problems file not found"):
        from_dict(make_config(tmp_path, problems=str(tmp_path / "nope.json")))
    assert from_dict(make_config(tmp_path, problems="nope.json"), check_paths=False).problems.name == "nope.json"
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "missing.json")


def test_config_must_be_json_object(tmp_path):
    path = tmp_path / "list.json"
    path.write_text(json.dumps([1, 2]), encoding="utf-8")
    with pytest.raises(ConfigError, match="object"):
        load_config(path)


def test_overrides():
    raw = {"generation": {"n_c": 100}, "seeds": {"generate": 1}}
    resolved = apply_overrides(raw, {"generation.n_c": 5, "sampling.n_s": 10, "seeds.generate": 9})
    assert resolved == {"generation": {"n_c": 5}, "seeds": {"generate": 9}, "sampling": {"n_s": 10}}
    assert raw["generation"]["n_c"] == 100

    with pytest.raises(ConfigError, match="not a section"):
        apply_overrides({"generation": 3}, {"generation.n_c": 5})


@pytest.mark.parametrize("text, value", [
    ("5", 5), ("0.25", 0.25), ("true", True), ("[10, 20]", [10, 20]), ("runs/x", "runs/x"), ('"7"', "7"),
])
def test_parse_value(text, value):
    assert parse_value(text) == value


def test_hash_tracks_the_resolved_config(write_config):
    path = write_config()
    assert load_config(path).hash == load_config(path).hash
    assert load_config(path, {"sampling.n_s": 50}).hash != load_config(path).hash


def test_evaluation_inputs(write_config, tmp_path):
    cfg = load_config(write_config())
    with pytest.raises(ConfigError, match="dataset_b"):
        cfg.evaluation_dirs()
    cfg = load_config(write_config(evaluation={"dataset_b": str(tmp_path / "b")}))
    assert cfg.evaluation_dirs() == (cfg.dataset_dir, tmp_path / "b")
