import json
import math

import pandas as pd
import pytest

from chainforge.cli import build_parser, collect_overrides, main
from chainforge.dataset.export import read_dpo
from chainforge.manifest import MANIFEST, read_json
from chainforge.modeling.dpo import completion_key

STAGES = ("generate", "augment", "sample", "split", "export")
SETTINGS = {"generation": {"n_c": 20}, "sampling": {"n_s": 100}}


def run_all(config, stages=STAGES):
    for stage in stages:
        assert main([stage, "--config", str(config)]) == 0, stage


def artifacts(root):
    """Every stage output except manifests, which carry timestamps and config hashes."""
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for p in sorted(root.rglob("*"))
        if p.is_file() and p.name != MANIFEST
    }


@pytest.fixture
def original(write_config, tmp_path):
    config = write_config("original.json", tmp_path / "original", **SETTINGS)
    run_all(config)
    return config, tmp_path / "original"


def test_mock_pipeline_artifacts(original):
    _, root = original
    manifest = read_json(root / "dataset" / MANIFEST)
    assert len(manifest["prompts"]) == 30
    assert all(e["n_right"] + e["n_wrong"] == 20 for e in manifest["prompts"].values())

    pairs = pd.read_parquet(root / "augment" / "pairs.parquet")
    counts = pd.DataFrame(manifest["prompts"].values())
    assert len(pairs) == int((counts.n_right * counts.n_wrong).sum())

    train = pd.read_parquet(root / "split" / "train.parquet")
    test = pd.read_parquet(root / "split" / "test.parquet")
    assert len(train) + len(test) == 100
    assert read_json(root / "split" / "counts.json")["totals"]["Training set"]["overall"] == len(train)

    records = list(read_dpo(root / "export" / "train.jsonl"))
    assert len(records) == len(train)
    assert all(r["chosen"] != r["rejected"] for r in records)
    for stage in ("augment", "sample", "split", "export"):
        assert read_json(root / stage / MANIFEST)["stage"] == stage
    assert read_json(root / "sample" / MANIFEST)["seed"] == 7


def test_reruns_are_byte_identical(original, write_config, tmp_path):
    _, first = original
    config = write_config("again.json", tmp_path / "again", **SETTINGS)
    run_all(config)
    assert artifacts(first) == artifacts(tmp_path / "again")


def test_finetuned_dataset_dominates(original, write_config, tmp_path, capsys):
    config, root = original
    finetuned = write_config(
        "finetuned.json", tmp_path / "finetuned",
        backend={"kind": "mock", "mock": {"error_rate": 0.1, "premature_stop_rate": 0.01}}, **SETTINGS,
    )
    assert main(["generate", "--config", str(finetuned)]) == 0

    compare = ["--config", str(config), "--dataset-b", str(tmp_path / "finetuned" / "dataset")]
    assert main(["eval", *compare]) == 0
    capsys.readouterr()
    assert main(["report", *compare]) == 0
    printed = capsys.readouterr().out

    wilcoxon = read_json(root / "eval" / "wilcoxon.json")
    overall = wilcoxon["Overall"]
    assert not overall["degenerate"]
    assert overall["W_plus"] > overall["W_minus"]
    assert overall["p"] < 0.05

    assert "Task average percentage accuracy (n_max=10 and 20)" in printed
    assert (root / "report" / "report.txt").read_text(encoding="utf-8") == printed
    report = read_json(root / "report" / "report.json")
    assert set(report["accuracy"]) == {"n_max=10", "n_max=20", "n_max=10 and 20"}


def test_stage_order_is_enforced(write_config, tmp_path):
    config = write_config(root=tmp_path / "empty", evaluation={"dataset_b": str(tmp_path / "b")})
    assert main(["report", "--config", str(config)]) == 1
    assert main(["augment", "--config", str(config)]) == 1
    assert main(["eval", "--config", str(config)]) == 1


def test_sampling_capacity_is_a_validation_error(write_config, tmp_path):
    config = write_config(root=tmp_path / "small", generation={"n_c": 4, "n_max": [10]})
    run_all(config, ("generate", "augment"))
    assert main(["sample", "--config", str(config), "--n-s", "100000"]) == 1
    assert main(["sample", "--config", str(config), "--n-s", "500", "--replacement"]) == 0


def test_cli_flags_override_the_config(write_config, tmp_path):
    config = write_config(root=tmp_path / "ignored")
    out = tmp_path / "flags"
    assert main(["generate", "--config", str(config), "--out", str(out),
                 "--n-c", "3", "--n-max", "10", "--seed", "5"]) == 0
    manifest = read_json(out / "dataset" / MANIFEST)
    assert (manifest["n_c"], manifest["n_max"], manifest["seed"]) == (3, [10], 5)
    assert not (tmp_path / "ignored").exists()


def test_overrides_from_arguments():
    args = build_parser().parse_args([
        "split", "--set", "split.train_fol=[0,1]", "--set", "sampling.replacement=true", "--train-gsm", "0,1,2",
    ])
    assert collect_overrides(args) == {
        "split.train_fol": [0, 1], "sampling.replacement": True, "split.train_gsm8k": [0, 1, 2],
    }


def test_missing_seeds_fail_validation(tmp_path):
    config = tmp_path / "noseed.json"
    config.write_text(json.dumps({"problems": "p.json", "facts": "f.json", "output_root": "out"}), encoding="utf-8")
    assert main(["generate", "--config", str(config)]) == 1


def test_dpo_check(write_config, tmp_path, capsys):
    config = write_config(root=tmp_path / "dpo")
    assert main(["dpo-check", "--config", str(config)]) == 0
    printed = capsys.readouterr().out
    assert printed.count("PASS") == 3
    assert read_json(tmp_path / "dpo" / "dpo" / "check.json")["passed"] is True
    assert (tmp_path / "dpo" / "dpo" / "toy_history.parquet").exists()

    assert main(["dpo-check", "--config", str(config), "--set", "dpo.steps=5"]) == 2
    assert "FAIL" in capsys.readouterr().out


def test_dpo_loss_on_exported_pairs(original, tmp_path, capsys):
    _, root = original
    exported = root / "export" / "train.jsonl"
    keys = {completion_key(r[side]) for r in read_dpo(exported) for side in ("chosen", "rejected")}
    table = tmp_path / "logps.csv"
    frame = pd.DataFrame({"completion": sorted(keys)})
    frame["policy_logp"] = frame["reference_logp"] = -3.5
    frame.to_csv(table, index=False)

    capsys.readouterr()
    assert main(["dpo-loss", "--pairs", str(exported), "--logps", str(table), "--beta", "0.1"]) == 0
    value = float(capsys.readouterr().out.strip().split("=")[1])
    assert value == pytest.approx(math.log(2), abs=1e-11)
