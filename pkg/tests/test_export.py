import json

import pytest

from chainforge.agent.problems import Task
from chainforge.agent.transcript import read_transcript
from chainforge.dataset.augment import augment
from chainforge.dataset.export import export_dpo, read_dpo
from chainforge.errors import DatasetIntegrityError


@pytest.fixture
def dataset(build_dataset):
    return build_dataset({(Task.FOL, 0, 10): (2, 2), (Task.GSM8K, 3, 20): (1, 3)})


def test_one_record_per_pair_in_row_order(dataset, tmp_path):
    pairs = augment(dataset)
    out = tmp_path / "train.jsonl"
    assert export_dpo(pairs, dataset, out) == 7

    lines = out.read_text(encoding="utf-8").splitlines()
    assert len(lines) == 7
    first = json.loads(lines[0])
    assert set(first) == {"prompt", "chosen", "rejected"}
    assert first["prompt"].startswith("Prompt for gsm8k/nmax_20/problem_3")
    assert first["chosen"][0]["role"] == "assistant"


def test_records_carry_the_stored_transcripts(dataset, tmp_path):
    pairs = augment(dataset)
    out = tmp_path / "test.jsonl"
    export_dpo(pairs, dataset, out)
    for pair, record in zip(pairs.itertuples(index=False), read_dpo(out)):
        assert record["chosen"] == tuple(read_transcript(dataset / pair.chosen_path))
        assert record["rejected"] == tuple(read_transcript(dataset / pair.rejected_path))
        assert record["chosen"] != record["rejected"]


def test_empty_selection_writes_empty_file(dataset, tmp_path):
    pairs = augment(dataset).iloc[0:0]
    out = tmp_path / "empty.jsonl"
    assert export_dpo(pairs, dataset, out) == 0
    assert out.read_text(encoding="utf-8") == ""


def test_edited_transcript_is_refused(dataset, tmp_path):
    pairs = augment(dataset)
    target = dataset / pairs.loc[0, "rejected_path"]
    target.write_text(target.read_text(encoding="utf-8").replace("False", "True"), encoding="utf-8")
    with pytest.raises(DatasetIntegrityError, match="content hash"):
        export_dpo(pairs, dataset, tmp_path / "train.jsonl")
    assert not (tmp_path / "train.jsonl").exists()


def test_unreadable_record(tmp_path):
    bad = tmp_path / "bad.jsonl"
    bad.write_text('{"prompt": "p", "chosen": []}\n', encoding="utf-8")
    with pytest.raises(DatasetIntegrityError, match="line 1"):
        list(read_dpo(bad))
