import pandas as pd
import pytest

from chainforge.agent.problems import Task
from chainforge.dataset.split import (
    SplitSpec,
    all_problem_keys,
    count_per_problem,
    count_totals,
    counts_to_json,
    render_counts,
    split,
)
from chainforge.errors import SplitSpecError

FOL, GSM = Task.FOL.index, Task.GSM8K.index


def make_pairs(counts):
    """``counts`` maps (i_t, i_p) to how many pairs that problem contributes."""
    rows = [
        {"pair_id": 0, "i_t": i_t, "i_p": i_p}
        for (i_t, i_p), n in counts.items()
        for _ in range(n)
    ]
    frame = pd.DataFrame(rows)
    frame["pair_id"] = range(len(frame))
    return frame


@pytest.fixture
def pairs():
    return make_pairs({(FOL, 0): 3, (FOL, 4): 2, (FOL, 5): 1, (GSM, 1): 4, (GSM, 6): 2, (GSM, 8): 5})


def test_default_split_holds_out_later_problems():
    spec = SplitSpec.from_train()
    assert spec.test == {(FOL, 4), (FOL, 5), (GSM, 5), (GSM, 6), (GSM, 7), (GSM, 8)}
    assert spec.train | spec.test == all_problem_keys()
    assert len(all_problem_keys()) == 15


@pytest.mark.parametrize("train_fol, train_gsm8k, message", [
    ((0, 1, 6), (0,), "do not exist"),
    ((0, 1), (0, 9), "do not exist"),
])
def test_unknown_problems(train_fol, train_gsm8k, message):
    with pytest.raises(SplitSpecError, match=message):
        SplitSpec.from_train(train_fol, train_gsm8k)


def test_overlap_and_gaps():
    with pytest.raises(SplitSpecError, match="both"):
        SplitSpec(train=frozenset({(FOL, 0)}), test=all_problem_keys())
    with pytest.raises(SplitSpecError, match="neither"):
        SplitSpec(train=frozenset({(FOL, 0)}), test=frozenset({(FOL, 1)}))


def test_split_is_a_partition_by_problem(pairs):
    spec = SplitSpec.from_train()
    train, test = split(pairs, spec)
    assert len(train) + len(test) == len(pairs)
    assert set(train.pair_id).isdisjoint(test.pair_id)
    train_problems = set(zip(train.i_t, train.i_p))
    test_problems = set(zip(test.i_t, test.i_p))
    assert train_problems <= spec.train and test_problems <= spec.test
    assert train_problems.isdisjoint(test_problems)


def test_every_problem_in_training_leaves_test_empty(pairs, caplog):
    spec = SplitSpec.from_train(range(6), range(9))
    with caplog.at_level("WARNING"):
        train, test = split(pairs, spec)
    assert test.empty and len(train) == len(pairs)
    assert "Test split is empty" in caplog.text


def test_totals_table(pairs):
    train, test = split(pairs, SplitSpec.from_train())
    totals = count_totals(train, test)
    assert totals.loc["Training set"].to_dict() == {"FOL": 3, "GSM8K": 4, "overall": 7}
    assert totals.loc["Test set"].to_dict() == {"FOL": 3, "GSM8K": 7, "overall": 10}


def test_per_problem_table(pairs):
    spec = SplitSpec.from_train()
    train, test = split(pairs, spec)
    table = count_per_problem(train, test, spec)
    assert list(table.columns) == ["Train (FOL)", "Test (FOL)", "Train (GSM8K)", "Test (GSM8K)"]
    assert table.loc[0].tolist() == [3, "-", 0, "-"]
    assert table.loc[4].tolist() == ["-", 2, 0, "-"]
    assert table.loc[6].tolist() == ["-", "-", "-", 2]
    assert table.loc["tot."].tolist() == [3, 3, 4, 7]

    payload = counts_to_json(count_totals(train, test), table)
    assert payload["per_problem"]["8"] == {"Train (FOL)": None, "Test (FOL)": None,
                                           "Train (GSM8K)": None, "Test (GSM8K)": 5}
    assert payload["totals"]["Test set"]["overall"] == 10

    text = render_counts(count_totals(train, test), table)
    assert "Sample count per problem" in text and "tot." in text
