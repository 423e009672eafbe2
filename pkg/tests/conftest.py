import json
from pathlib import Path

import pytest

from chainforge.agent.backend import MockBackend, MockPolicy
from chainforge.agent.functions import FactStore
from chainforge.agent.problems import Task, load_problem_pack
from chainforge.agent.transcript import ChatMessage, write_transcript
from chainforge.manifest import MANIFEST, write_json

REPO_ROOT = Path(__file__).resolve().parents[1]
PROBLEMS_PATH = REPO_ROOT / "data" / "raw" / "problems.json"
FACTS_PATH = REPO_ROOT / "data" / "raw" / "imdb_facts.json"

REASONING_RECORDED = "The reasoning has been recorded"
PROGRAM_STOPPED = "The program has been stopped"


def _pairs(*exchanges):
    turns = []
    for command, reply in exchanges:
        turns += [ChatMessage("assistant", command), ChatMessage("user", reply)]
    return tuple(turns)


@pytest.fixture(scope="session")
def problems():
    return load_problem_pack(PROBLEMS_PATH)


@pytest.fixture(scope="session")
def facts():
    return FactStore.load(FACTS_PATH)


@pytest.fixture(scope="session")
def cast_away(problems):
    return next(p for p in problems if p.task is Task.FOL and p.i_p == 0)


@pytest.fixture(scope="session")
def natalia(problems):
    return next(p for p in problems if p.task is Task.GSM8K and p.i_p == 0)


@pytest.fixture
def mock_backend(problems):
    def build(error_rate=0.0, premature_stop_rate=0.0, seed=0):
        return MockBackend(MockPolicy.from_problems(problems, seed, error_rate, premature_stop_rate))

    return build


@pytest.fixture(scope="session")
def right_turns():
    """Right completion for the Cast Away prompt, keyword form."""
    return _pairs(
        ('Reasoning(reasoning="I need to reason step-by-step, checking if the actor and the film actually exist")',
         REASONING_RECORDED),
        ('Reasoning(reasoning="First, I\'ll check if Tom Hanks is an actor")', REASONING_RECORDED),
        ('Actor(name="Tom Hanks")', "True"),
        ('Reasoning(reasoning="Next, I\'ll check if Cast Away is a movie")', REASONING_RECORDED),
        ('Movie(x="Cast Away")', "True"),
        ('Reasoning(reasoning="Now, I\'ll check if Tom Hanks acted in Cast Away")', REASONING_RECORDED),
        ('ActsIn(actor="Tom Hanks", movie_title="Cast Away")', "True"),
        ('Reasoning(reasoning="Based on the information obtained, Tom Hanks did indeed act in Cast Away")',
         REASONING_RECORDED),
        ("CheckCorrectChain()", "True"),
        ("Stop()", PROGRAM_STOPPED),
    )


@pytest.fixture(scope="session")
def wrong_turns():
    """Syntax error followed by a premature verifier call."""
    return _pairs(
        ('Reasoning(reasoning="I need to reason step-by-step, checking if the actor and the film actualy exist")',
         REASONING_RECORDED),
        ("Reasoning(reasoning=Check if Tom Hanks is an actor)",
         "Error: syntax error in command Reasoning(reasoning=Check if Tom Hanks is an actor). Please try again."),
        ("CheckCorrectChain()", "False"),
        ("Stop()", PROGRAM_STOPPED),
    )


def make_config(root: Path, **sections) -> dict:
    config = {
        "problems": str(PROBLEMS_PATH),
        "facts": str(FACTS_PATH),
        "output_root": str(root),
        "backend": {"kind": "mock", "mock": {"error_rate": 0.3, "premature_stop_rate": 0.05}},
        "generation": {"n_c": 12, "n_max": [10, 20], "workers": 2, "max_attempts_factor": 3},
        "sampling": {"n_s": 200, "replacement": False},
        "split": {"train_fol": [0, 1, 2, 3], "train_gsm8k": [0, 1, 2, 3, 4]},
        "dpo": {"beta": 0.1, "learning_rate": 100.0, "steps": 500, "toy_prompts": 5, "toy_completions": 5},
        "evaluation": {"alpha": 0.05},
        "seeds": {"generate": 1234, "sample": 7, "dpo": 13},
    }
    for name, values in sections.items():
        if isinstance(config.get(name), dict) and isinstance(values, dict):
            config[name] = {**config[name], **values}
        else:
            config[name] = values
    return config


@pytest.fixture
def write_config(tmp_path):
    def write(name="run.json", root=None, **sections) -> Path:
        path = tmp_path / name
        path.write_text(json.dumps(make_config(root or tmp_path / "out", **sections)), encoding="utf-8")
        return path

    return write


@pytest.fixture
def build_dataset(tmp_path, right_turns, wrong_turns):
    """Hand-made D* tree: ``layout`` maps (task, i_p, n_max) to (n_right, n_wrong)."""
    def build(layout, root=None, n_max_values=(10, 20)):
        root = root or tmp_path / "dataset"
        caps = sorted(n_max_values)
        totals = [r + w for r, w in layout.values()]
        prompts = {}
        for (task, i_p, n_max), (n_right, n_wrong) in layout.items():
            key = f"{task.value}/nmax_{n_max}/problem_{i_p}"
            directory = root / key
            directory.mkdir(parents=True)
            (directory / "prompt.txt").write_text(f"Prompt for {key}", encoding="utf-8")
            for ordinal in range(n_right):
                write_transcript(directory / "right" / f"{ordinal}.jsonl", right_turns)
            for ordinal in range(n_wrong):
                # the ordinal makes every wrong chain distinct on disk
                turns = (ChatMessage("assistant", f'Reasoning(reasoning="attempt {ordinal}")'),
                         ChatMessage("user", REASONING_RECORDED)) + tuple(wrong_turns)
                write_transcript(directory / "wrong" / f"{ordinal}.jsonl", turns)
            prompts[key] = {
                "task": task.value, "i_t": task.index, "i_n": caps.index(n_max), "i_p": i_p, "n_max": n_max,
                "n_right": n_right, "n_wrong": n_wrong, "aborted": 0, "attempts": n_right + n_wrong,
                "complete": True,
            }
        write_json(root / MANIFEST, {"seed": 0, "n_c": max(totals),
                                     "n_max": caps, "prompts": prompts})
        return root

    return build
