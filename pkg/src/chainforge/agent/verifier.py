"""CheckCorrectChain semantics and right/wrong labelling of finished chains."""

from __future__ import annotations

from typing import Sequence, Union

from chainforge.agent.command_lang import FunctionCall, parse_call
from chainforge.agent.problems import ProblemSpec, Task
from chainforge.agent.state import PROGRAM_STOPPED, ChainState
from chainforge.agent.transcript import ChainLabel, ChainTranscript, ChatMessage, Label, check_alternation
from chainforge.errors import TranscriptStructureError

TranscriptLike = Union[ChainTranscript, Sequence[ChatMessage]]


def check_correct_chain(state: ChainState, problem: ProblemSpec) -> bool:
    if problem.task is Task.GSM8K:
        return state.last_value is not None and state.last_value == problem.gold_answer

    # FOL: executed predicates must replay the expected trace exactly, each returning True
    executed = state.predicate_calls()
    expected = problem.expected_trace
    if len(executed) != len(expected):
        return False
    for step, wanted in zip(executed, expected):
        args = {key: value if isinstance(value, str) else format(value, "f") for key, value in step.call.args}
        if step.call.name != wanted.name or args != dict(wanted.args) or step.content != "True":
            return False
    return True


def _turns(transcript: TranscriptLike) -> Sequence[ChatMessage]:
    return transcript.turns if isinstance(transcript, ChainTranscript) else transcript


def count_iterations(transcript: TranscriptLike) -> int:
    turns = _turns(transcript)
    check_alternation(turns)
    if len(turns) % 2:
        raise TranscriptStructureError("transcript ends with an assistant turn that has no reply")
    return len(turns) // 2


def _is_call(content: str, name: str) -> bool:
    parsed = parse_call(content)
    return isinstance(parsed, FunctionCall) and parsed.name == name and not parsed.args


def classify_chain(transcript: TranscriptLike, n_max: int) -> ChainLabel:
    """Right iff CheckCorrectChain answered True, Stop followed, and n <= n_max."""
    turns = _turns(transcript)
    iterations = count_iterations(turns)

    verified = False
    stopped_after = False
    for position in range(0, len(turns), 2):
        command, reply = turns[position].content, turns[position + 1].content
        if _is_call(command, "CheckCorrectChain") and reply == "True":
            verified = True
        elif verified and _is_call(command, "Stop") and reply == PROGRAM_STOPPED:
            stopped_after = True

    right = verified and stopped_after and iterations <= n_max
    return ChainLabel(Label.RIGHT if right else Label.WRONG, iterations)
