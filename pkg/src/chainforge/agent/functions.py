"""Callable functions offered to the assistant, prompt rendering and dispatch."""

from __future__ import annotations

import json
import operator
import re
from dataclasses import dataclass
from enum import Enum
from fractions import Fraction
from pathlib import Path
from typing import Callable, Optional, Sequence

from chainforge.agent import verifier
from chainforge.agent.command_lang import ArgValue, FunctionCall, parse_call, recovery_message
from chainforge.agent.problems import ProblemSpec
from chainforge.agent.state import PROGRAM_STOPPED, REASONING_RECORDED, ChainState
from chainforge.errors import ConfigError

OPERAND = re.compile(r"-?[0-9]+(?:\.[0-9]+)?(?:/[0-9]+)?")
MAX_OPERAND_CHARS = 64

CATEGORIES = ("reasoning", "predicate", "arithmetic", "verifier", "control")


class ParamKind(str, Enum):
    STRING = "string"
    NUMBER = "number"

    @property
    def annotation(self) -> str:
        return "str" if self is ParamKind.STRING else "float"


@dataclass(frozen=True)
class FunctionSpec:
    name: str
    params: tuple[tuple[str, ParamKind], ...]
    description: str
    example: str
    category: str

    def __post_init__(self):
        if self.category not in CATEGORIES:
            raise ValueError(f"unknown category {self.category!r}")
        parsed = parse_call(self.example)
        if not isinstance(parsed, FunctionCall) or parsed.name != self.name:
            raise ValueError(f"example for {self.name} does not parse as a call to it: {self.example}")

    @property
    def param_names(self) -> tuple[str, ...]:
        return tuple(name for name, _ in self.params)

    def signature(self) -> str:
        params = ", ".join(f"{name}: {kind.annotation}" for name, kind in self.params)
        return f"{self.name}({params})"

    def block(self) -> str:
        lines = [self.signature()]
        if self.description:
            lines.append(self.description)
        lines += ["Example:", self.example]
        return "\n".join(lines)


_S = ParamKind.STRING
_N = ParamKind.NUMBER

CATALOG: dict[str, FunctionSpec] = {
    spec.name: spec
    for spec in (
        FunctionSpec(
            "Reasoning", (("reasoning", _S),),
            "Use this function for your internal reasoning.",
            'Reasoning(reasoning="The next step to take is...")', "reasoning",
        ),
        FunctionSpec(
            "Actor", (("name", _S),),
            "Predicate to check if a given name is an actor.",
            'Actor(name="Sean Connery")', "predicate",
        ),
        FunctionSpec(
            "Movie", (("x", _S),),
            "Predicate that queries IMDb to determine if the argument is a movie.",
            'Movie(x="Goldfinger")', "predicate",
        ),
        FunctionSpec(
            "ActsIn", (("actor", _S), ("movie_title", _S)),
            "Check if a specific actor acted in a given movie.",
            'ActsIn(actor="Sean Connery", movie_title="Goldfinger")', "predicate",
        ),
        FunctionSpec(
            "Add", (("a", _N), ("b", _N)),
            "Add the two numbers a and b and return the sum.",
            'Add(a="2", b="3")', "arithmetic",
        ),
        FunctionSpec(
            "Subtract", (("a", _N), ("b", _N)),
            "Subtract b from a and return the difference.",
            'Subtract(a="10", b="4")', "arithmetic",
        ),
        FunctionSpec(
            "Multiply", (("a", _N), ("b", _N)),
            "Multiply a by b and return the product.",
            'Multiply(a="6", b="7")', "arithmetic",
        ),
        FunctionSpec(
            "Divide", (("a", _N), ("b", _N)),
            "Divide a by b and return the quotient.",
            'Divide(a="84", b="2")', "arithmetic",
        ),
        FunctionSpec(
            "CheckCorrectChain", (),
            "Check if the labels are correct.",
            "CheckCorrectChain()", "verifier",
        ),
        FunctionSpec(
            "Stop", (),
            "Use this function to stop the program.",
            "Stop()", "control",
        ),
    )
}

ARITHMETIC = {
    "Add": operator.add,
    "Subtract": operator.sub,
    "Multiply": operator.mul,
    "Divide": operator.truediv,
}


def specs_for(problem: ProblemSpec) -> list[FunctionSpec]:
    unknown = [name for name in problem.functions if name not in CATALOG]
    if unknown:
        raise ConfigError(f"{problem.problem_id} lists unknown functions {unknown}")
    return [CATALOG[name] for name in problem.functions]


@dataclass(frozen=True)
class FactStore:
    actors: frozenset[str]
    movies: frozenset[str]
    acted_in: frozenset[tuple[str, str]]

    def __post_init__(self):
        stray = {(a, m) for a, m in self.acted_in if a not in self.actors or m not in self.movies}
        if stray:
            raise ValueError(f"acted_in pairs outside actors x movies: {sorted(stray)}")

    @classmethod
    def load(cls, path: Path) -> "FactStore":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"fact store not found: {path}")
        try:
            data = json.loads(path.read_text(encoding="utf-8"))
            return cls(
                actors=frozenset(data["actors"]),
                movies=frozenset(data["movies"]),
                acted_in=frozenset((a, m) for a, m in data["acted_in"]),
            )
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid fact store {path}: {exc}") from exc


class Effect(str, Enum):
    NONE = "none"
    STOP = "stop"
    VERIFIER_PASS = "verifier_pass"
    VERIFIER_FAIL = "verifier_fail"


@dataclass(frozen=True)
class DispatchResult:
    content: str
    effect: Effect = Effect.NONE


def render_prompt(problem: ProblemSpec, specs: Sequence[FunctionSpec]) -> str:
    if not specs:
        raise ValueError("at least one function must be offered")
    blocks = "\n\n".join(spec.block() for spec in specs)
    return f"{problem.persona}\nYou can use the following functions:\n\n{blocks}\n\n{problem.question}"


def format_rational(value: Fraction) -> str:
    """Exact decimal text when the expansion terminates, ``p/q`` otherwise."""
    if value.denominator == 1:
        return str(value.numerator)
    rest, twos, fives = value.denominator, 0, 0
    while rest % 2 == 0:
        rest, twos = rest // 2, twos + 1
    while rest % 5 == 0:
        rest, fives = rest // 5, fives + 1
    if rest != 1:
        return f"{value.numerator}/{value.denominator}"

    places = max(twos, fives)
    scaled = (value * 10**places).numerator
    digits = str(abs(scaled)).rjust(places + 1, "0")
    sign = "-" if scaled < 0 else ""
    return f"{sign}{digits[:-places]}.{digits[-places:]}"


def _as_text(value: ArgValue) -> str:
    if isinstance(value, str):
        return value
    # plain notation only while the expansion stays short
    return format(value, "f") if abs(value.adjusted()) <= MAX_OPERAND_CHARS else str(value)


def _as_number(value: ArgValue) -> Optional[Fraction]:
    """Operands are integers, decimals or ``p/q``; no exponents, at most ``MAX_OPERAND_CHARS`` long."""
    text = _as_text(value).strip()
    if len(text) > MAX_OPERAND_CHARS or not OPERAND.fullmatch(text):
        return None
    try:
        return Fraction(text)
    except ZeroDivisionError:
        return None


def _truth(value: bool) -> str:
    return "True" if value else "False"


Handler = Callable[[FunctionCall, ProblemSpec, ChainState, FactStore], DispatchResult]


def _reasoning(call, problem, state, facts) -> DispatchResult:
    state.record(call, "reasoning", REASONING_RECORDED)
    return DispatchResult(REASONING_RECORDED)


def _predicate(test: Callable[[dict[str, str], FactStore], bool]) -> Handler:
    def handler(call, problem, state, facts) -> DispatchResult:
        args = {key: _as_text(value) for key, value in call.args}
        content = _truth(test(args, facts))
        state.record(call, "predicate", content)
        return DispatchResult(content)

    return handler


def _arithmetic(call, problem, state, facts) -> DispatchResult:
    operands = []
    for key in ("a", "b"):
        number = _as_number(call.kwargs[key])
        if number is None:
            content = recovery_message(f"invalid number {_as_text(call.kwargs[key])}")
            state.record(call, "arithmetic", content, ok=False)
            return DispatchResult(content)
        operands.append(number)

    if call.name == "Divide" and operands[1] == 0:
        content = recovery_message("division by zero")
        state.record(call, "arithmetic", content, ok=False)
        return DispatchResult(content)

    result = ARITHMETIC[call.name](*operands)
    state.last_value = result
    content = format_rational(result)
    state.record(call, "arithmetic", content)
    return DispatchResult(content)


def _check_correct_chain(call, problem, state, facts) -> DispatchResult:
    passed = verifier.check_correct_chain(state, problem)
    state.verified = passed
    content = _truth(passed)
    state.record(call, "verifier", content)
    return DispatchResult(content, Effect.VERIFIER_PASS if passed else Effect.VERIFIER_FAIL)


def _stop(call, problem, state, facts) -> DispatchResult:
    state.stopped = True
    state.record(call, "control", PROGRAM_STOPPED)
    return DispatchResult(PROGRAM_STOPPED, Effect.STOP)


HANDLERS: dict[str, Handler] = {
    "Reasoning": _reasoning,
    "Actor": _predicate(lambda args, facts: args["name"] in facts.actors),
    "Movie": _predicate(lambda args, facts: args["x"] in facts.movies),
    "ActsIn": _predicate(lambda args, facts: (args["actor"], args["movie_title"]) in facts.acted_in),
    **{name: _arithmetic for name in ARITHMETIC},
    "CheckCorrectChain": _check_correct_chain,
    "Stop": _stop,
}


def dispatch(call: FunctionCall, problem: ProblemSpec, state: ChainState, facts: FactStore) -> DispatchResult:
    """Execute one parsed call; model mistakes become ``Please try again.`` turns."""
    if call.name not in problem.functions or call.name not in HANDLERS:
        content = recovery_message(f"unknown command {call.name}")
        state.record(call, "unknown", content, ok=False)
        return DispatchResult(content)

    spec = CATALOG[call.name]
    if set(call.kwargs) != set(spec.param_names):
        content = recovery_message(f"invalid arguments for {call.name}")
        state.record(call, spec.category, content, ok=False)
        return DispatchResult(content)

    return HANDLERS[call.name](call, problem, state, facts)
