"""Assistant-turn providers.

``ChatCompletionClient`` talks to any OpenAI-compatible chat-completion
server (vLLM, llama.cpp, ...). ``mock_next`` replays a problem's ideal
script with seeded fault injection so whole datasets can be produced
offline.
"""

from __future__ import annotations

import os
import threading
from dataclasses import dataclass, field
from typing import Mapping, Optional, Protocol, Sequence

import httpx
import numpy as np
from openai import APIConnectionError, APIResponseValidationError, APIStatusError, OpenAI

from chainforge.agent.command_lang import FunctionCall, parse_call
from chainforge.agent.problems import ProblemSpec
from chainforge.agent.transcript import ChatMessage
from chainforge.errors import (
    BackendStatusError,
    ConfigError,
    MalformedResponseError,
    TransportError,
)

CHECK = "CheckCorrectChain()"
STOP = "Stop()"


@dataclass(frozen=True)
class BackendConfig:
    endpoint: str = "http://localhost:8000"
    model: str = "meta-llama/Meta-Llama-3-70B-Instruct"
    temperature: float = 0.7
    timeout: float = 60.0
    max_retries: int = 3
    api_key_env: str = "OPENAI_API_KEY"
    max_concurrency: int = 8

    def __post_init__(self):
        if self.max_retries < 0:
            raise ConfigError("backend.http.max_retries must be >= 0")
        if self.timeout <= 0:
            raise ConfigError("backend.http.timeout must be > 0")
        if self.max_concurrency < 1:
            raise ConfigError("backend.http.max_concurrency must be >= 1")


class ChatCompletionClient:
    def __init__(self, cfg: BackendConfig, http_client: Optional[httpx.Client] = None):
        self.cfg = cfg
        self._client = OpenAI(
            base_url=f"{cfg.endpoint.rstrip('/')}/v1",
            api_key=os.environ.get(cfg.api_key_env) or "EMPTY",
            timeout=cfg.timeout,
            max_retries=cfg.max_retries,
            http_client=http_client,
        )
        self._slots = threading.BoundedSemaphore(cfg.max_concurrency)

    def complete(self, messages: Sequence[ChatMessage]) -> str:
        if not messages:
            raise ValueError("at least the prompt message is required")
        payload = [message.to_dict() for message in messages]

        with self._slots:
            try:
                completion = self._client.chat.completions.create(
                    model=self.cfg.model,
                    messages=payload,
                    temperature=self.cfg.temperature,
                )
            except APIStatusError as exc:
                raise BackendStatusError(exc.status_code, exc.message) from exc
            except APIConnectionError as exc:
                raise TransportError(
                    f"{self.cfg.endpoint} unreachable after {self.cfg.max_retries} retries: {exc}"
                ) from exc
            except (APIResponseValidationError, ValueError) as exc:
                raise MalformedResponseError(f"unreadable response body: {exc}") from exc

        try:
            content = completion.choices[0].message.content
        except (AttributeError, IndexError, KeyError, TypeError) as exc:
            raise MalformedResponseError(f"response has no first choice: {exc!r}") from exc
        if not isinstance(content, str):
            raise MalformedResponseError("first choice carries no text content")
        return content


def chat_complete(
    messages: Sequence[ChatMessage],
    cfg: BackendConfig,
    client: Optional[ChatCompletionClient] = None,
) -> str:
    return (client or ChatCompletionClient(cfg)).complete(messages)


@dataclass(frozen=True)
class MockPolicy:
    seed: int
    error_rate: float = 0.0
    premature_stop_rate: float = 0.0
    script: Mapping[str, tuple[str, ...]] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("error_rate", "premature_stop_rate"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"mock {name} must lie in [0, 1], got {value}")
        for problem_id, commands in self.script.items():
            for command in commands:
                if not isinstance(parse_call(command), FunctionCall):
                    raise ConfigError(f"script for {problem_id} has an invalid command: {command}")

    @classmethod
    def from_problems(cls, problems: Sequence[ProblemSpec], seed: int, error_rate: float = 0.0,
                      premature_stop_rate: float = 0.0) -> "MockPolicy":
        return cls(
            seed=seed,
            error_rate=error_rate,
            premature_stop_rate=premature_stop_rate,
            script={p.problem_id: p.script for p in problems},
        )


def malformed_variant(command: str) -> str:
    """Quote-stripped copy of the command, or a truncated one when that still parses."""
    parsed = parse_call(command)
    if isinstance(parsed, FunctionCall) and parsed.args:
        raw = ", ".join(
            f"{key}={value if isinstance(value, str) else format(value, 'f')}" for key, value in parsed.args
        )
        candidate = f"{parsed.name}({raw})"
        if not isinstance(parse_call(candidate), FunctionCall):
            return candidate
    return command.rstrip()[:-1]


def _is_error(message: ChatMessage) -> bool:
    return message.content.startswith("Error:")


def mock_next(
    messages: Sequence[ChatMessage],
    policy: MockPolicy,
    rng: np.random.Generator,
    problem_id: str,
) -> str:
    script = policy.script[problem_id]
    turns = list(messages[1:])
    # Two draws per turn keep the random stream aligned whatever branch is taken
    fault_draw, stop_draw = rng.random(), rng.random()

    # 1. A verifier call that went through is always followed by Stop()
    if len(turns) >= 2 and turns[-2].content.strip() == CHECK and not _is_error(turns[-1]):
        return STOP

    # 2. Position in the script = accepted turns so far
    position = sum(1 for m in turns if m.role == "user" and not _is_error(m))
    if position >= len(script):
        return STOP
    command = script[position]
    check_at = script.index(CHECK) if CHECK in script else len(script)

    # 3. Fault injection
    if fault_draw < policy.error_rate:
        return malformed_variant(command)
    if position < check_at and stop_draw < policy.premature_stop_rate:
        return CHECK
    return command


class Backend(Protocol):
    def next_turn(self, messages: Sequence[ChatMessage], problem: ProblemSpec,
                  rng: np.random.Generator) -> str: ...


class MockBackend:
    def __init__(self, policy: MockPolicy):
        self.policy = policy

    def next_turn(self, messages, problem, rng) -> str:
        return mock_next(messages, self.policy, rng, problem.problem_id)


class HttpBackend:
    def __init__(self, client: ChatCompletionClient):
        self.client = client

    def next_turn(self, messages, problem, rng) -> str:
        return self.client.complete(messages)
