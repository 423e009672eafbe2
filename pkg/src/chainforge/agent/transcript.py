from __future__ import annotations

import json
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterable, Optional, Sequence

from chainforge.errors import DatasetIntegrityError, TranscriptStructureError

ROLES = ("system", "assistant", "user")


class Label(str, Enum):
    RIGHT = "right"
    WRONG = "wrong"


@dataclass(frozen=True)
class ChatMessage:
    role: str
    content: str

    def __post_init__(self):
        if self.role not in ROLES:
            raise ValueError(f"role must be one of {ROLES}, got {self.role!r}")
        if self.content is None:
            raise ValueError("message content cannot be None")

    def to_dict(self) -> dict[str, str]:
        return {"role": self.role, "content": self.content}


@dataclass(frozen=True)
class ChainLabel:
    label: Label
    iterations: int


@dataclass(frozen=True)
class ChainTranscript:
    prompt: str
    turns: tuple[ChatMessage, ...] = field(default_factory=tuple)
    label: Optional[ChainLabel] = None

    def messages(self) -> list[ChatMessage]:
        """Prompt followed by the turns, in the shape sent to the backend."""
        return [ChatMessage("user", self.prompt), *self.turns]


def check_alternation(turns: Sequence[ChatMessage]):
    for position, message in enumerate(turns):
        expected = "assistant" if position % 2 == 0 else "user"
        if message.role != expected:
            raise TranscriptStructureError(
                f"turn {position} has role {message.role!r}, expected {expected!r}"
            )


def transcript_to_jsonl(turns: Iterable[ChatMessage]) -> str:
    return "".join(json.dumps(m.to_dict(), ensure_ascii=False) + "\n" for m in turns)


def write_transcript(path: Path, turns: Sequence[ChatMessage]):
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(transcript_to_jsonl(turns), encoding="utf-8")


def read_transcript(path: Path) -> list[ChatMessage]:
    if not path.exists():
        raise DatasetIntegrityError(path, "transcript file is missing")
    turns = []
    for number, line in enumerate(path.read_text(encoding="utf-8").split("\n"), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
            turns.append(ChatMessage(record["role"], record["content"]))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise DatasetIntegrityError(path, f"line {number} is not a chat message ({exc})") from exc
    return turns
