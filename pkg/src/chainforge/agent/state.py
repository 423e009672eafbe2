from __future__ import annotations

from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

from chainforge.agent.command_lang import FunctionCall

REASONING_RECORDED = "The reasoning has been recorded"
PROGRAM_STOPPED = "The program has been stopped"


@dataclass(frozen=True)
class ExecutedCall:
    call: FunctionCall
    category: str
    content: str
    ok: bool


@dataclass
class ChainState:
    """Mutable record of one chain execution; never shared between chains."""

    executed: list[ExecutedCall] = field(default_factory=list)
    last_value: Optional[Fraction] = None
    verified: Optional[bool] = None
    stopped: bool = False

    def record(self, call: FunctionCall, category: str, content: str, ok: bool = True):
        self.executed.append(ExecutedCall(call, category, content, ok))

    def predicate_calls(self) -> list[ExecutedCall]:
        return [e for e in self.executed if e.ok and e.category == "predicate"]
