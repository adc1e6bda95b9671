"""Scripted user simulator speaking the system protocol.

Given an information need, it opens by disclosing one constraint and
discloses one more per turn until exhausted. If no agent utterance has named
a title yet (detected by the word "recommend" or a double-quoted span), it
restates the constraints; once a title is named it asks each requested
attribute in order, recording the agent's next reply as the observed answer.
When every requested attribute is fulfilled it thanks the agent with a
stop-flagged utterance. A configured "max_turns" makes it stop by that many
of its own turns. Behavior is a pure function of (need, utterance history).

Version variation is emulated by the disclosure order flag: --disclosure-order
reverse walks the constraints backwards.

Run as: python -m simlab.reference_systems.simulator
"""

from __future__ import annotations

import copy
import re
import threading
from dataclasses import dataclass, field
from typing import Any

from ..protocol import InformationNeed, Role, Utterance
from ._base import ProtocolSystem, SystemStateError, base_parser, resolve_port, serve_system

DEFAULT_PORT = 8002

_TITLE_HINT_RE = re.compile(r"\brecommend|\"[^\"]+\"")

GOODBYE_TEXT = "Thank you for your help. Goodbye!"
OUT_OF_TURNS_TEXT = "I have run out of time. Thank you, goodbye!"


@dataclass
class _SimulationState:
    constraints: dict[str, list]
    requested: list[str]
    fulfilled: dict[str, Any] = field(default_factory=dict)
    disclosure_seq: list[tuple[str, list]] = field(default_factory=list)
    disclosed: int = 0
    title_seen: bool = False
    awaiting_attr: str | None = None
    turns: int = 0


def _render_values(attr: str, values: list) -> str:
    if attr == "runtime":
        return " or ".join(f"{v} minutes" for v in values)
    return " or ".join(str(v) for v in values)


class ScriptedSimulator(ProtocolSystem):
    role = Role.SIMULATOR

    def __init__(self, disclosure_order: str = "forward"):
        self.disclosure_order = disclosure_order
        self._parameters: dict[str, Any] = {}
        self._pending_need: InformationNeed | None = None
        self._conversations: dict[str, _SimulationState] = {}
        self._active_id: str | None = None
        self._lock = threading.Lock()

    def configure(self, system_id: str, parameters: dict) -> None:
        with self._lock:
            self._parameters.update(parameters)

    def set_information_need(self, need: InformationNeed) -> None:
        with self._lock:
            self._pending_need = need
            # set/get coherence: until a conversation consumes this need,
            # get_information_need must echo it, not an older conversation
            self._active_id = None

    def get_information_need(self) -> InformationNeed:
        with self._lock:
            if self._active_id is not None:
                state = self._conversations[self._active_id]
                return InformationNeed(
                    constraints=copy.deepcopy(state.constraints),
                    requested=list(state.requested),
                    fulfilled=dict(state.fulfilled),
                )
            if self._pending_need is not None:
                return self._pending_need
        raise SystemStateError("no information need has been set")

    def receive_utterance(self, conversation_id: str, utterance: Utterance) -> Utterance:
        with self._lock:
            state = self._conversations.get(conversation_id)
            if state is None:
                state = self._start_conversation()
                self._conversations[conversation_id] = state
            self._active_id = conversation_id
            state.turns += 1
            is_start = utterance.metadata.get("start") is True
            incoming = utterance.text.strip()
            if not is_start:
                if state.awaiting_attr is not None and incoming:
                    state.fulfilled[state.awaiting_attr] = incoming
                    state.awaiting_attr = None
                if _TITLE_HINT_RE.search(incoming):
                    state.title_seen = True
            max_turns = self._parameters.get("max_turns")
            if isinstance(max_turns, int) and max_turns > 0 and state.turns >= max_turns:
                return _stop_utterance(OUT_OF_TURNS_TEXT)
            return self._next_utterance(state)

    def _start_conversation(self) -> _SimulationState:
        if self._pending_need is None:
            raise SystemStateError("information need must be set before the conversation")
        need = self._pending_need
        order = self._parameters.get("disclosure_order", self.disclosure_order)
        seq = [(attr, list(values)) for attr, values in need.constraints.items()]
        if order == "reverse":
            seq = list(reversed(seq))
        return _SimulationState(
            constraints=copy.deepcopy(dict(need.constraints)),
            requested=list(need.requested),
            fulfilled=dict(need.fulfilled),
            disclosure_seq=seq,
        )

    def _next_utterance(self, state: _SimulationState) -> Utterance:
        if state.disclosed < len(state.disclosure_seq):
            attr, values = state.disclosure_seq[state.disclosed]
            state.disclosed += 1
            rendered = _render_values(attr, values)
            if state.disclosed == 1:
                text = f"Hello! I am looking for a movie. The {attr} should be {rendered}."
            else:
                text = f"Also, the {attr} should be {rendered}."
            return _plain_utterance(text)
        if not state.title_seen:
            recap = "; ".join(
                f"the {attr} should be {_render_values(attr, values)}"
                for attr, values in state.disclosure_seq
            )
            if not recap:
                recap = "anything you can suggest"
            return _plain_utterance(
                f"To recap, I am looking for a movie where {recap}. Can you recommend one?"
            )
        next_attr = next((a for a in state.requested if a not in state.fulfilled), None)
        if next_attr is not None:
            state.awaiting_attr = next_attr
            verb = "are" if next_attr in ("actors", "keywords") else "is"
            return _plain_utterance(f"What {verb} the {next_attr} of that movie?")
        return _stop_utterance(GOODBYE_TEXT)


def _plain_utterance(text: str) -> Utterance:
    return Utterance(participant=Role.SIMULATOR, text=text, metadata={})


def _stop_utterance(text: str) -> Utterance:
    return Utterance(participant=Role.SIMULATOR, text=text, metadata={"stop": True})


def main(argv: list[str] | None = None) -> int:
    parser = base_parser("Reference scripted user simulator")
    parser.add_argument(
        "--disclosure-order",
        choices=("forward", "reverse"),
        default="forward",
        help="order in which constraints are disclosed (version variation)",
    )
    args = parser.parse_args(argv)
    simulator = ScriptedSimulator(disclosure_order=args.disclosure_order)
    serve_system(simulator, resolve_port(args.port, DEFAULT_PORT), host=args.host)
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
