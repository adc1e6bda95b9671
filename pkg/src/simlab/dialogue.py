"""Runs one conversation between a launched agent and simulator.

The simulator speaks first: a synthetic empty-text AGENT utterance with
metadata {"start": true} elicits its opener, and that marker is never stored.
The turn loop is simulator speaks / agent replies until a stop flag, the
user-turn limit, a timeout, or a system failure. Failures never raise; they
terminate the conversation with the partial transcript retained.
"""

from __future__ import annotations

import logging
import uuid
from dataclasses import dataclass, field, replace
from datetime import datetime, timedelta, timezone
from enum import Enum
from typing import TYPE_CHECKING

from .protocol import (
    InformationNeed,
    ProtocolError,
    Role,
    SystemClient,
    Timeout,
    Utterance,
)

if TYPE_CHECKING:
    from .runner import RunningSystem

logger = logging.getLogger(__name__)

DEFAULT_MAX_TURNS = 10


class Termination(str, Enum):
    STOPPED = "STOPPED"
    MAX_TURNS = "MAX_TURNS"
    TIMEOUT = "TIMEOUT"
    SYSTEM_ERROR = "SYSTEM_ERROR"


@dataclass(frozen=True)
class ConversationLimits:
    max_turns: int = DEFAULT_MAX_TURNS
    call_timeout: float = 30.0


@dataclass
class Conversation:
    """Collected transcript of one agent/simulator exchange.

    Utterances strictly alternate participants starting with SIMULATOR and
    the transcript never exceeds 2 * max_turns entries. A STOPPED
    conversation always ends with a stop-flagged utterance.
    """

    id: str
    need: InformationNeed
    utterances: list[Utterance] = field(default_factory=list)
    termination: Termination = Termination.SYSTEM_ERROR
    agent_ref: tuple[str, str] = ("", "")
    simulator_ref: tuple[str, str] = ("", "")

    def to_dict(self) -> dict:
        return {
            "id": self.id,
            "information_need": {
                "constraints": {k: list(v) for k, v in self.need.constraints.items()},
                "requested": list(self.need.requested),
                "fulfilled": dict(self.need.fulfilled),
            },
            "termination": self.termination.value,
            "agent": {"name": self.agent_ref[0], "version": self.agent_ref[1]},
            "simulator": {"name": self.simulator_ref[0], "version": self.simulator_ref[1]},
            "utterances": [
                {
                    "participant": u.participant.value,
                    "text": u.text,
                    "metadata": dict(u.metadata),
                    "timestamp": _format_timestamp(u.timestamp),
                }
                for u in self.utterances
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Conversation":
        need = data["information_need"]
        return cls(
            id=data["id"],
            need=InformationNeed(
                constraints={k: list(v) for k, v in need["constraints"].items()},
                requested=list(need["requested"]),
                fulfilled=dict(need.get("fulfilled", {})),
            ),
            termination=Termination(data["termination"]),
            agent_ref=(data["agent"]["name"], data["agent"]["version"]),
            simulator_ref=(data["simulator"]["name"], data["simulator"]["version"]),
            utterances=[
                Utterance(
                    participant=Role(u["participant"]),
                    text=u["text"],
                    metadata=dict(u["metadata"]),
                    timestamp=_parse_timestamp(u.get("timestamp")),
                )
                for u in data["utterances"]
            ],
        )


def _format_timestamp(ts: datetime | None) -> str | None:
    if ts is None:
        return None
    return ts.astimezone(timezone.utc).isoformat().replace("+00:00", "Z")


def _parse_timestamp(raw: str | None) -> datetime | None:
    if raw is None:
        return None
    return datetime.fromisoformat(raw.replace("Z", "+00:00"))


class _Stamper:
    """Assigns strictly increasing UTC receipt timestamps."""

    def __init__(self):
        self._last: datetime | None = None

    def stamp(self, utterance: Utterance) -> Utterance:
        now = datetime.now(timezone.utc)
        if self._last is not None and now <= self._last:
            now = self._last + timedelta(microseconds=1)
        self._last = now
        return replace(utterance, timestamp=now)


START_MARKER = Utterance(participant=Role.AGENT, text="", metadata={"start": True})


def opening_prompt(simulator: SystemClient, conversation_id: str) -> Utterance:
    """Elicit the simulator's opening utterance via the synthetic start marker."""
    return simulator.receive_utterance(conversation_id, START_MARKER)


def run_conversation(
    agent: "RunningSystem",
    simulator: "RunningSystem",
    need: InformationNeed,
    limits: ConversationLimits = ConversationLimits(),
    conversation_id: str | None = None,
) -> Conversation:
    """Orchestrate one conversation; never raises.

    Both systems must be ready and configured, and the simulator must have
    received the need via set_information_need. Timeouts and system failures
    are recorded as TIMEOUT / SYSTEM_ERROR terminations with whatever
    transcript was collected so far.
    """
    conv_id = conversation_id or f"conv-{uuid.uuid4().hex[:12]}"
    sim_client = SystemClient(simulator.endpoint, Role.SIMULATOR, limits.call_timeout)
    agent_client = SystemClient(agent.endpoint, Role.AGENT, limits.call_timeout)
    stamper = _Stamper()
    utterances: list[Utterance] = []
    termination = Termination.SYSTEM_ERROR
    try:
        user_turns = 0
        sim_utterance = opening_prompt(sim_client, conv_id)
        while True:
            utterances.append(stamper.stamp(sim_utterance))
            user_turns += 1
            if sim_utterance.is_stop:
                termination = Termination.STOPPED
                break
            agent_utterance = agent_client.receive_utterance(conv_id, sim_utterance)
            utterances.append(stamper.stamp(agent_utterance))
            if agent_utterance.is_stop:
                termination = Termination.STOPPED
                break
            if user_turns >= limits.max_turns:
                termination = Termination.MAX_TURNS
                break
            sim_utterance = sim_client.receive_utterance(conv_id, agent_utterance)
    except Timeout as exc:
        logger.warning("conversation %s timed out: %s", conv_id, exc)
        termination = Termination.TIMEOUT
    except ProtocolError as exc:
        logger.warning("conversation %s failed: %s", conv_id, exc)
        termination = Termination.SYSTEM_ERROR
    except Exception:
        logger.exception("conversation %s failed unexpectedly", conv_id)
        termination = Termination.SYSTEM_ERROR
    return Conversation(
        id=conv_id,
        need=need,
        utterances=utterances,
        termination=termination,
        agent_ref=(agent.record.name, agent.record.version),
        simulator_ref=(simulator.record.name, simulator.record.version),
    )
