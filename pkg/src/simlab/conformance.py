"""Role-specific protocol conformance checks.

A system passes as SIMULATOR only when all four endpoints behave; as AGENT
when /configure and /receive_utterance do (extra endpoints on an agent are
ignored, never errors). Each failed probe yields a violation string naming
the endpoint and, where applicable, the offending field."""

from __future__ import annotations

import uuid
from dataclasses import dataclass, field

from .protocol import (
    InformationNeed,
    ProtocolError,
    ProtocolViolation,
    Role,
    SystemClient,
    Utterance,
)

SAMPLE_NEED = InformationNeed(constraints={"genre": ["Comedy"]}, requested=["runtime"])


@dataclass
class ConformanceReport:
    role: Role
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations


def check_conformance(endpoint: str, role: Role, timeout: float = 5.0) -> ConformanceReport:
    """Probe every endpoint the role's table requires."""
    client = SystemClient(endpoint, role, timeout)
    report = ConformanceReport(role=role)
    conversation_id = f"conformance-{uuid.uuid4().hex[:8]}"

    try:
        client.configure(conversation_id, {})
    except ProtocolError as exc:
        report.violations.append(f"configure: {exc}")
        return report  # nothing else is meaningful if configure fails

    if role is Role.SIMULATOR:
        try:
            client.set_information_need(SAMPLE_NEED)
        except ProtocolError as exc:
            report.violations.append(f"set_information_need: {exc}")

    probe = (
        Utterance(participant=Role.AGENT, text="", metadata={"start": True})
        if role is Role.SIMULATOR
        else Utterance(
            participant=Role.SIMULATOR,
            text="Hello! I am looking for a Comedy movie.",
            metadata={},
        )
    )
    try:
        reply = client.receive_utterance(conversation_id, probe)
        if reply.participant is not role:
            # client already raises for this; defensive double-check
            report.violations.append("receive_utterance: participant mismatch")
    except ProtocolViolation as exc:
        report.violations.append(f"receive_utterance: {exc}")
    except ProtocolError as exc:
        report.violations.append(f"receive_utterance: {exc}")

    if role is Role.SIMULATOR:
        try:
            echoed = client.get_information_need()
            if {k: list(v) for k, v in echoed.constraints.items()} != {
                k: list(v) for k, v in SAMPLE_NEED.constraints.items()
            }:
                report.violations.append(
                    "get_information_need: constraints do not match what was set"
                )
            if list(echoed.requested) != list(SAMPLE_NEED.requested):
                report.violations.append(
                    "get_information_need: requested does not match what was set"
                )
        except ProtocolError as exc:
            report.violations.append(f"get_information_need: {exc}")

    return report
