"""Shared helpers for the test suite."""

from __future__ import annotations

import sys
from pathlib import Path

from simlab.dialogue import Conversation, Termination
from simlab.protocol import InformationNeed, Role, Utterance

HELPERS = Path(__file__).parent / "helpers"

FIXTURE_CATALOG = """\
item_id\ttitle\tgenres\tyear\tactors\tkeywords\truntime
m1\tSunset Heist\tAction|Thriller\t2012\tMaya Cole|Derek Fontaine\tundercover|getaway\t128
m2\tParis Punchline\tComedy|Romance\t2009\tLena Brook|Omar Reyes\twedding|mistaken identity\t104
m3\tQuiet Orbit\tDrama|Sci-Fi\t2015\tMaya Cole|Ingrid Halvorsen\tspace station|isolation\t139
"""


def helper_script(name: str) -> list[str]:
    return [sys.executable, str(HELPERS / name)]


def build_conversation(
    turns: list[tuple[str, str]],
    termination: Termination = Termination.STOPPED,
    conv_id: str = "c0",
    need: InformationNeed | None = None,
) -> Conversation:
    """Hand-build a Conversation from (participant, text) pairs.

    Participant "STOP" means a stop-flagged simulator utterance.
    """
    utterances = []
    for participant, text in turns:
        metadata = {"stop": True} if participant == "STOP" else {}
        role = Role.SIMULATOR if participant in ("SIMULATOR", "STOP") else Role.AGENT
        utterances.append(Utterance(participant=role, text=text, metadata=metadata))
    return Conversation(
        id=conv_id,
        need=need or InformationNeed(),
        utterances=utterances,
        termination=termination,
        agent_ref=("agent", "1.0"),
        simulator_ref=("sim", "1.0"),
    )
