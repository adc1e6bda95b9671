"""Fault-injection agent: behaves like a trivial agent until it has served
``--crash-after`` receive_utterance requests, then dies before replying.
Used to exercise the relaunch/retry path of the experiment lifecycle."""

from __future__ import annotations

import argparse
import os
import threading

from simlab.protocol import Role, Utterance
from simlab.reference_systems._base import ProtocolSystem, resolve_port, serve_system


class CrashyAgent(ProtocolSystem):
    role = Role.AGENT

    def __init__(self, crash_after: int):
        self.crash_after = crash_after
        self.replies = 0
        self._lock = threading.Lock()

    def receive_utterance(self, conversation_id: str, utterance: Utterance) -> Utterance:
        with self._lock:
            self.replies += 1
            if self.replies > self.crash_after:
                os._exit(1)
        return Utterance(
            participant=Role.AGENT,
            text=f'I recommend "Test Movie". (reply {self.replies})',
            metadata={},
        )


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--port", type=int, default=None)
    parser.add_argument("--crash-after", type=int, required=True)
    args = parser.parse_args()
    serve_system(CrashyAgent(args.crash_after), resolve_port(args.port, 8099))
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
