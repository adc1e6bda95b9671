"""Reference executables that speak the system protocol end to end.

Both are launchable standalone (python -m simlab.reference_systems.agent /
.simulator) and honor the SIMLAB_PORT environment variable. The record
builders below register them with the process backend."""

from __future__ import annotations

import sys
from pathlib import Path

from ..protocol import Role
from ..runner import ProcessSpec, SystemRecord


def agent_record(
    catalog_path: str | Path,
    name: str = "ref-agent",
    version: str = "1.0",
    port: int = 8001,
) -> SystemRecord:
    return SystemRecord(
        name=name,
        version=version,
        role=Role.AGENT,
        port=port,
        description="Reference rule-based recommendation agent",
        launch=ProcessSpec(
            command=sys.executable,
            args=(
                "-m",
                "simlab.reference_systems.agent",
                "--catalog",
                str(Path(catalog_path).resolve()),
            ),
        ),
    )


def simulator_record(
    name: str = "ref-simulator",
    version: str = "1.0",
    disclosure_order: str = "forward",
    port: int = 8002,
) -> SystemRecord:
    return SystemRecord(
        name=name,
        version=version,
        role=Role.SIMULATOR,
        port=port,
        description="Reference scripted user simulator",
        launch=ProcessSpec(
            command=sys.executable,
            args=(
                "-m",
                "simlab.reference_systems.simulator",
                "--disclosure-order",
                disclosure_order,
            ),
        ),
    )
