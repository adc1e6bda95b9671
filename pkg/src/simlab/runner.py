"""Systems registry and launcher.

A system is registered once as a SystemRecord (process command or container
image) and launched per experiment into a fresh environment: the launcher
allocates an unused host port for every launch so parallel experiments never
collide. Processes learn their port through the SIMLAB_PORT environment
variable; containers always listen on record.port internally and get the
host port mapped onto it. stdout/stderr of launched systems are captured to
per-experiment log files.
"""

from __future__ import annotations

import logging
import shutil
import socket
import subprocess
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from .errors import SimlabError
from .protocol import ProtocolError, Role, SystemClient

logger = logging.getLogger(__name__)

READY_PROBE_ID = "healthcheck"
_BACKOFF_START = 0.1
_BACKOFF_CAP = 1.0


class RunnerError(SimlabError):
    pass


class DuplicateVersion(RunnerError):
    pass


class InvalidLaunchSpec(RunnerError):
    pass


class BackendUnavailable(RunnerError):
    pass


class SpawnFailure(RunnerError):
    pass


class NotReady(RunnerError):
    """Readiness deadline elapsed; carries the last probe failure."""


class TeardownFailure(RunnerError):
    pass


@dataclass(frozen=True)
class ProcessSpec:
    command: str
    args: tuple[str, ...] = ()
    env: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class ContainerSpec:
    image: str
    env: dict[str, str] = field(default_factory=dict)


@dataclass(frozen=True)
class SystemRecord:
    """Registry entry for one agent or simulator version."""

    name: str
    version: str
    role: Role
    launch: ProcessSpec | ContainerSpec
    port: int
    description: str = ""

    @property
    def system_id(self) -> str:
        return f"{self.name}@{self.version}"

    def to_dict(self) -> dict:
        if isinstance(self.launch, ProcessSpec):
            launch: dict[str, Any] = {
                "process": {
                    "command": self.launch.command,
                    "args": list(self.launch.args),
                    "env": dict(self.launch.env),
                }
            }
        else:
            launch = {"container": {"image": self.launch.image, "env": dict(self.launch.env)}}
        return {
            "name": self.name,
            "version": self.version,
            "role": self.role.value,
            "port": self.port,
            "description": self.description,
            "launch": launch,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SystemRecord":
        launch_spec = data.get("launch") or {}
        if "process" in launch_spec:
            proc = launch_spec["process"]
            launch: ProcessSpec | ContainerSpec = ProcessSpec(
                command=proc["command"],
                args=tuple(proc.get("args", ())),
                env=dict(proc.get("env", {})),
            )
        elif "container" in launch_spec:
            cont = launch_spec["container"]
            launch = ContainerSpec(image=cont["image"], env=dict(cont.get("env", {})))
        else:
            raise InvalidLaunchSpec(
                "launch must specify either a process command or a container image"
            )
        return cls(
            name=data["name"],
            version=data["version"],
            role=Role(data["role"]),
            launch=launch,
            port=int(data["port"]),
            description=data.get("description", ""),
        )


class SystemRegistry:
    """Persists system records via the store; (name, version) is unique."""

    def __init__(self, store):
        self._store = store
        self._lock = threading.Lock()

    def register(self, record: SystemRecord) -> str:
        if not isinstance(record.launch, (ProcessSpec, ContainerSpec)):
            raise InvalidLaunchSpec("record has neither process nor container launch spec")
        with self._lock:
            if self._store.has_system_record(record.name, record.version):
                raise DuplicateVersion(f"{record.system_id} is already registered")
            self._store.put_system_record(record.to_dict())
        return record.system_id

    def resolve(self, name: str, version: str) -> SystemRecord:
        from .storage import NotFound

        try:
            return SystemRecord.from_dict(self._store.get_system_record(name, version))
        except NotFound:
            raise NotFound(f"system {name}@{version} is not registered") from None

    def list(self) -> list[SystemRecord]:
        return [SystemRecord.from_dict(d) for d in self._store.list_system_records()]


@dataclass
class SystemHandle:
    """Opaque teardown handle; one per launch."""

    kind: str  # "process" | "container"
    host_port: int
    process: subprocess.Popen | None = None
    container_id: str | None = None
    runtime: str | None = None
    log_path: Path | None = None
    log_file: Any = None
    torn_down: bool = False


@dataclass
class RunningSystem:
    record: SystemRecord
    endpoint: str
    handle: SystemHandle


_recent_ports: dict[int, float] = {}
_recent_ports_lock = threading.Lock()
_RECENT_PORT_TTL = 30.0


def allocate_port() -> int:
    """Pick a currently free TCP port from the ephemeral range.

    Ports handed out recently are skipped so concurrent launches within this
    process can never collide on a port the OS would happily re-offer."""
    while True:
        with socket.socket(socket.AF_INET, socket.SOCK_STREAM) as sock:
            sock.bind(("127.0.0.1", 0))
            port = sock.getsockname()[1]
        now = time.monotonic()
        with _recent_ports_lock:
            for stale in [p for p, t in _recent_ports.items() if t < now]:
                del _recent_ports[stale]
            if port not in _recent_ports:
                _recent_ports[port] = now + _RECENT_PORT_TTL
                return port


def detect_container_runtime() -> str | None:
    for binary in ("docker", "podman"):
        if shutil.which(binary):
            return binary
    return None


class Launcher:
    """Starts and tears down systems; keeps a census of live handles.

    Every launch must eventually be paired with exactly one effective
    teardown; live_count() is the assertable census of handles that have
    not been torn down yet.
    """

    def __init__(self, log_dir: str | Path | None = None):
        self.log_dir = Path(log_dir) if log_dir else None
        self._lock = threading.Lock()
        self._live: dict[int, SystemHandle] = {}

    def live_count(self) -> int:
        with self._lock:
            return len(self._live)

    def launch(self, record: SystemRecord, log_dir: str | Path | None = None) -> RunningSystem:
        target_dir = Path(log_dir) if log_dir else self.log_dir
        if isinstance(record.launch, ProcessSpec):
            handle = self._launch_process(record, record.launch, target_dir)
        elif isinstance(record.launch, ContainerSpec):
            handle = self._launch_container(record, record.launch)
        else:
            raise InvalidLaunchSpec("record has neither process nor container launch spec")
        with self._lock:
            self._live[id(handle)] = handle
        return RunningSystem(
            record=record, endpoint=f"127.0.0.1:{handle.host_port}", handle=handle
        )

    def _launch_process(
        self, record: SystemRecord, spec: ProcessSpec, log_dir: Path | None
    ) -> SystemHandle:
        import os

        host_port = allocate_port()
        env = dict(os.environ)
        env.update(spec.env)
        env["SIMLAB_PORT"] = str(host_port)
        log_file = None
        log_path = None
        if log_dir is not None:
            log_dir.mkdir(parents=True, exist_ok=True)
            log_path = log_dir / f"{record.name}@{record.version}.log"
            log_file = log_path.open("ab")
        try:
            process = subprocess.Popen(
                [spec.command, *spec.args],
                env=env,
                stdout=log_file if log_file else subprocess.DEVNULL,
                stderr=subprocess.STDOUT if log_file else subprocess.DEVNULL,
            )
        except (FileNotFoundError, PermissionError, OSError) as exc:
            if log_file:
                log_file.close()
            raise SpawnFailure(f"cannot start {spec.command!r}: {exc}") from exc
        return SystemHandle(
            kind="process",
            host_port=host_port,
            process=process,
            log_path=log_path,
            log_file=log_file,
        )

    def _launch_container(self, record: SystemRecord, spec: ContainerSpec) -> SystemHandle:
        runtime = detect_container_runtime()
        if runtime is None:
            raise BackendUnavailable(
                "no container runtime (docker/podman) found; use a process launch spec"
            )
        host_port = allocate_port()
        cmd = [runtime, "run", "-d", "--rm"]
        for key, value in spec.env.items():
            cmd += ["-e", f"{key}={value}"]
        cmd += ["-e", f"SIMLAB_PORT={record.port}"]
        cmd += ["-p", f"127.0.0.1:{host_port}:{record.port}", spec.image]
        proc = subprocess.run(cmd, capture_output=True, text=True)
        if proc.returncode != 0:
            raise SpawnFailure(
                f"{runtime} run failed for {spec.image}: {proc.stderr.strip()}"
            )
        return SystemHandle(
            kind="container",
            host_port=host_port,
            container_id=proc.stdout.strip(),
            runtime=runtime,
        )

    def teardown(self, rs: RunningSystem | SystemHandle) -> None:
        """Stop the system and free its port. Idempotent; never raises."""
        handle = rs.handle if isinstance(rs, RunningSystem) else rs
        with self._lock:
            if handle.torn_down:
                return
            handle.torn_down = True
            self._live.pop(id(handle), None)
        try:
            if handle.kind == "process" and handle.process is not None:
                self._stop_process(handle.process)
            elif handle.kind == "container" and handle.container_id:
                subprocess.run(
                    [handle.runtime, "rm", "-f", handle.container_id],
                    capture_output=True,
                    timeout=30,
                )
        except Exception as exc:
            logger.error("teardown failure (continuing): %s", TeardownFailure(str(exc)))
        finally:
            if handle.log_file is not None:
                try:
                    handle.log_file.close()
                except OSError:
                    pass
                handle.log_file = None

    @staticmethod
    def _stop_process(process: subprocess.Popen) -> None:
        if process.poll() is not None:
            return  # already dead
        process.terminate()
        try:
            process.wait(timeout=5)
        except subprocess.TimeoutExpired:
            process.kill()
            process.wait(timeout=5)

    def teardown_all(self) -> None:
        with self._lock:
            handles = list(self._live.values())
        for handle in handles:
            self.teardown(handle)


def await_ready(rs: RunningSystem, deadline: float = 10.0) -> None:
    """Poll /configure with the healthcheck probe until the system answers.

    Exponential backoff starting at 100 ms. Raises NotReady (carrying the
    last probe failure) when the deadline elapses or the process has died.
    """
    client = SystemClient(rs.endpoint, rs.record.role, timeout=min(deadline, 5.0))
    deadline_at = time.monotonic() + deadline
    backoff = _BACKOFF_START
    last_failure: Exception | None = None
    while True:
        handle = rs.handle
        if handle.kind == "process" and handle.process is not None:
            code = handle.process.poll()
            if code is not None:
                raise NotReady(
                    f"{rs.record.system_id} exited with code {code} before becoming ready"
                    + _log_tail(handle)
                )
        try:
            client.configure(READY_PROBE_ID, {})
            return
        except ProtocolError as exc:
            last_failure = exc
        if time.monotonic() >= deadline_at:
            raise NotReady(
                f"{rs.record.system_id} not ready after {deadline}s: {last_failure}"
            )
        time.sleep(min(backoff, max(0.0, deadline_at - time.monotonic())))
        backoff = min(backoff * 2, _BACKOFF_CAP)


def _log_tail(handle: SystemHandle, limit: int = 800) -> str:
    if handle.log_path is None or not handle.log_path.is_file():
        return ""
    try:
        tail = handle.log_path.read_bytes()[-limit:].decode("utf-8", errors="replace")
    except OSError:
        return ""
    return f"\n--- captured output ---\n{tail}" if tail.strip() else ""
