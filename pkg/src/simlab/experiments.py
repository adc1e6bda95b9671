"""Experiment lifecycle state machine and the bounded worker pool.

Submitted experiments enter a FIFO queue; a worker slot (in-process thread,
capacity adjustable at runtime) drives each through the four lifecycle
stages: environment configuration (task instantiation, need generation),
evaluation (launch the agent/simulator pair, collect conversations), result
storage (metric computation), and environment cleaning (teardown — always
executed before a terminal DONE/FAILED state is recorded). No failure
escapes a worker; everything lands in failure_reason with partial artifacts
retained. Durability ordering: config before any conversation, every
conversation before the results that reference it, and each state
transition is persisted as it happens.
"""

from __future__ import annotations

import logging
import threading
import time
import uuid
from collections import deque
from dataclasses import dataclass, field, replace
from datetime import datetime, timezone
from enum import Enum

from .dialogue import Conversation, ConversationLimits, Termination, run_conversation
from .errors import SimlabError
from .metrics import compute_metrics
from .protocol import InformationNeed, ProtocolError, Role, SystemClient
from .runner import Launcher, NotReady, RunningSystem, SystemRegistry, await_ready
from .storage import Store, StorageError
from .tasks import TaskRegistry, UnknownTask

logger = logging.getLogger(__name__)

RELAUNCH_BUDGET = 1  # one relaunch of a crashed system per experiment
HEALTH_PROBE_DEADLINE = 2.0


class ExperimentError(SimlabError):
    pass


class UnknownSystem(ExperimentError):
    pass


class RoleMismatch(ExperimentError):
    pass


class InvalidCapacity(ExperimentError):
    pass


class Status(str, Enum):
    QUEUED = "QUEUED"
    PROVISIONING = "PROVISIONING"
    RUNNING = "RUNNING"
    EVALUATING = "EVALUATING"
    DONE = "DONE"
    FAILED = "FAILED"


TERMINAL = frozenset({Status.DONE, Status.FAILED})

_LEGAL: dict[Status, frozenset[Status]] = {
    Status.QUEUED: frozenset({Status.PROVISIONING, Status.FAILED}),
    Status.PROVISIONING: frozenset({Status.RUNNING, Status.FAILED}),
    Status.RUNNING: frozenset({Status.EVALUATING, Status.FAILED}),
    Status.EVALUATING: frozenset({Status.DONE, Status.FAILED}),
    Status.DONE: frozenset(),
    Status.FAILED: frozenset(),
}

_STAGE_SPANS = (
    ("queued", Status.QUEUED, Status.PROVISIONING),
    ("provisioning", Status.PROVISIONING, Status.RUNNING),
    ("running", Status.RUNNING, Status.EVALUATING),
    ("evaluating", Status.EVALUATING, Status.DONE),
)


@dataclass
class ExperimentConfig:
    task: str
    agent: tuple[str, str]
    simulator: tuple[str, str]
    num_needs: int
    seed: int
    limits: ConversationLimits = field(default_factory=ConversationLimits)
    submitter: str = "anonymous"
    experiment_id: str = ""

    def to_dict(self) -> dict:
        return {
            "experiment_id": self.experiment_id,
            "task": self.task,
            "agent": {"name": self.agent[0], "version": self.agent[1]},
            "simulator": {"name": self.simulator[0], "version": self.simulator[1]},
            "num_needs": self.num_needs,
            "seed": self.seed,
            "limits": {
                "max_turns": self.limits.max_turns,
                "call_timeout": self.limits.call_timeout,
            },
            "submitter": self.submitter,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentConfig":
        limits = data.get("limits", {})
        return cls(
            task=data["task"],
            agent=(data["agent"]["name"], data["agent"]["version"]),
            simulator=(data["simulator"]["name"], data["simulator"]["version"]),
            num_needs=int(data["num_needs"]),
            seed=int(data["seed"]),
            limits=ConversationLimits(
                max_turns=int(limits.get("max_turns", 10)),
                call_timeout=float(limits.get("call_timeout", 30.0)),
            ),
            submitter=data.get("submitter", "anonymous"),
            experiment_id=data.get("experiment_id", ""),
        )


@dataclass
class ExperimentState:
    status: Status = Status.QUEUED
    progress: float = 0.0
    timestamps: dict[str, str] = field(default_factory=dict)
    failure_reason: str | None = None

    def to_dict(self) -> dict:
        return {
            "status": self.status.value,
            "progress": self.progress,
            "timestamps": dict(self.timestamps),
            "failure_reason": self.failure_reason,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ExperimentState":
        return cls(
            status=Status(data["status"]),
            progress=float(data.get("progress", 0.0)),
            timestamps=dict(data.get("timestamps", {})),
            failure_reason=data.get("failure_reason"),
        )


class _Cancelled(Exception):
    pass


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat().replace("+00:00", "Z")


def _need_to_dict(need: InformationNeed) -> dict:
    return {
        "constraints": {k: list(v) for k, v in need.constraints.items()},
        "requested": list(need.requested),
        "fulfilled": dict(need.fulfilled),
    }


def _need_from_dict(data: dict) -> InformationNeed:
    return InformationNeed(
        constraints={k: list(v) for k, v in data["constraints"].items()},
        requested=list(data["requested"]),
        fulfilled=dict(data.get("fulfilled", {})),
    )


class ExperimentManager:
    """FIFO queue plus bounded pool of in-process workers."""

    def __init__(
        self,
        store: Store,
        registry: SystemRegistry,
        tasks: TaskRegistry,
        launcher: Launcher,
        capacity: int = 2,
        provision_timeout: float = 30.0,
    ):
        if capacity < 1:
            raise InvalidCapacity("capacity must be >= 1")
        self._store = store
        self._registry = registry
        self._tasks = tasks
        self._launcher = launcher
        self._capacity = capacity
        self.provision_timeout = provision_timeout
        self._lock = threading.RLock()
        self._terminal = threading.Condition(self._lock)
        self._queue: deque[str] = deque()
        self._active: set[str] = set()
        self._threads: dict[str, threading.Thread] = {}
        self._cancel: dict[str, threading.Event] = {}
        self._states: dict[str, ExperimentState] = {}
        self._completed = 0
        self._failed = 0
        self._seq = 0
        self._shutting_down = False

    # -- submission ---------------------------------------------------------

    def submit(self, config: ExperimentConfig) -> str:
        """Validate, persist, and enqueue; starts immediately if a slot is free."""
        if config.num_needs < 1:
            raise ValueError("num_needs must be >= 1")
        self._tasks.get(config.task)  # raises UnknownTask
        agent = self._resolve(config.agent)
        if agent.role is not Role.AGENT:
            raise RoleMismatch(f"{agent.system_id} is a {agent.role.value}, expected AGENT")
        simulator = self._resolve(config.simulator)
        if simulator.role is not Role.SIMULATOR:
            raise RoleMismatch(
                f"{simulator.system_id} is a {simulator.role.value}, expected SIMULATOR"
            )
        with self._lock:
            self._seq += 1
            experiment_id = (
                f"{_safe_submitter(config.submitter)}-{self._seq:04d}-{uuid.uuid4().hex[:6]}"
            )
            config = replace(config, experiment_id=experiment_id)
            self._store.put_config(experiment_id, config.to_dict())
            state = ExperimentState(timestamps={Status.QUEUED.value: _utc_now()})
            self._states[experiment_id] = state
            self._store.put_state(experiment_id, state.to_dict())
            self._queue.append(experiment_id)
            self._cancel[experiment_id] = threading.Event()
            self._dispatch()
        return experiment_id

    def _resolve(self, ref: tuple[str, str]):
        try:
            return self._registry.resolve(*ref)
        except StorageError:
            raise UnknownSystem(f"system {ref[0]}@{ref[1]} is not registered") from None

    # -- pool management ------------------------------------------------------

    def pool_resize(self, capacity: int) -> None:
        """Adjust worker capacity; a shrink never interrupts running work."""
        if capacity < 1:
            raise InvalidCapacity("capacity must be >= 1")
        with self._lock:
            self._capacity = capacity
            self._dispatch()

    @property
    def capacity(self) -> int:
        with self._lock:
            return self._capacity

    def _dispatch(self) -> None:
        # caller holds the lock; starts queued experiments FIFO while slots last
        while self._queue and len(self._active) < self._capacity and not self._shutting_down:
            experiment_id = self._queue.popleft()
            self._active.add(experiment_id)
            self._transition(experiment_id, Status.PROVISIONING)
            thread = threading.Thread(
                target=self._worker, args=(experiment_id,), daemon=True,
                name=f"experiment-{experiment_id}",
            )
            self._threads[experiment_id] = thread
            thread.start()

    def _worker(self, experiment_id: str) -> None:
        try:
            self._run_lifecycle(experiment_id, self._cancel[experiment_id])
        finally:
            with self._lock:
                self._active.discard(experiment_id)
                self._threads.pop(experiment_id, None)
                self._cancel.pop(experiment_id, None)
                self._dispatch()

    # -- state bookkeeping -----------------------------------------------------

    def _transition(
        self, experiment_id: str, status: Status, failure_reason: str | None = None
    ) -> None:
        with self._lock:
            state = self._states[experiment_id]
            if status not in _LEGAL[state.status]:
                if state.status in TERMINAL:
                    logger.error(
                        "ignoring transition %s -> %s for %s (already terminal)",
                        state.status.value, status.value, experiment_id,
                    )
                    return
                raise ExperimentError(
                    f"illegal transition {state.status.value} -> {status.value}"
                )
            state.status = status
            state.timestamps[status.value] = _utc_now()
            if failure_reason is not None:
                state.failure_reason = failure_reason
            if status is Status.DONE:
                self._completed += 1
            elif status is Status.FAILED:
                self._failed += 1
            self._store.put_state(experiment_id, state.to_dict())
            if status in TERMINAL:
                self._terminal.notify_all()

    def _set_progress(self, experiment_id: str, progress: float) -> None:
        with self._lock:
            state = self._states[experiment_id]
            state.progress = progress
            self._store.put_state(experiment_id, state.to_dict())

    def state(self, experiment_id: str) -> ExperimentState:
        with self._lock:
            if experiment_id in self._states:
                return replace(
                    self._states[experiment_id],
                    timestamps=dict(self._states[experiment_id].timestamps),
                )
        return ExperimentState.from_dict(self._store.get_state(experiment_id))

    def wait(self, experiment_id: str, timeout: float = 120.0) -> ExperimentState:
        """Block until the experiment reaches a terminal state."""
        deadline = time.monotonic() + timeout
        with self._terminal:
            while True:
                state = self.state(experiment_id)
                if state.status in TERMINAL:
                    return state
                remaining = deadline - time.monotonic()
                if remaining <= 0:
                    raise TimeoutError(f"{experiment_id} still {state.status.value}")
                self._terminal.wait(timeout=min(remaining, 1.0))

    def stats(self) -> dict:
        with self._lock:
            snapshot = {
                "queue_length": len(self._queue),
                "running": len(self._active),
                "completed": self._completed,
                "failed": self._failed,
            }
        snapshot["stage_seconds"] = self._stage_timings()
        return snapshot

    def queue_snapshot(self) -> dict:
        with self._lock:
            return {"queued": list(self._queue), "running": sorted(self._active)}

    def _stage_timings(self) -> dict:
        spans: dict[str, list[float]] = {name: [] for name, _, _ in _STAGE_SPANS}
        with self._lock:
            states = list(self._states.values())
        for state in states:
            for name, start, end in _STAGE_SPANS:
                t0 = state.timestamps.get(start.value)
                t1 = state.timestamps.get(end.value)
                if t0 and t1:
                    spans[name].append(_seconds_between(t0, t1))
        return {
            name: {
                "mean": (sum(vals) / len(vals)) if vals else 0.0,
                "count": len(vals),
            }
            for name, vals in spans.items()
        }

    # -- lifecycle -------------------------------------------------------------

    def _run_lifecycle(self, experiment_id: str, cancel: threading.Event) -> None:
        launched: list[RunningSystem] = []
        failure: str | None = None
        try:
            config = ExperimentConfig.from_dict(self._store.get_config(experiment_id))
            task, catalog = self._tasks.get(config.task)

            # stage 1: environment configuration
            needs = task.generate(catalog, config.num_needs, config.seed)
            self._store.put_needs(experiment_id, [_need_to_dict(n) for n in needs])
            agent_record = self._registry.resolve(*config.agent)
            simulator_record = self._registry.resolve(*config.simulator)
            log_dir = self._store.experiment_log_dir(experiment_id)
            agent_rs = self._launcher.launch(agent_record, log_dir)
            launched.append(agent_rs)
            simulator_rs = self._launcher.launch(simulator_record, log_dir)
            launched.append(simulator_rs)
            await_ready(agent_rs, self.provision_timeout)
            await_ready(simulator_rs, self.provision_timeout)
            parameters = {"max_turns": config.limits.max_turns}
            self._configure(agent_rs, experiment_id, parameters, config)
            self._configure(simulator_rs, experiment_id, parameters, config)
            if cancel.is_set():
                raise _Cancelled()

            # stage 2: evaluation — collect conversations
            self._transition(experiment_id, Status.RUNNING)
            relaunches_left = RELAUNCH_BUDGET
            for index, need in enumerate(needs):
                if cancel.is_set():
                    raise _Cancelled()
                conversation_id = f"{experiment_id}-c{index:04d}"
                conversation = self._run_one(
                    agent_rs, simulator_rs, need, config, conversation_id
                )
                self._store.put_conversation(experiment_id, index, conversation.to_dict())
                self._set_progress(experiment_id, (index + 1) / config.num_needs)
                if conversation.termination in (Termination.SYSTEM_ERROR, Termination.TIMEOUT):
                    agent_rs, simulator_rs, relaunches_left = self._heal(
                        experiment_id, agent_rs, simulator_rs, launched,
                        relaunches_left, config,
                    )
            if cancel.is_set():
                raise _Cancelled()

            # stage 3: result storage — compute and persist metrics
            self._transition(experiment_id, Status.EVALUATING)
            stored = [
                Conversation.from_dict(d)
                for d in self._store.list_conversations(experiment_id)
            ]
            results = compute_metrics(stored, task.metrics, catalog)
            self._store.put_results(
                experiment_id,
                {
                    "experiment_id": experiment_id,
                    "task": config.task,
                    "agent": {"name": config.agent[0], "version": config.agent[1]},
                    "simulator": {
                        "name": config.simulator[0],
                        "version": config.simulator[1],
                    },
                    "metrics": [r.to_dict() for r in results],
                },
            )

            # stage 4: environment cleaning, before the terminal state is recorded
            for rs in launched:
                self._launcher.teardown(rs)
            launched.clear()
            self._transition(experiment_id, Status.DONE)
        except _Cancelled:
            failure = "shutdown"
        except Exception as exc:  # noqa: BLE001 — nothing may escape a worker
            logger.exception("experiment %s failed", experiment_id)
            failure = f"{type(exc).__name__}: {exc}"
        finally:
            for rs in launched:
                self._launcher.teardown(rs)
            if failure is not None:
                self._transition(experiment_id, Status.FAILED, failure_reason=failure)

    def _configure(
        self,
        rs: RunningSystem,
        experiment_id: str,
        parameters: dict,
        config: ExperimentConfig,
    ) -> None:
        client = SystemClient(rs.endpoint, rs.record.role, config.limits.call_timeout)
        client.configure(experiment_id, parameters)

    def _run_one(
        self,
        agent_rs: RunningSystem,
        simulator_rs: RunningSystem,
        need: InformationNeed,
        config: ExperimentConfig,
        conversation_id: str,
    ) -> Conversation:
        sim_client = SystemClient(
            simulator_rs.endpoint, Role.SIMULATOR, config.limits.call_timeout
        )
        try:
            sim_client.set_information_need(need)
        except ProtocolError as exc:
            logger.warning("set_information_need failed for %s: %s", conversation_id, exc)
            return Conversation(
                id=conversation_id,
                need=need,
                utterances=[],
                termination=Termination.SYSTEM_ERROR,
                agent_ref=(agent_rs.record.name, agent_rs.record.version),
                simulator_ref=(simulator_rs.record.name, simulator_rs.record.version),
            )
        return run_conversation(
            agent_rs, simulator_rs, need, config.limits, conversation_id=conversation_id
        )

    def _heal(
        self,
        experiment_id: str,
        agent_rs: RunningSystem,
        simulator_rs: RunningSystem,
        launched: list[RunningSystem],
        relaunches_left: int,
        config: ExperimentConfig,
    ) -> tuple[RunningSystem, RunningSystem, int]:
        """After a failed conversation, relaunch whichever system died.

        One relaunch per experiment; a second crash raises and fails the
        experiment (partial artifacts are retained by the caller).
        """
        for label in ("agent", "simulator"):
            rs = agent_rs if label == "agent" else simulator_rs
            try:
                await_ready(rs, HEALTH_PROBE_DEADLINE)
                continue
            except NotReady:
                pass
            if relaunches_left <= 0:
                raise ExperimentError(
                    f"{rs.record.system_id} is unhealthy and the relaunch budget "
                    "is exhausted"
                )
            logger.warning(
                "relaunching %s for experiment %s", rs.record.system_id, experiment_id
            )
            self._launcher.teardown(rs)
            if rs in launched:
                launched.remove(rs)
            replacement = self._launcher.launch(
                rs.record, self._store.experiment_log_dir(experiment_id)
            )
            launched.append(replacement)
            await_ready(replacement, self.provision_timeout)
            self._configure(
                replacement, experiment_id, {"max_turns": config.limits.max_turns}, config
            )
            relaunches_left -= 1
            if label == "agent":
                agent_rs = replacement
            else:
                simulator_rs = replacement
        return agent_rs, simulator_rs, relaunches_left

    # -- shutdown ---------------------------------------------------------------

    def shutdown(self, drain: bool = False, grace: float = 30.0) -> None:
        """Stop dispatching. drain=True waits for running experiments;
        otherwise they are cancelled and marked FAILED("shutdown")."""
        with self._lock:
            self._shutting_down = True
            threads = list(self._threads.values())
            if not drain:
                for event in self._cancel.values():
                    event.set()
        deadline = time.monotonic() + grace
        for thread in threads:
            thread.join(timeout=max(0.1, deadline - time.monotonic()))


def _safe_submitter(submitter: str) -> str:
    cleaned = "".join(c for c in submitter if c.isalnum() or c in "._-")
    return cleaned or "user"


def _seconds_between(t0: str, t1: str) -> float:
    start = datetime.fromisoformat(t0.replace("Z", "+00:00"))
    end = datetime.fromisoformat(t1.replace("Z", "+00:00"))
    return (end - start).total_seconds()
