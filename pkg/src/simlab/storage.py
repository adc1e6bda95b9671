"""File-backed persistence for every platform artifact.

Layout under the store root:

    registry/<name>@<version>.json     system records
    tasks/<task>.json                  task manifests
    catalogs/...                       catalog files referenced by tasks
    experiments/<id>/config.json
    experiments/<id>/needs.json
    experiments/<id>/conversations/0000.json ...
    experiments/<id>/results.json
    experiments/<id>/state.json
    experiments/<id>/logs/             (private to the submitter)
    quarantine/                        raw bytes of artifacts that failed to parse

All writes go through write-temp-then-rename with an fsync, so a crash at
any point leaves each artifact either absent or complete. Reads that find
unparseable bytes move them to quarantine/ and fail closed.
"""

from __future__ import annotations

import json
import logging
import os
import re
import uuid
from pathlib import Path

from .errors import SimlabError
from .metrics import MetricResult
from .tasks import UnknownTask

logger = logging.getLogger(__name__)

_SAFE_NAME = re.compile(r"^[A-Za-z0-9][A-Za-z0-9._-]*$")


class StorageError(SimlabError):
    pass


class NotFound(StorageError):
    pass


class CorruptArtifact(StorageError):
    """An artifact failed to parse; the raw bytes were moved to quarantine/."""

    def __init__(self, relpath: str, quarantined_to: Path):
        self.relpath = relpath
        self.quarantined_to = quarantined_to
        super().__init__(f"{relpath} is corrupt; raw bytes preserved at {quarantined_to}")


def _check_name(value: str, what: str) -> str:
    if not _SAFE_NAME.match(value):
        raise StorageError(f"{what} {value!r} must match {_SAFE_NAME.pattern}")
    return value


class Store:
    """Single-writer-per-experiment, many-reader file store."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        for sub in ("registry", "tasks", "catalogs", "experiments", "quarantine"):
            (self.root / sub).mkdir(parents=True, exist_ok=True)

    def resolve_path(self, relpath: str) -> Path:
        return self.root / relpath

    # -- low-level helpers -------------------------------------------------

    def _write_json(self, relpath: str, obj) -> None:
        path = self.root / relpath
        path.parent.mkdir(parents=True, exist_ok=True)
        tmp = path.with_name(f"{path.name}.tmp-{os.getpid()}-{uuid.uuid4().hex[:8]}")
        data = json.dumps(obj, ensure_ascii=False, indent=2, sort_keys=True)
        with tmp.open("w", encoding="utf-8") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    def _read_bytes(self, relpath: str) -> bytes:
        path = self.root / relpath
        if not path.is_file():
            raise NotFound(relpath)
        return path.read_bytes()

    def _read_json(self, relpath: str):
        raw = self._read_bytes(relpath)
        try:
            return json.loads(raw.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError):
            quarantined = self._quarantine(relpath)
            raise CorruptArtifact(relpath, quarantined) from None

    def _quarantine(self, relpath: str) -> Path:
        src = self.root / relpath
        dest = self.root / "quarantine" / relpath
        dest.parent.mkdir(parents=True, exist_ok=True)
        while dest.exists():
            dest = dest.with_name(f"{dest.name}.{uuid.uuid4().hex[:6]}")
        os.replace(src, dest)
        logger.error("quarantined corrupt artifact %s -> %s", relpath, dest)
        return dest

    # -- system registry ---------------------------------------------------

    def _record_rel(self, name: str, version: str) -> str:
        _check_name(name, "system name")
        _check_name(version, "system version")
        return f"registry/{name}@{version}.json"

    def has_system_record(self, name: str, version: str) -> bool:
        return (self.root / self._record_rel(name, version)).is_file()

    def put_system_record(self, record: dict) -> None:
        self._write_json(self._record_rel(record["name"], record["version"]), record)

    def get_system_record(self, name: str, version: str) -> dict:
        return self._read_json(self._record_rel(name, version))

    def list_system_records(self) -> list[dict]:
        return [self._read_json(f"registry/{p.name}") for p in self._scan(self.root / "registry")]

    # -- tasks ---------------------------------------------------------------

    def put_task_manifest(self, manifest: dict) -> None:
        name = _check_name(manifest["name"], "task name")
        self._write_json(f"tasks/{name}.json", manifest)

    def get_task_manifest(self, name: str) -> dict:
        _check_name(name, "task name")
        return self._read_json(f"tasks/{name}.json")

    def list_task_manifests(self) -> list[str]:
        return [p.stem for p in self._scan(self.root / "tasks")]

    # -- experiment artifacts ------------------------------------------------

    def _exp_rel(self, experiment_id: str, *parts: str) -> str:
        _check_name(experiment_id, "experiment id")
        return "/".join(("experiments", experiment_id) + parts)

    def put_config(self, experiment_id: str, config: dict) -> None:
        self._write_json(self._exp_rel(experiment_id, "config.json"), config)

    def get_config(self, experiment_id: str) -> dict:
        return self._read_json(self._exp_rel(experiment_id, "config.json"))

    def put_needs(self, experiment_id: str, needs: list[dict]) -> None:
        self._write_json(self._exp_rel(experiment_id, "needs.json"), needs)

    def get_needs(self, experiment_id: str) -> list[dict]:
        return self._read_json(self._exp_rel(experiment_id, "needs.json"))

    def put_conversation(self, experiment_id: str, index: int, conversation: dict) -> None:
        self._write_json(
            self._exp_rel(experiment_id, "conversations", f"{index:04d}.json"), conversation
        )

    def get_conversation(self, experiment_id: str, index: int) -> dict:
        return self._read_json(
            self._exp_rel(experiment_id, "conversations", f"{index:04d}.json")
        )

    def list_conversations(self, experiment_id: str) -> list[dict]:
        folder = self.root / self._exp_rel(experiment_id, "conversations")
        if not folder.is_dir():
            return []
        return [
            self._read_json(self._exp_rel(experiment_id, "conversations", p.name))
            for p in sorted(folder.iterdir(), key=lambda p: p.name)
            if p.suffix == ".json"
        ]

    def put_results(self, experiment_id: str, results: dict) -> None:
        self._write_json(self._exp_rel(experiment_id, "results.json"), results)

    def get_results(self, experiment_id: str) -> dict:
        return self._read_json(self._exp_rel(experiment_id, "results.json"))

    def get_results_bytes(self, experiment_id: str) -> bytes:
        return self._read_bytes(self._exp_rel(experiment_id, "results.json"))

    def put_state(self, experiment_id: str, state: dict) -> None:
        self._write_json(self._exp_rel(experiment_id, "state.json"), state)

    def get_state(self, experiment_id: str) -> dict:
        return self._read_json(self._exp_rel(experiment_id, "state.json"))

    def experiment_log_dir(self, experiment_id: str) -> Path:
        path = self.root / self._exp_rel(experiment_id, "logs")
        path.mkdir(parents=True, exist_ok=True)
        return path

    def list_experiments(self) -> list[str]:
        """Experiment ids ordered by creation time."""
        folder = self.root / "experiments"

        def created_at(path: Path) -> float:
            config = path / "config.json"
            # config is written exactly once, at submission; the directory
            # mtime keeps moving as later artifacts land
            return config.stat().st_mtime if config.is_file() else path.stat().st_mtime

        entries = [p for p in folder.iterdir() if p.is_dir()]
        entries.sort(key=lambda p: (created_at(p), p.name))
        return [p.name for p in entries]

    @staticmethod
    def _scan(folder: Path) -> list[Path]:
        entries = [p for p in folder.iterdir() if p.suffix == ".json"]
        entries.sort(key=lambda p: (p.stat().st_mtime, p.name))
        return entries

    # -- leaderboard ---------------------------------------------------------

    def leaderboard_query(self, task: str) -> list[dict]:
        """One row per (agent, simulator) pair with >= 1 DONE experiment.

        Metrics are pooled over all of a pair's conversations: each metric's
        mean is recomputed over the concatenated per-conversation scores, so
        repeated runs pool rather than average the averages.
        """
        try:
            self.get_task_manifest(task)
        except NotFound:
            raise UnknownTask(f"unknown task {task!r}") from None
        pooled: dict[tuple, dict] = {}
        for experiment_id in self.list_experiments():
            try:
                state = self.get_state(experiment_id)
                if state.get("status") != "DONE":
                    continue
                config = self.get_config(experiment_id)
                if config.get("task") != task:
                    continue
                results = self.get_results(experiment_id)
            except (NotFound, CorruptArtifact) as exc:
                logger.warning("skipping experiment %s: %s", experiment_id, exc)
                continue
            key = (
                results["agent"]["name"],
                results["agent"]["version"],
                results["simulator"]["name"],
                results["simulator"]["version"],
            )
            row = pooled.setdefault(
                key, {"experiment_ids": [], "scores": {}}
            )
            row["experiment_ids"].append(experiment_id)
            for metric in results.get("metrics", []):
                result = MetricResult.from_dict(metric)
                row["scores"].setdefault(result.metric_name, []).extend(
                    result.per_conversation.values()
                )
        rows = []
        for key in sorted(pooled):
            agent_name, agent_version, sim_name, sim_version = key
            entry = pooled[key]
            metrics = {}
            for metric_name, values in sorted(entry["scores"].items()):
                count = len(values)
                mean = sum(values) / count if count else 0.0
                metrics[metric_name] = {"mean": mean, "count": count}
            rows.append(
                {
                    "agent": {"name": agent_name, "version": agent_version},
                    "simulator": {"name": sim_name, "version": sim_version},
                    "metrics": metrics,
                    "experiment_ids": entry["experiment_ids"],
                }
            )
        return rows
