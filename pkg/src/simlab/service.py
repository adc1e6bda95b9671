"""HTTP API — the programmatic face of the platform.

Routes (bodies reuse the module schemas verbatim):

    GET  /api/health
    POST /api/systems                  register a system (bearer token)
    POST /api/experiments              submit an experiment (bearer token)
    GET  /api/experiments/{id}         status + config
    GET  /api/experiments/{id}/results raw stored results document
    GET  /api/queue                    queue/running ids + pool stats
    GET  /api/leaderboard/{task}       rows, ?sort=<metric>&order=asc|desc

Reads are public; writes require the static bearer token. Module errors map
to 400 (validation), 401 (auth), 404 (not found), 409 (duplicate). When a
ui_dir is configured, non-/api paths serve the built web client.
"""

from __future__ import annotations

import errno
import logging
import re
import secrets
import threading
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from ._httpd import HttpRequest, HttpResponse, JsonHttpServer, error_response, json_response
from .errors import SimlabError
from .experiments import (
    ExperimentConfig,
    ExperimentError,
    ExperimentManager,
    InvalidCapacity,
    RoleMismatch,
    UnknownSystem,
)
from .protocol import SchemaViolation
from .reference_systems import agent_record, simulator_record
from .runner import DuplicateVersion, InvalidLaunchSpec, Launcher, SystemRecord, SystemRegistry
from .storage import CorruptArtifact, NotFound, Store, StorageError
from .tasks import TaskRegistry, UnknownTask, movie_task

logger = logging.getLogger(__name__)

DEFAULT_PORT = 8080
DEFAULT_TASK_NAME = "movies"
BUNDLED_CATALOG = "movies.tsv"


class ServiceError(SimlabError):
    pass


class PortInUse(ServiceError):
    pass


class BadDataDir(ServiceError):
    pass


@dataclass
class ServiceConfig:
    data_dir: str | Path
    port: int = DEFAULT_PORT
    host: str = "127.0.0.1"
    max_workers: int = 2
    api_token: str = ""
    ui_dir: str | Path | None = None
    seed: bool = True


def init_data_dir(store: Store) -> None:
    """Seed a fresh data dir with the movie task, its catalog, and the
    reference system records; no-op when tasks already exist."""
    if store.list_task_manifests():
        return
    catalog_rel = f"catalogs/{BUNDLED_CATALOG}"
    catalog_path = store.resolve_path(catalog_rel)
    if not catalog_path.exists():
        bundled = resources.files("simlab.data").joinpath(BUNDLED_CATALOG)
        catalog_path.parent.mkdir(parents=True, exist_ok=True)
        catalog_path.write_bytes(bundled.read_bytes())
    registry = SystemRegistry(store)
    tasks = TaskRegistry(store)
    tasks.register(movie_task(catalog_rel, name=DEFAULT_TASK_NAME))
    for record in (
        agent_record(catalog_path, version="1.0"),
        simulator_record(version="1.0"),
        simulator_record(version="2.0", disclosure_order="reverse"),
    ):
        if not store.has_system_record(record.name, record.version):
            registry.register(record)
    logger.info("seeded data dir %s with task %r", store.root, DEFAULT_TASK_NAME)


class Service:
    """Thin HTTP façade over the registry, manager, and store."""

    def __init__(self, config: ServiceConfig):
        data_dir = Path(config.data_dir)
        if data_dir.exists() and not data_dir.is_dir():
            raise BadDataDir(f"{data_dir} exists and is not a directory")
        try:
            self.store = Store(data_dir)
        except OSError as exc:
            raise BadDataDir(f"cannot initialize {data_dir}: {exc}") from exc
        if config.seed:
            init_data_dir(self.store)
        self.registry = SystemRegistry(self.store)
        self.tasks = TaskRegistry(self.store)
        self.launcher = Launcher()
        self.manager = ExperimentManager(
            self.store, self.registry, self.tasks, self.launcher,
            capacity=config.max_workers,
        )
        self.api_token = config.api_token or secrets.token_hex(16)
        if not config.api_token:
            logger.warning("no api token configured; generated one: %s", self.api_token)
        self.ui_dir = Path(config.ui_dir).resolve() if config.ui_dir else None
        try:
            self._server = JsonHttpServer(self._handle, host=config.host, port=config.port)
        except OSError as exc:
            if exc.errno == errno.EADDRINUSE:
                raise PortInUse(f"port {config.port} is already in use") from exc
            raise
        self._stopped = threading.Event()

    @property
    def port(self) -> int:
        return self._server.port

    @property
    def url(self) -> str:
        return f"http://127.0.0.1:{self.port}"

    def start(self) -> None:
        self._server.start()

    def serve_forever(self) -> None:
        self._server.serve_forever()

    def stop(self, drain: bool = False, grace: float = 30.0) -> None:
        """Stop serving; running experiments drain or fail with "shutdown"."""
        if self._stopped.is_set():
            return
        self._stopped.set()
        self.manager.shutdown(drain=drain, grace=grace)
        self._server.stop()

    # -- routing ---------------------------------------------------------------

    def _handle(self, request: HttpRequest) -> HttpResponse:
        try:
            return self._route(request)
        except SimlabError as exc:
            return error_response(str(exc), _status_for(exc))
        except (KeyError, TypeError, ValueError) as exc:
            return error_response(f"invalid request: {exc}", 400)

    def _route(self, request: HttpRequest) -> HttpResponse:
        path, method = request.path, request.method
        if path == "/api/health" and method == "GET":
            return json_response({"status": "ok"})
        if path == "/api/systems" and method == "POST":
            self._authorize(request)
            record = SystemRecord.from_dict(request.json())
            system_id = self.registry.register(record)
            return json_response({"id": system_id}, status=201)
        if path == "/api/experiments" and method == "POST":
            self._authorize(request)
            config = ExperimentConfig.from_dict(request.json())
            experiment_id = self.manager.submit(config)
            return json_response({"experiment_id": experiment_id}, status=201)
        match = re.fullmatch(r"/api/experiments/([^/]+)/results", path)
        if match and method == "GET":
            return HttpResponse(status=200, body=self.store.get_results_bytes(match.group(1)))
        match = re.fullmatch(r"/api/experiments/([^/]+)", path)
        if match and method == "GET":
            return json_response(self._experiment_doc(match.group(1)))
        if path == "/api/queue" and method == "GET":
            snapshot = self.manager.queue_snapshot()
            snapshot["stats"] = self.manager.stats()
            return json_response(snapshot)
        match = re.fullmatch(r"/api/leaderboard/([^/]+)", path)
        if match and method == "GET":
            return json_response(self._leaderboard(match.group(1), request.query))
        if method == "GET" and not path.startswith("/api/"):
            return self._static(path)
        return error_response(f"no such route: {method} {path}", 404)

    def _authorize(self, request: HttpRequest) -> None:
        header = request.headers.get("authorization", "")
        if header != f"Bearer {self.api_token}":
            raise _Unauthorized("missing or invalid bearer token")

    def _experiment_doc(self, experiment_id: str) -> dict:
        state = self.manager.state(experiment_id)
        doc = {"experiment_id": experiment_id, **state.to_dict()}
        doc["config"] = self.store.get_config(experiment_id)
        return doc

    def _leaderboard(self, task: str, query: dict[str, str]) -> dict:
        rows = self.store.leaderboard_query(task)
        sort = query.get("sort")
        order = query.get("order", "desc")
        if order not in ("asc", "desc"):
            raise ValueError("order must be 'asc' or 'desc'")
        rows.sort(key=lambda r: (r["agent"]["name"], r["simulator"]["name"]))
        if sort:
            rows.sort(
                key=lambda r: r["metrics"].get(sort, {}).get("mean", 0.0),
                reverse=(order == "desc"),
            )
        return {"task": task, "rows": rows}

    # -- static UI ---------------------------------------------------------------

    _CONTENT_TYPES = {
        ".html": "text/html; charset=utf-8",
        ".js": "text/javascript",
        ".css": "text/css",
        ".map": "application/json",
        ".svg": "image/svg+xml",
        ".ico": "image/x-icon",
        ".json": "application/json",
        ".png": "image/png",
    }

    def _static(self, path: str) -> HttpResponse:
        if self.ui_dir is None:
            return json_response(
                {"service": "simlab", "api": "/api", "health": "/api/health"}
            )
        candidate = (self.ui_dir / path.lstrip("/")).resolve()
        if candidate.is_dir():
            candidate = candidate / "index.html"
        if not str(candidate).startswith(str(self.ui_dir)) or not candidate.is_file():
            candidate = self.ui_dir / "index.html"
            if not candidate.is_file():
                return error_response("not found", 404)
        content_type = self._CONTENT_TYPES.get(candidate.suffix, "application/octet-stream")
        return HttpResponse(status=200, body=candidate.read_bytes(), content_type=content_type)


class _Unauthorized(SimlabError):
    pass


def _status_for(exc: SimlabError) -> int:
    if isinstance(exc, _Unauthorized):
        return 401
    if isinstance(exc, NotFound):
        return 404
    if isinstance(exc, UnknownTask):
        return 404
    if isinstance(exc, DuplicateVersion):
        return 409
    if isinstance(
        exc,
        (
            SchemaViolation,
            InvalidLaunchSpec,
            UnknownSystem,
            RoleMismatch,
            InvalidCapacity,
            ExperimentError,
        ),
    ):
        return 400
    if isinstance(exc, CorruptArtifact):
        return 500
    if isinstance(exc, StorageError):
        return 400
    return 500


def serve(config: ServiceConfig) -> Service:
    """Construct and start a service; raises PortInUse / BadDataDir."""
    service = Service(config)
    service.start()
    return service
