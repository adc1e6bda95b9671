"""Minimal threaded JSON-over-HTTP server shared by the service and the
reference executables. Handlers receive an HttpRequest and return an
HttpResponse; unhandled exceptions become 500 {"error": ...} so a bad
request can never take a server down."""

from __future__ import annotations

import json
import logging
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable
from urllib.parse import parse_qsl, urlsplit

logger = logging.getLogger(__name__)

_CORS_HEADERS = (
    ("Access-Control-Allow-Origin", "*"),
    ("Access-Control-Allow-Methods", "GET, POST, OPTIONS"),
    ("Access-Control-Allow-Headers", "Content-Type, Authorization"),
)


@dataclass
class HttpRequest:
    method: str
    path: str
    query: dict[str, str]
    headers: dict[str, str]
    body: bytes

    def json(self):
        return json.loads(self.body.decode("utf-8")) if self.body else {}


@dataclass
class HttpResponse:
    status: int = 200
    body: bytes = b""
    content_type: str = "application/json"
    headers: tuple[tuple[str, str], ...] = field(default=())


def json_response(obj, status: int = 200) -> HttpResponse:
    return HttpResponse(status=status, body=json.dumps(obj, ensure_ascii=False).encode("utf-8"))


def error_response(message: str, status: int) -> HttpResponse:
    return json_response({"error": message}, status=status)


Handler = Callable[[HttpRequest], HttpResponse]


def _make_handler_class(handler: Handler):
    class _RequestHandler(BaseHTTPRequestHandler):
        protocol_version = "HTTP/1.1"

        def log_message(self, fmt, *args):  # default impl spams stderr
            logger.debug("%s %s", self.address_string(), fmt % args)

        def _dispatch(self):
            length = int(self.headers.get("Content-Length") or 0)
            body = self.rfile.read(length) if length else b""
            split = urlsplit(self.path)
            request = HttpRequest(
                method=self.command,
                path=split.path,
                query=dict(parse_qsl(split.query)),
                headers={k.lower(): v for k, v in self.headers.items()},
                body=body,
            )
            try:
                response = handler(request)
            except Exception as exc:
                logger.exception("handler error for %s %s", self.command, self.path)
                response = error_response(f"internal error: {exc}", 500)
            try:
                self.send_response(response.status)
                self.send_header("Content-Type", response.content_type)
                self.send_header("Content-Length", str(len(response.body)))
                for key, value in _CORS_HEADERS + tuple(response.headers):
                    self.send_header(key, value)
                self.end_headers()
                self.wfile.write(response.body)
            except (BrokenPipeError, ConnectionResetError):
                pass

        do_GET = _dispatch
        do_POST = _dispatch
        do_DELETE = _dispatch

        def do_OPTIONS(self):
            self.send_response(204)
            for key, value in _CORS_HEADERS:
                self.send_header(key, value)
            self.send_header("Content-Length", "0")
            self.end_headers()

    return _RequestHandler


class JsonHttpServer:
    """Threaded HTTP server with a start/stop lifecycle."""

    def __init__(self, handler: Handler, host: str = "127.0.0.1", port: int = 0):
        self._httpd = ThreadingHTTPServer((host, port), _make_handler_class(handler))
        self._httpd.daemon_threads = True
        self._thread: threading.Thread | None = None

    @property
    def port(self) -> int:
        return self._httpd.server_address[1]

    def start(self) -> None:
        self._thread = threading.Thread(target=self._httpd.serve_forever, daemon=True)
        self._thread.start()

    def serve_forever(self) -> None:
        self._httpd.serve_forever()

    def stop(self) -> None:
        self._httpd.shutdown()
        self._httpd.server_close()
        if self._thread is not None:
            self._thread.join(timeout=5)
            self._thread = None
