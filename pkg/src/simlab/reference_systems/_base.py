"""Shared HTTP plumbing for the reference executables.

A ProtocolSystem implements the role's endpoint behavior; serve_system wires
it to the protocol's endpoint table and runs until terminated. The listening
port comes from --port, falling back to the SIMLAB_PORT environment variable
the launcher sets."""

from __future__ import annotations

import argparse
import logging
import os

from .._httpd import HttpRequest, HttpResponse, JsonHttpServer, error_response
from ..protocol import (
    Ack,
    GetInformationNeedRequest,
    InformationNeed,
    InformationNeedResponse,
    MessageKind,
    ParseError,
    ReceiveUtteranceResponse,
    Role,
    SchemaViolation,
    Utterance,
    decode_message,
    encode_message,
)

logger = logging.getLogger(__name__)


class SystemStateError(Exception):
    """Request is valid but arrives in the wrong state (e.g. no need set)."""

    def __init__(self, message: str, status: int = 409):
        self.status = status
        super().__init__(message)


class ProtocolSystem:
    role: Role = Role.AGENT

    def configure(self, system_id: str, parameters: dict) -> None:
        pass

    def receive_utterance(self, conversation_id: str, utterance: Utterance) -> Utterance:
        raise NotImplementedError

    def set_information_need(self, need: InformationNeed) -> None:
        raise SystemStateError("this system has no information need endpoint", status=404)

    def get_information_need(self) -> InformationNeed:
        raise SystemStateError("this system has no information need endpoint", status=404)


def _dispatch(system: ProtocolSystem, request: HttpRequest) -> HttpResponse:
    if request.method != "POST":
        return error_response("all protocol endpoints use POST", 405)
    try:
        if request.path == "/configure":
            req = decode_message(MessageKind.CONFIGURE_REQUEST, request.body)
            system.configure(req.id, req.parameters)
            return _ok(MessageKind.ACK, Ack())
        if request.path == "/receive_utterance":
            req = decode_message(MessageKind.RECEIVE_UTTERANCE_REQUEST, request.body)
            reply = system.receive_utterance(req.conversation_id, req.utterance)
            return _ok(MessageKind.RECEIVE_UTTERANCE_RESPONSE, ReceiveUtteranceResponse(reply))
        if request.path == "/set_information_need" and system.role is Role.SIMULATOR:
            req = decode_message(MessageKind.SET_INFORMATION_NEED_REQUEST, request.body)
            system.set_information_need(req.information_need)
            return _ok(MessageKind.ACK, Ack())
        if request.path == "/get_information_need" and system.role is Role.SIMULATOR:
            decode_message(MessageKind.GET_INFORMATION_NEED_REQUEST, request.body or b"{}")
            need = system.get_information_need()
            return _ok(MessageKind.INFORMATION_NEED_RESPONSE, InformationNeedResponse(need))
    except (ParseError, SchemaViolation) as exc:
        return error_response(str(exc), 400)
    except SystemStateError as exc:
        return error_response(str(exc), exc.status)
    return error_response(f"no such endpoint: {request.path}", 404)


def _ok(kind: MessageKind, payload) -> HttpResponse:
    return HttpResponse(status=200, body=encode_message(kind, payload))


def serve_system(system: ProtocolSystem, port: int, host: str = "127.0.0.1") -> None:
    server = JsonHttpServer(lambda req: _dispatch(system, req), host=host, port=port)
    print(f"{type(system).__name__} listening on {host}:{server.port}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass


def resolve_port(args_port: int | None, default: int) -> int:
    if args_port is not None:
        return args_port
    env_port = os.environ.get("SIMLAB_PORT")
    if env_port:
        return int(env_port)
    return default


def base_parser(description: str) -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(description=description)
    parser.add_argument("--port", type=int, default=None, help="listening port (default: $SIMLAB_PORT)")
    parser.add_argument("--host", default="127.0.0.1")
    return parser
