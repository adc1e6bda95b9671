"""Wire protocol between the orchestrator and running systems.

Every system, agent or simulator, is an HTTP server exposing a small set of
POST endpoints: /configure and /receive_utterance for both roles, plus
/set_information_need and /get_information_need for simulators. Bodies are
UTF-8 JSON with fixed field names. This module owns the message types, their
schemas (encode_message/decode_message), the endpoint tables per role, and
the client the orchestrator uses to drive a running system.

Conversation termination is signaled in-band: an utterance whose metadata
carries ``"stop": true`` ends the conversation, and such an utterance may
have empty text. ``"start": true`` marks the synthetic utterance used to
elicit a simulator's opening line; it gets the same empty-text exemption.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import datetime
from enum import Enum
from typing import Any, Callable

import requests

from .errors import SimlabError

DEFAULT_CALL_TIMEOUT = 30.0

#: Metadata keys with reserved meaning; both must be booleans when present.
RESERVED_METADATA_FLAGS = ("stop", "start")


class Role(str, Enum):
    AGENT = "AGENT"
    SIMULATOR = "SIMULATOR"


class ProtocolError(SimlabError):
    """Base for everything that can go wrong on the wire."""


class SchemaViolation(ProtocolError):
    """Well-formed message with the wrong shape; carries the offending path."""

    def __init__(self, path: str, message: str):
        self.path = path
        super().__init__(f"{path}: {message}")


class ParseError(ProtocolError):
    """Bytes that are not a well-formed message at all."""


class Unreachable(ProtocolError):
    """The target endpoint could not be connected to."""


class RemoteError(ProtocolError):
    """Non-success HTTP status from a system; the response body is retained."""

    def __init__(self, status: int, body: bytes):
        self.status = status
        self.body = body
        super().__init__(f"remote returned status {status}: {body[:200]!r}")


class Timeout(ProtocolError):
    """The per-call deadline elapsed."""


class ProtocolViolation(ProtocolError):
    """A 2xx response that does not honor the protocol (bad schema or role)."""


class RoleViolation(ProtocolError):
    """A simulator-only endpoint was invoked against an agent record."""


# ---------------------------------------------------------------------------
# Message types


@dataclass(frozen=True)
class Utterance:
    """One message in a conversation.

    ``timestamp`` is assigned by the orchestrator when the utterance is
    received; it never travels on the wire.
    """

    participant: Role
    text: str
    metadata: dict[str, Any] = field(default_factory=dict)
    timestamp: datetime | None = None

    @property
    def is_stop(self) -> bool:
        return self.metadata.get("stop") is True


@dataclass(frozen=True)
class InformationNeed:
    """A simulated user's goal: item constraints plus attributes to learn.

    ``constraints`` maps attribute name to the list of accepted values;
    ``requested`` lists the attributes the user wants to find out;
    ``fulfilled`` is simulator-side bookkeeping of answered attributes and
    its keys are always a subset of ``requested``.
    """

    constraints: dict[str, list] = field(default_factory=dict)
    requested: list[str] = field(default_factory=list)
    fulfilled: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class ConfigureRequest:
    id: str
    parameters: dict[str, Any] = field(default_factory=dict)


@dataclass(frozen=True)
class Ack:
    status: str = "ok"


@dataclass(frozen=True)
class ReceiveUtteranceRequest:
    conversation_id: str
    utterance: Utterance


@dataclass(frozen=True)
class ReceiveUtteranceResponse:
    utterance: Utterance


@dataclass(frozen=True)
class SetInformationNeedRequest:
    information_need: InformationNeed


@dataclass(frozen=True)
class GetInformationNeedRequest:
    pass


@dataclass(frozen=True)
class InformationNeedResponse:
    information_need: InformationNeed


@dataclass(frozen=True)
class ErrorMessage:
    error: str


class MessageKind(str, Enum):
    UTTERANCE = "utterance"
    CONFIGURE_REQUEST = "configure_request"
    ACK = "ack"
    RECEIVE_UTTERANCE_REQUEST = "receive_utterance_request"
    RECEIVE_UTTERANCE_RESPONSE = "receive_utterance_response"
    SET_INFORMATION_NEED_REQUEST = "set_information_need_request"
    GET_INFORMATION_NEED_REQUEST = "get_information_need_request"
    INFORMATION_NEED_RESPONSE = "information_need_response"
    ERROR = "error"


# ---------------------------------------------------------------------------
# Schema validation (shared by encode and decode)

_SCALARS = (str, int, float, bool)


def _is_scalar(value: Any) -> bool:
    return value is None or isinstance(value, _SCALARS)


def _join(path: str, key: str) -> str:
    return f"{path}.{key}" if path else key


def _require(obj: dict, key: str, path: str) -> Any:
    if key not in obj:
        raise SchemaViolation(_join(path, key), "missing required field")
    return obj[key]


def _require_str(obj: dict, key: str, path: str) -> str:
    value = _require(obj, key, path)
    if not isinstance(value, str):
        raise SchemaViolation(_join(path, key), "must be a string")
    return value


def _require_object(obj: dict, key: str, path: str) -> dict:
    value = _require(obj, key, path)
    if not isinstance(value, dict):
        raise SchemaViolation(_join(path, key), "must be an object")
    return value


def _check_metadata(meta: Any, path: str) -> None:
    if not isinstance(meta, dict):
        raise SchemaViolation(path, "must be an object")
    for key, value in meta.items():
        if not isinstance(key, str):
            raise SchemaViolation(path, "keys must be strings")
        if key in RESERVED_METADATA_FLAGS:
            if not isinstance(value, bool):
                raise SchemaViolation(_join(path, key), "must be a boolean")
        elif not _is_scalar(value) and not (
            isinstance(value, list) and all(_is_scalar(v) for v in value)
        ):
            raise SchemaViolation(
                _join(path, key), "must be a scalar or a list of scalars"
            )


def _check_utterance(obj: Any, path: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaViolation(path or "$", "must be an object")
    participant = _require(obj, "participant", path)
    if participant not in (Role.AGENT.value, Role.SIMULATOR.value):
        raise SchemaViolation(
            _join(path, "participant"), "must be 'AGENT' or 'SIMULATOR'"
        )
    text = _require(obj, "text", path)
    if not isinstance(text, str):
        raise SchemaViolation(_join(path, "text"), "must be a string")
    meta = _require(obj, "metadata", path)
    _check_metadata(meta, _join(path, "metadata"))
    exempt = meta.get("stop") is True or meta.get("start") is True
    if text == "" and not exempt:
        raise SchemaViolation(
            _join(path, "text"), "must be non-empty unless 'stop' or 'start' is true"
        )


def _check_need(obj: Any, path: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaViolation(path or "$", "must be an object")
    constraints = _require_object(obj, "constraints", path)
    cpath = _join(path, "constraints")
    for attr, values in constraints.items():
        if not isinstance(values, list) or not values:
            raise SchemaViolation(
                _join(cpath, attr), "must be a non-empty list of accepted values"
            )
        if not all(_is_scalar(v) for v in values):
            raise SchemaViolation(_join(cpath, attr), "values must be scalars")
    requested = _require(obj, "requested", path)
    if not isinstance(requested, list) or not all(
        isinstance(a, str) for a in requested
    ):
        raise SchemaViolation(_join(path, "requested"), "must be a list of strings")
    fulfilled = obj.get("fulfilled", {})
    if not isinstance(fulfilled, dict):
        raise SchemaViolation(_join(path, "fulfilled"), "must be an object")
    extra = set(fulfilled) - set(requested)
    if extra:
        raise SchemaViolation(
            _join(path, "fulfilled"),
            f"keys must be a subset of requested (unexpected: {sorted(extra)})",
        )


def _utterance_to_wire(u: Any, path: str) -> dict:
    if not isinstance(u, Utterance):
        raise SchemaViolation(path or "$", "must be an Utterance")
    participant = u.participant.value if isinstance(u.participant, Role) else u.participant
    return {"participant": participant, "text": u.text, "metadata": dict(u.metadata)}


def _utterance_from_wire(obj: dict) -> Utterance:
    return Utterance(
        participant=Role(obj["participant"]),
        text=obj["text"],
        metadata=dict(obj["metadata"]),
    )


def _need_to_wire(n: Any, path: str) -> dict:
    if not isinstance(n, InformationNeed):
        raise SchemaViolation(path or "$", "must be an InformationNeed")
    return {
        "constraints": {k: list(v) for k, v in n.constraints.items()},
        "requested": list(n.requested),
        "fulfilled": dict(n.fulfilled),
    }


def _need_from_wire(obj: dict) -> InformationNeed:
    return InformationNeed(
        constraints={k: list(v) for k, v in obj["constraints"].items()},
        requested=list(obj["requested"]),
        fulfilled=dict(obj.get("fulfilled", {})),
    )


@dataclass(frozen=True)
class _KindSpec:
    payload_type: type
    validate: Callable[[Any, str], None]
    to_wire: Callable[[Any], dict]
    from_wire: Callable[[dict], Any]


def _configure_validate(obj: Any, path: str) -> None:
    _require_str(obj, "id", path)
    _require_object(obj, "parameters", path)


def _ack_validate(obj: Any, path: str) -> None:
    _require_str(obj, "status", path)


def _recv_req_validate(obj: Any, path: str) -> None:
    _require_str(obj, "conversation_id", path)
    _check_utterance(_require(obj, "utterance", path), _join(path, "utterance"))


def _recv_resp_validate(obj: Any, path: str) -> None:
    _check_utterance(_require(obj, "utterance", path), _join(path, "utterance"))


def _need_body_validate(obj: Any, path: str) -> None:
    _check_need(_require(obj, "information_need", path), _join(path, "information_need"))


def _empty_validate(obj: Any, path: str) -> None:
    if not isinstance(obj, dict):
        raise SchemaViolation(path or "$", "must be an object")


def _error_validate(obj: Any, path: str) -> None:
    _require_str(obj, "error", path)


_KINDS: dict[MessageKind, _KindSpec] = {
    MessageKind.UTTERANCE: _KindSpec(
        Utterance,
        _check_utterance,
        lambda p: _utterance_to_wire(p, ""),
        _utterance_from_wire,
    ),
    MessageKind.CONFIGURE_REQUEST: _KindSpec(
        ConfigureRequest,
        _configure_validate,
        lambda p: {"id": p.id, "parameters": dict(p.parameters)},
        lambda o: ConfigureRequest(id=o["id"], parameters=dict(o["parameters"])),
    ),
    MessageKind.ACK: _KindSpec(
        Ack,
        _ack_validate,
        lambda p: {"status": p.status},
        lambda o: Ack(status=o["status"]),
    ),
    MessageKind.RECEIVE_UTTERANCE_REQUEST: _KindSpec(
        ReceiveUtteranceRequest,
        _recv_req_validate,
        lambda p: {
            "conversation_id": p.conversation_id,
            "utterance": _utterance_to_wire(p.utterance, "utterance"),
        },
        lambda o: ReceiveUtteranceRequest(
            conversation_id=o["conversation_id"],
            utterance=_utterance_from_wire(o["utterance"]),
        ),
    ),
    MessageKind.RECEIVE_UTTERANCE_RESPONSE: _KindSpec(
        ReceiveUtteranceResponse,
        _recv_resp_validate,
        lambda p: {"utterance": _utterance_to_wire(p.utterance, "utterance")},
        lambda o: ReceiveUtteranceResponse(_utterance_from_wire(o["utterance"])),
    ),
    MessageKind.SET_INFORMATION_NEED_REQUEST: _KindSpec(
        SetInformationNeedRequest,
        _need_body_validate,
        lambda p: {"information_need": _need_to_wire(p.information_need, "information_need")},
        lambda o: SetInformationNeedRequest(_need_from_wire(o["information_need"])),
    ),
    MessageKind.GET_INFORMATION_NEED_REQUEST: _KindSpec(
        GetInformationNeedRequest,
        _empty_validate,
        lambda p: {},
        lambda o: GetInformationNeedRequest(),
    ),
    MessageKind.INFORMATION_NEED_RESPONSE: _KindSpec(
        InformationNeedResponse,
        _need_body_validate,
        lambda p: {"information_need": _need_to_wire(p.information_need, "information_need")},
        lambda o: InformationNeedResponse(_need_from_wire(o["information_need"])),
    ),
    MessageKind.ERROR: _KindSpec(
        ErrorMessage,
        _error_validate,
        lambda p: {"error": p.error},
        lambda o: ErrorMessage(error=o["error"]),
    ),
}


def encode_message(kind: MessageKind, payload: Any) -> bytes:
    """Serialize ``payload`` as the canonical UTF-8 wire form for ``kind``.

    Raises SchemaViolation (with the offending path) if the payload does not
    satisfy the kind's schema. decode_message(kind, encode_message(kind, x))
    always returns a value equal to x.
    """
    spec = _KINDS[MessageKind(kind)]
    if not isinstance(payload, spec.payload_type):
        raise SchemaViolation(
            "$", f"expected {spec.payload_type.__name__}, got {type(payload).__name__}"
        )
    wire = spec.to_wire(payload)
    spec.validate(wire, "")
    return json.dumps(
        wire, ensure_ascii=False, sort_keys=True, separators=(",", ":")
    ).encode("utf-8")


def decode_message(kind: MessageKind, data: bytes | str) -> Any:
    """Parse wire bytes into the typed payload for ``kind``.

    Never raises anything but ParseError (not well-formed) or SchemaViolation
    (well-formed, wrong shape), whatever the input bytes.
    """
    spec = _KINDS[MessageKind(kind)]
    if isinstance(data, str):
        data = data.encode("utf-8")
    try:
        text = bytes(data).decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ParseError(f"not valid UTF-8: {exc}") from exc
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise SchemaViolation("$", "top-level value must be an object")
    spec.validate(obj, "")
    return spec.from_wire(obj)


# ---------------------------------------------------------------------------
# Endpoint tables


@dataclass(frozen=True)
class Endpoint:
    path: str
    required: bool = True


AGENT_ENDPOINTS: frozenset[Endpoint] = frozenset(
    {Endpoint("/configure"), Endpoint("/receive_utterance")}
)
SIMULATOR_ENDPOINTS: frozenset[Endpoint] = AGENT_ENDPOINTS | {
    Endpoint("/set_information_need"),
    Endpoint("/get_information_need"),
}


def endpoint_table(role: Role) -> frozenset[Endpoint]:
    """Endpoints a system of ``role`` must serve; all are invoked with POST."""
    return SIMULATOR_ENDPOINTS if role is Role.SIMULATOR else AGENT_ENDPOINTS


# ---------------------------------------------------------------------------
# Client


@dataclass(frozen=True)
class SystemClient:
    """HTTP client for one running system.

    Stateless and safe to use from multiple workers concurrently; every call
    either returns a schema-valid value or raises one of the declared
    protocol errors. ``endpoint`` is "host:port" (scheme optional); ``role``
    is the callee's role and gates the simulator-only endpoints.
    """

    endpoint: str
    role: Role
    timeout: float = DEFAULT_CALL_TIMEOUT

    def _url(self, path: str) -> str:
        base = self.endpoint
        if not base.startswith(("http://", "https://")):
            base = f"http://{base}"
        return base.rstrip("/") + path

    def _post(self, path: str, body: bytes) -> bytes:
        try:
            resp = requests.post(
                self._url(path),
                data=body,
                headers={"Content-Type": "application/json"},
                timeout=self.timeout,
            )
        except requests.exceptions.ConnectTimeout as exc:
            raise Unreachable(f"connect to {self.endpoint} timed out") from exc
        except requests.exceptions.Timeout as exc:
            raise Timeout(f"call to {self.endpoint}{path} timed out") from exc
        except requests.exceptions.ConnectionError as exc:
            raise Unreachable(f"cannot connect to {self.endpoint}: {exc}") from exc
        if not 200 <= resp.status_code < 300:
            raise RemoteError(resp.status_code, resp.content)
        return resp.content

    def configure(self, system_id: str, parameters: dict | None = None) -> Ack:
        """POST /configure. Idempotent for identical arguments."""
        body = encode_message(
            MessageKind.CONFIGURE_REQUEST,
            ConfigureRequest(id=system_id, parameters=parameters or {}),
        )
        self._post("/configure", body)
        return Ack()

    def receive_utterance(self, conversation_id: str, utterance: Utterance) -> Utterance:
        """POST /receive_utterance; the reply's participant must equal our role."""
        body = encode_message(
            MessageKind.RECEIVE_UTTERANCE_REQUEST,
            ReceiveUtteranceRequest(conversation_id=conversation_id, utterance=utterance),
        )
        raw = self._post("/receive_utterance", body)
        try:
            resp = decode_message(MessageKind.RECEIVE_UTTERANCE_RESPONSE, raw)
        except (ParseError, SchemaViolation) as exc:
            raise ProtocolViolation(f"invalid response body: {exc}") from exc
        reply = resp.utterance
        if reply.participant is not self.role:
            raise ProtocolViolation(
                f"response participant {reply.participant.value} does not match "
                f"callee role {self.role.value}"
            )
        return reply

    def set_information_need(self, need: InformationNeed) -> Ack:
        """POST /set_information_need (simulators only)."""
        if self.role is not Role.SIMULATOR:
            raise RoleViolation("set_information_need is only valid for simulators")
        body = encode_message(
            MessageKind.SET_INFORMATION_NEED_REQUEST, SetInformationNeedRequest(need)
        )
        self._post("/set_information_need", body)
        return Ack()

    def get_information_need(self) -> InformationNeed:
        """POST /get_information_need (simulators only)."""
        if self.role is not Role.SIMULATOR:
            raise RoleViolation("get_information_need is only valid for simulators")
        raw = self._post(
            "/get_information_need",
            encode_message(MessageKind.GET_INFORMATION_NEED_REQUEST, GetInformationNeedRequest()),
        )
        try:
            resp = decode_message(MessageKind.INFORMATION_NEED_RESPONSE, raw)
        except (ParseError, SchemaViolation) as exc:
            raise ProtocolViolation(f"invalid response body: {exc}") from exc
        return resp.information_need


def call_configure(
    endpoint: str,
    system_id: str,
    parameters: dict | None = None,
    timeout: float = DEFAULT_CALL_TIMEOUT,
) -> Ack:
    return SystemClient(endpoint, Role.AGENT, timeout).configure(system_id, parameters)


def call_receive_utterance(
    endpoint: str,
    role: Role,
    conversation_id: str,
    utterance: Utterance,
    timeout: float = DEFAULT_CALL_TIMEOUT,
) -> Utterance:
    return SystemClient(endpoint, role, timeout).receive_utterance(conversation_id, utterance)


def call_set_information_need(
    endpoint: str, role: Role, need: InformationNeed, timeout: float = DEFAULT_CALL_TIMEOUT
) -> Ack:
    return SystemClient(endpoint, role, timeout).set_information_need(need)


def call_get_information_need(
    endpoint: str, role: Role, timeout: float = DEFAULT_CALL_TIMEOUT
) -> InformationNeed:
    return SystemClient(endpoint, role, timeout).get_information_need()
