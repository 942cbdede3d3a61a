"""Line-delimited JSON codec for the client/server message exchange.

Every message is one envelope per line: ``{"msg_type": ..., "seq": ...,
"payload": {...}}`` with that top-level field order fixed and all object
keys inside the payload sorted, so encoding is canonical and injective.
The same line encoding is reused for trace events and commit logs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Iterable, Sequence

from .store import ContextValue, canonicalize_value, copy_value

PLAN_REQUEST = "plan_request"
TOOL_DECLARATION = "tool_declaration"
CONTEXT_SEED = "context_seed"
CONTEXT_WRITE = "context_write"
CONTEXT_READ = "context_read"
COMPLETION_SIGNAL = "completion_signal"
SUMMARY_REQUEST = "summary_request"
FINAL_RESPONSE = "final_response"

MESSAGE_TYPES = (
    PLAN_REQUEST,
    TOOL_DECLARATION,
    CONTEXT_SEED,
    CONTEXT_WRITE,
    CONTEXT_READ,
    COMPLETION_SIGNAL,
    SUMMARY_REQUEST,
    FINAL_RESPONSE,
)

# Position of each message type in the happy-path exchange. Ranks must be
# non-decreasing along a valid sequence; equal ranks carry no mutual order
# (concurrent server reads/writes).
STEP_RANK = {
    PLAN_REQUEST: 1,
    TOOL_DECLARATION: 2,
    CONTEXT_SEED: 3,
    CONTEXT_READ: 5,
    CONTEXT_WRITE: 5,
    COMPLETION_SIGNAL: 7,
    SUMMARY_REQUEST: 8,
    FINAL_RESPONSE: 9,
}


class ProtocolError(Exception):
    pass


class MalformedSyntaxError(ProtocolError):
    """The line is not a JSON object of the envelope shape."""


class UnknownMessageTypeError(ProtocolError):
    def __init__(self, msg_type):
        super().__init__(f"unknown msg_type: {msg_type!r}")
        self.msg_type = msg_type


class SchemaViolationError(ProtocolError):
    """A required payload field is missing, ill-typed, or unexpected."""

    def __init__(self, field: str, reason: str):
        super().__init__(f"field {field!r}: {reason}")
        self.field = field
        self.reason = reason


class SequenceError(ProtocolError):
    """A message appears out of happy-path order; ``at`` is its 1-based index."""

    def __init__(self, at: int, reason: str):
        super().__init__(f"message {at} out of order: {reason}")
        self.at = at
        self.reason = reason


@dataclass(frozen=True)
class Envelope:
    msg_type: str
    seq: int
    payload: dict

    def __post_init__(self) -> None:
        # Payloads are canonicalized copies, so envelopes stay value-like.
        object.__setattr__(self, "payload", canonicalize_value(copy_value(self.payload)))


def _is_text(v) -> bool:
    return isinstance(v, str)


def _is_object(v) -> bool:
    return isinstance(v, dict)


def _is_list(v) -> bool:
    return isinstance(v, list)


def _any_value(v) -> bool:
    return True


# msg_type -> ordered {field: (predicate, description)}
_SCHEMAS = {
    PLAN_REQUEST: {"query": (_is_object, "object")},
    TOOL_DECLARATION: {"server_id": (_is_text, "text"), "tools": (_is_list, "list")},
    CONTEXT_SEED: {"blueprint": (_is_object, "object")},
    CONTEXT_WRITE: {"key": (_is_text, "text"), "value": (_any_value, "value")},
    CONTEXT_READ: {"key": (_is_text, "text")},
    COMPLETION_SIGNAL: {"completion_key": (_is_text, "text")},
    SUMMARY_REQUEST: {"snapshot": (_is_object, "object")},
    FINAL_RESPONSE: {"text": (_is_text, "text")},
}

_TOOL_FIELDS = {"name": _is_text, "description": _is_text, "param_schema": _is_object}


def check_payload(msg_type: str, payload: dict) -> None:
    """Validate a payload against its message schema.

    Raises :class:`SchemaViolationError` naming the offending field.
    """
    schema = _SCHEMAS[msg_type]
    for name, (predicate, description) in schema.items():
        if name not in payload:
            raise SchemaViolationError(name, "missing")
        if not predicate(payload[name]):
            raise SchemaViolationError(name, f"expected {description}")
    for name in payload:
        if name not in schema:
            raise SchemaViolationError(name, "unexpected field")
    if msg_type == TOOL_DECLARATION:
        for i, tool in enumerate(payload["tools"]):
            if not isinstance(tool, dict):
                raise SchemaViolationError(f"tools[{i}]", "expected object")
            for field, predicate in _TOOL_FIELDS.items():
                if field not in tool:
                    raise SchemaViolationError(f"tools[{i}].{field}", "missing")
                if not predicate(tool[field]):
                    raise SchemaViolationError(f"tools[{i}].{field}", "ill-typed")
            for field in tool:
                if field not in _TOOL_FIELDS:
                    raise SchemaViolationError(f"tools[{i}].{field}", "unexpected field")


def make_envelope(msg_type: str, seq: int, payload: dict) -> Envelope:
    """Construct a validated envelope (the only sanctioned constructor)."""
    if msg_type not in _SCHEMAS:
        raise UnknownMessageTypeError(msg_type)
    if isinstance(seq, bool) or not isinstance(seq, int) or seq < 1:
        raise SchemaViolationError("seq", "expected integer >= 1")
    if not isinstance(payload, dict):
        raise SchemaViolationError("payload", "expected object")
    try:
        payload = copy_value(payload)
    except TypeError as exc:
        raise SchemaViolationError("payload", str(exc)) from exc
    check_payload(msg_type, payload)
    return Envelope(msg_type=msg_type, seq=seq, payload=payload)


def encode(envelope: Envelope) -> str:
    """Encode to the canonical single-line JSON form."""
    top = {
        "msg_type": envelope.msg_type,
        "seq": envelope.seq,
        "payload": canonicalize_value(envelope.payload),
    }
    line = json.dumps(top, separators=(",", ":"), allow_nan=False)
    assert "\n" not in line
    return line


def decode(line: str) -> Envelope:
    """Decode one line into a validated envelope.

    Raises :class:`MalformedSyntaxError` for non-JSON or non-envelope shapes,
    :class:`UnknownMessageTypeError` for an unrecognized msg_type, and
    :class:`SchemaViolationError` for payload schema problems.
    """
    try:
        data = json.loads(line)
    except (json.JSONDecodeError, TypeError) as exc:
        raise MalformedSyntaxError(f"not valid JSON: {exc}") from exc
    if not isinstance(data, dict):
        raise MalformedSyntaxError("envelope must be a JSON object")
    for field in ("msg_type", "seq", "payload"):
        if field not in data:
            raise SchemaViolationError(field, "missing")
    for field in data:
        if field not in ("msg_type", "seq", "payload"):
            raise SchemaViolationError(field, "unexpected field")
    if not isinstance(data["msg_type"], str):
        raise SchemaViolationError("msg_type", "expected text")
    return make_envelope(data["msg_type"], data["seq"], data["payload"])


def validate_sequence(messages: Sequence[Envelope]) -> None:
    """Check happy-path ordering: planning before seeding, seeding before any
    server write, completion before summary, summary before final response.
    Sequence numbers must be strictly increasing across the log, so any
    reordering of a recorded conversation is caught even between messages of
    the same step.

    Raises :class:`SequenceError` naming the first out-of-order message.
    """
    highest = 0
    highest_type = None
    last_seq = 0
    for index, envelope in enumerate(messages, start=1):
        rank = STEP_RANK[envelope.msg_type]
        if rank < highest:
            raise SequenceError(index, f"{envelope.msg_type} after {highest_type}")
        if envelope.seq <= last_seq:
            raise SequenceError(
                index, f"seq {envelope.seq} does not advance past {last_seq}"
            )
        last_seq = envelope.seq
        if rank > highest:
            highest = rank
            highest_type = envelope.msg_type


def encode_all(messages: Iterable[Envelope]) -> str:
    return "\n".join(encode(m) for m in messages)


def decode_all(text: str) -> list[Envelope]:
    return [decode(line) for line in text.splitlines() if line.strip()]
