"""Wire protocol shared by the TCP (newline-delimited JSON) and WebSocket transports.

Every frame is one UTF-8 JSON object with a `v` schema version, a `kind`,
a per-connection strictly increasing `seq`, and a kind-specific `payload`.
Server messages answering a specific client message carry `in_reply_to`
(the client's seq) so command/reply pairing is explicit even under fan-out.
"""

from __future__ import annotations

import json

from .errors import WireError

__all__ = [
    "PROTOCOL_VERSION",
    "SERVER_KINDS",
    "CLIENT_KINDS",
    "make_message",
    "encode",
    "decode_client_line",
]

PROTOCOL_VERSION = 1

SERVER_KINDS = frozenset(
    {"state_snapshot", "tracking_sample", "annotation_event", "command_rejected", "error"}
)
CLIENT_KINDS = frozenset({"command", "annotation_event"})


def make_message(kind: str, payload: dict, seq: int, in_reply_to: int | None = None) -> dict:
    msg = {"v": PROTOCOL_VERSION, "seq": seq, "kind": kind, "payload": payload}
    if in_reply_to is not None:
        msg["in_reply_to"] = in_reply_to
    return msg


def encode(msg: dict) -> bytes:
    return (json.dumps(msg, separators=(",", ":")) + "\n").encode("utf-8")


def decode_client_line(line) -> dict:
    """Parse and validate one client frame; raises WireError with a reason."""
    if isinstance(line, bytes):
        try:
            line = line.decode("utf-8")
        except UnicodeDecodeError as e:
            raise WireError(f"frame is not valid UTF-8: {e}") from e
    try:
        msg = json.loads(line)
    except json.JSONDecodeError as e:
        raise WireError(f"malformed JSON frame: {e}") from e
    if not isinstance(msg, dict):
        raise WireError(f"frame must be a JSON object, got {type(msg).__name__}")
    if msg.get("v") != PROTOCOL_VERSION:
        raise WireError(f"unsupported protocol version {msg.get('v')!r}, expected {PROTOCOL_VERSION}")
    kind = msg.get("kind")
    if kind not in CLIENT_KINDS:
        raise WireError(f"unknown client message kind {kind!r}")
    seq = msg.get("seq")
    if not isinstance(seq, int) or seq < 0:
        raise WireError(f"client seq must be a nonnegative integer, got {seq!r}")
    payload = msg.get("payload")
    if not isinstance(payload, dict):
        raise WireError("payload must be a JSON object")
    return msg
