"""Wire protocol v1: JSON text frames plus 16-byte-headed binary frames.

Text frames are canonical JSON (sorted keys, no whitespace) validated
against schema.json. Binary frames carry image payloads both ways (server
preview frames; client style-image uploads):

    magic    4 bytes  b"EAIM"
    sequence u32 LE
    width    u16 LE
    height   u16 LE
    encoding u16 LE   0 = raw RGB8 (width*height*3 bytes), 1 = PNG
    reserved u16 LE   zero

decode_message() never raises anything but ProtocolError on garbage input.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from importlib import resources

import jsonschema

from ..errors import ProtocolError

PROTOCOL_VERSION = 1
FRAME_MAGIC = b"EAIM"
FRAME_HEADER = struct.Struct("<4sIHHHH")
ENCODING_RAW = 0
ENCODING_PNG = 1
ENCODING_NAMES = {ENCODING_RAW: "raw", ENCODING_PNG: "png"}

CLIENT_TYPES = ("hello", "camera_update", "set_weights", "train_control",
                "render_request")
SERVER_TYPES = ("ack", "status", "error")


def _load_schema():
    with resources.files("eastsplat.server").joinpath("schema.json").open("rb") as fh:
        return json.load(fh)


_SCHEMA = _load_schema()
_VALIDATORS = {
    name: jsonschema.Draft202012Validator(
        {"$defs": _SCHEMA["$defs"], "$ref": f"#/$defs/{name}"})
    for name in CLIENT_TYPES + SERVER_TYPES
}


@dataclass
class ControlMessage:
    """Client -> server command (text frame)."""

    type: str
    payload: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {"type": self.type, **self.payload}


@dataclass
class ServerEvent:
    """Server -> client event (text frame)."""

    type: str
    payload: dict = field(default_factory=dict)

    def to_obj(self) -> dict:
        return {"type": self.type, **self.payload}


@dataclass
class BinaryFrame:
    """Image-bearing frame; a server preview or a client style upload."""

    sequence: int
    width: int
    height: int
    encoding: int
    payload: bytes

    def encoding_name(self) -> str:
        return ENCODING_NAMES[self.encoding]


def ack(of: str, **extra) -> ServerEvent:
    return ServerEvent("ack", {"of": of, **extra})


def error_event(code: str, message: str) -> ServerEvent:
    return ServerEvent("error", {"code": code, "message": message})


def encode_message(msg) -> bytes:
    """Canonical bytes for any message object."""
    if isinstance(msg, BinaryFrame):
        if msg.encoding not in ENCODING_NAMES:
            raise ProtocolError(f"unknown binary encoding {msg.encoding}")
        header = FRAME_HEADER.pack(FRAME_MAGIC, msg.sequence & 0xFFFFFFFF,
                                   msg.width, msg.height, msg.encoding, 0)
        return header + msg.payload
    if isinstance(msg, (ControlMessage, ServerEvent)):
        obj = msg.to_obj()
        _validate(obj)
        return json.dumps(obj, sort_keys=True, separators=(",", ":")).encode("utf-8")
    raise ProtocolError(f"cannot encode object of type {type(msg).__name__}")


def _validate(obj: dict) -> str:
    mtype = obj.get("type")
    if not isinstance(mtype, str) or mtype not in _VALIDATORS:
        raise ProtocolError(f"unknown message type {mtype!r}", code="UNKNOWN_TYPE")
    validator = _VALIDATORS[mtype]
    errors = sorted(validator.iter_errors(obj), key=lambda e: list(e.absolute_path))
    if errors:
        first = errors[0]
        path = "/".join(str(p) for p in first.absolute_path) or "(root)"
        raise ProtocolError(f"field {path}: {first.message}", code="BAD_PAYLOAD")
    return mtype


def decode_message(data: bytes):
    """Bytes -> ControlMessage | ServerEvent | BinaryFrame.

    Truncated binary frames raise a framing error carrying the byte offset
    where the data ran out; malformed JSON or schema violations raise
    field-level errors. No input may raise anything else.
    """
    if isinstance(data, str):
        data = data.encode("utf-8", errors="replace")
    if not isinstance(data, (bytes, bytearray, memoryview)):
        raise ProtocolError(f"expected bytes, got {type(data).__name__}")
    data = bytes(data)

    if data[:4] == FRAME_MAGIC:
        if len(data) < FRAME_HEADER.size:
            raise ProtocolError("binary frame shorter than its 16-byte header",
                                code="FRAMING", offset=len(data))
        magic, sequence, width, height, encoding, _reserved = FRAME_HEADER.unpack_from(data)
        payload = data[FRAME_HEADER.size:]
        if encoding not in ENCODING_NAMES:
            raise ProtocolError(f"unknown binary encoding {encoding}", code="FRAMING")
        if encoding == ENCODING_RAW and len(payload) != width * height * 3:
            raise ProtocolError(
                f"raw frame payload is {len(payload)} bytes, header implies "
                f"{width * height * 3}", code="FRAMING",
                offset=FRAME_HEADER.size + len(payload))
        if width < 1 or height < 1:
            raise ProtocolError("frame dimensions must be positive", code="FRAMING")
        return BinaryFrame(sequence, width, height, encoding, payload)

    try:
        text = data.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise ProtocolError(f"text frame is not valid UTF-8: {exc}", code="FRAMING")
    try:
        obj = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ProtocolError(f"text frame is not valid JSON: {exc.msg}",
                            code="FRAMING", offset=exc.pos)
    if not isinstance(obj, dict):
        raise ProtocolError("top-level JSON value must be an object", code="FRAMING")
    mtype = _validate(obj)
    payload = {k: v for k, v in obj.items() if k != "type"}
    if mtype in CLIENT_TYPES:
        return ControlMessage(mtype, payload)
    return ServerEvent(mtype, payload)
