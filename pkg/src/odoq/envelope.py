"""The frame exchanged on every hop.

Layout (big-endian): version u8 | msg_type u8 | target_len u16 | target_uri |
payload_len u32 | payload.
"""

import struct
from enum import IntEnum
from urllib.parse import urlsplit

from pydantic import BaseModel, ConfigDict

__all__ = [
    "ENVELOPE_VERSION",
    "MAX_PAYLOAD_SIZE",
    "TARGET_SCHEME",
    "BadVersion",
    "Envelope",
    "EnvelopeError",
    "MalformedEnvelope",
    "MsgType",
    "PayloadTooLarge",
    "Truncated",
    "UnknownMsgType",
    "WrongType",
    "decode_envelope",
    "encode_envelope",
    "format_target_uri",
    "parse_target_uri",
    "strip_target",
]

ENVELOPE_VERSION = 0x01
MAX_PAYLOAD_SIZE = 2**20
TARGET_SCHEME = "quic"

_HEAD = struct.Struct(">BBH")
_PAYLOAD_LEN = struct.Struct(">I")


class EnvelopeError(ValueError):
    pass


class BadVersion(EnvelopeError):
    pass


class UnknownMsgType(EnvelopeError):
    pass


class Truncated(EnvelopeError):
    pass


class WrongType(EnvelopeError):
    pass


class MalformedEnvelope(EnvelopeError):
    pass


class PayloadTooLarge(EnvelopeError):
    pass


class MsgType(IntEnum):
    OBLIVIOUS_QUERY = 0x01
    OBLIVIOUS_RESPONSE = 0x02
    KEY_UPDATE = 0x03


class Envelope(BaseModel):
    model_config = ConfigDict(frozen=True)

    version: int = ENVELOPE_VERSION
    msg_type: MsgType
    target_uri: str = ""
    payload: bytes = b""


def encode_envelope(e: Envelope) -> bytes:
    if e.version != ENVELOPE_VERSION:
        raise BadVersion(f"Unsupported envelope version {e.version:#04x}")
    if e.target_uri and e.msg_type != MsgType.OBLIVIOUS_QUERY:
        raise MalformedEnvelope(f"{e.msg_type.name} must not carry a target URI")
    if len(e.payload) > MAX_PAYLOAD_SIZE:
        raise PayloadTooLarge(
            f"Payload is {len(e.payload)} bytes, max {MAX_PAYLOAD_SIZE}"
        )
    try:
        target = e.target_uri.encode("ascii")
    except UnicodeEncodeError:
        raise MalformedEnvelope("Target URI must be ASCII") from None
    if len(target) > 0xFFFF:
        raise MalformedEnvelope("Target URI too long")
    return b"".join(
        [
            _HEAD.pack(e.version, e.msg_type, len(target)),
            target,
            _PAYLOAD_LEN.pack(len(e.payload)),
            e.payload,
        ]
    )


def decode_envelope(data: bytes) -> Envelope:
    if len(data) < _HEAD.size:
        raise Truncated(f"Envelope needs {_HEAD.size} header bytes, got {len(data)}")
    version, msg_type, target_len = _HEAD.unpack_from(data)
    if version != ENVELOPE_VERSION:
        raise BadVersion(f"Unsupported envelope version {version:#04x}")
    try:
        msg_type = MsgType(msg_type)
    except ValueError:
        raise UnknownMsgType(f"Unknown message type {msg_type:#04x}") from None

    offset = _HEAD.size
    if offset + target_len + _PAYLOAD_LEN.size > len(data):
        raise Truncated("Envelope ends inside the target URI")
    target = data[offset : offset + target_len]
    offset += target_len
    (payload_len,) = _PAYLOAD_LEN.unpack_from(data, offset)
    offset += _PAYLOAD_LEN.size
    if payload_len > MAX_PAYLOAD_SIZE:
        raise PayloadTooLarge(f"Payload declares {payload_len} bytes")
    if offset + payload_len > len(data):
        raise Truncated(
            f"Payload declares {payload_len} bytes, {len(data) - offset} present"
        )
    if offset + payload_len < len(data):
        raise MalformedEnvelope("Trailing bytes after the payload")

    try:
        target_uri = target.decode("ascii")
    except UnicodeDecodeError:
        raise MalformedEnvelope("Target URI must be ASCII") from None
    if target_uri and msg_type != MsgType.OBLIVIOUS_QUERY:
        raise MalformedEnvelope(f"{msg_type.name} must not carry a target URI")
    return Envelope(
        version=version,
        msg_type=msg_type,
        target_uri=target_uri,
        payload=data[offset : offset + payload_len],
    )


def strip_target(e: Envelope) -> Envelope:
    """Drop the destination metadata, leaving the payload untouched."""
    if e.msg_type != MsgType.OBLIVIOUS_QUERY:
        raise WrongType(f"Only queries carry a target, got {e.msg_type.name}")
    return e.model_copy(update={"target_uri": ""})


def parse_target_uri(uri: str) -> tuple[str, int]:
    """Split `quic://host:port` into (host, port)."""
    try:
        parts = urlsplit(uri)
        port = parts.port
    except ValueError as e:
        raise MalformedEnvelope(f"Invalid target URI {uri!r}: {e}") from None
    if parts.scheme != TARGET_SCHEME or not parts.hostname or port is None:
        raise MalformedEnvelope(
            f"Target URI must look like {TARGET_SCHEME}://host:port, got {uri!r}"
        )
    if parts.path not in ("", "/") or parts.query or parts.fragment:
        raise MalformedEnvelope(f"Target URI must not carry a path: {uri!r}")
    return parts.hostname, port


def format_target_uri(host: str, port: int) -> str:
    if ":" in host:
        host = f"[{host}]"
    return f"{TARGET_SCHEME}://{host}:{port}"
