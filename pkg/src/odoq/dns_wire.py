"""Minimal DNS message codec: one question, A answers, RFC 1035 layout.

Encoding never compresses names. Decoding accepts compression pointers as long as
every pointer targets an offset strictly before the previous jump (which rules out
forward and cyclic pointers).
"""

import ipaddress
import logging
import struct
from enum import IntEnum
from typing import Iterable

from pydantic import BaseModel, ConfigDict, Field

__all__ = [
    "BadPointer",
    "DnsMessage",
    "DnsName",
    "DnsQuestion",
    "DnsRecord",
    "DnsWireError",
    "InvalidName",
    "Malformed",
    "Rcode",
    "RRClass",
    "RRType",
    "Truncated",
    "a_addresses",
    "decode_message",
    "encode_message",
    "make_a_response",
    "make_query",
    "make_response",
]

logger = logging.getLogger(__name__)

HEADER_SIZE = 12
MAX_LABEL_LENGTH = 63
MAX_NAME_LENGTH = 255

_HEADER = struct.Struct(">HHHHHH")
_QUESTION_TAIL = struct.Struct(">HH")
_RECORD_TAIL = struct.Struct(">HHIH")


class DnsWireError(ValueError):
    pass


class InvalidName(DnsWireError):
    pass


class Truncated(DnsWireError):
    pass


class BadPointer(DnsWireError):
    pass


class Malformed(DnsWireError):
    pass


class RRType(IntEnum):
    A = 1
    NS = 2
    CNAME = 5
    SOA = 6
    MX = 15
    TXT = 16
    AAAA = 28


class RRClass(IntEnum):
    IN = 1


class Rcode(IntEnum):
    NOERROR = 0
    FORMERR = 1
    SERVFAIL = 2
    NXDOMAIN = 3
    NOTIMP = 4
    REFUSED = 5


class DnsName(BaseModel):
    """A domain name as an ordered tuple of ASCII labels, stored case-preserving."""

    model_config = ConfigDict(frozen=True)

    labels: tuple[bytes, ...] = ()

    @classmethod
    def from_text(cls, text: str) -> "DnsName":
        """Parse presentation form, with or without the trailing dot."""
        if text in ("", "."):
            return cls()
        try:
            raw = text.removesuffix(".").encode("ascii")
        except UnicodeEncodeError:
            raise InvalidName(f"Name is not ASCII: {text!r}")
        name = cls(labels=tuple(raw.split(b".")))
        name.check()
        return name

    def check(self) -> None:
        """Raise InvalidName unless the label and length limits hold."""
        for label in self.labels:
            if not 1 <= len(label) <= MAX_LABEL_LENGTH:
                raise InvalidName(
                    f"Label length must be 1..{MAX_LABEL_LENGTH}, got {len(label)}"
                )
            if not label.isascii() or b"." in label:
                raise InvalidName(f"Label must be ASCII without dots: {label!r}")
        if self.wire_length > MAX_NAME_LENGTH:
            raise InvalidName(
                f"Encoded name is {self.wire_length} bytes, max {MAX_NAME_LENGTH}"
            )

    @property
    def wire_length(self) -> int:
        return sum(len(label) + 1 for label in self.labels) + 1

    def to_wire(self) -> bytes:
        self.check()
        return (
            b"".join(bytes([len(label)]) + label for label in self.labels) + b"\x00"
        )

    def to_text(self) -> str:
        return b".".join(self.labels).decode("ascii")

    def key(self) -> tuple[bytes, ...]:
        """Case-folded labels, for case-insensitive comparison and lookup."""
        return tuple(label.lower() for label in self.labels)

    def matches(self, other: "DnsName") -> bool:
        return self.key() == other.key()

    def __str__(self) -> str:
        return self.to_text() or "."


class DnsQuestion(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: DnsName
    qtype: int = Field(default=RRType.A, ge=0, le=0xFFFF)
    qclass: int = Field(default=RRClass.IN, ge=0, le=0xFFFF)


class DnsRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    name: DnsName
    rtype: int = Field(ge=0, le=0xFFFF)
    rclass: int = Field(default=RRClass.IN, ge=0, le=0xFFFF)
    ttl: int = Field(ge=0, le=0xFFFFFFFF)
    rdata: bytes = Field(max_length=0xFFFF)


class DnsMessage(BaseModel):
    model_config = ConfigDict(frozen=True)

    txid: int = Field(ge=0, le=0xFFFF)
    is_response: bool = False
    rcode: int = Field(default=Rcode.NOERROR, ge=0, le=0xF)
    recursion_desired: bool = True
    recursion_available: bool = False
    question: DnsQuestion
    answers: tuple[DnsRecord, ...] = ()


def encode_message(msg: DnsMessage) -> bytes:
    flags = (
        (int(msg.is_response) << 15)
        | (int(msg.recursion_desired) << 8)
        | (int(msg.recursion_available) << 7)
        | msg.rcode
    )
    parts = [
        _HEADER.pack(msg.txid, flags, 1, len(msg.answers), 0, 0),
        msg.question.name.to_wire(),
        _QUESTION_TAIL.pack(msg.question.qtype, msg.question.qclass),
    ]
    for record in msg.answers:
        parts.append(record.name.to_wire())
        parts.append(
            _RECORD_TAIL.pack(
                record.rtype, record.rclass, record.ttl, len(record.rdata)
            )
        )
        parts.append(record.rdata)
    return b"".join(parts)


def decode_message(wire: bytes) -> DnsMessage:
    if len(wire) < HEADER_SIZE:
        raise Truncated(f"Need {HEADER_SIZE} header bytes, got {len(wire)}")
    txid, flags, qdcount, ancount, _nscount, _arcount = _HEADER.unpack_from(wire)
    if qdcount != 1:
        raise Malformed(f"Expected exactly one question, got {qdcount}")

    name, offset = _decode_name(wire, HEADER_SIZE)
    if offset + _QUESTION_TAIL.size > len(wire):
        raise Truncated("Question section ends early")
    qtype, qclass = _QUESTION_TAIL.unpack_from(wire, offset)
    offset += _QUESTION_TAIL.size
    question = DnsQuestion(name=name, qtype=qtype, qclass=qclass)

    answers = []
    for _ in range(ancount):
        record, offset = _decode_record(wire, offset)
        answers.append(record)

    return DnsMessage(
        txid=txid,
        is_response=bool(flags >> 15),
        rcode=flags & 0xF,
        recursion_desired=bool((flags >> 8) & 1),
        recursion_available=bool((flags >> 7) & 1),
        question=question,
        answers=tuple(answers),
    )


def _decode_record(wire: bytes, offset: int) -> tuple[DnsRecord, int]:
    name, offset = _decode_name(wire, offset)
    if offset + _RECORD_TAIL.size > len(wire):
        raise Truncated("Answer record header ends early")
    rtype, rclass, ttl, rdlength = _RECORD_TAIL.unpack_from(wire, offset)
    offset += _RECORD_TAIL.size
    if offset + rdlength > len(wire):
        raise Truncated(f"Answer rdata declares {rdlength} bytes past the end")
    rdata = wire[offset : offset + rdlength]
    if rtype == RRType.A and rclass == RRClass.IN and rdlength != 4:
        raise Malformed(f"A record rdata must be 4 bytes, got {rdlength}")
    record = DnsRecord(name=name, rtype=rtype, rclass=rclass, ttl=ttl, rdata=rdata)
    return record, offset + rdlength


def _decode_name(wire: bytes, offset: int) -> tuple[DnsName, int]:
    labels: list[bytes] = []
    pos = offset
    end: int | None = None
    floor: int | None = None
    length = 1
    while True:
        if pos >= len(wire):
            raise Truncated(f"Name at offset {offset} runs past the end")
        length_byte = wire[pos]
        kind = length_byte & 0xC0
        if kind == 0xC0:
            if pos + 1 >= len(wire):
                raise Truncated("Compression pointer cut short")
            target = ((length_byte & 0x3F) << 8) | wire[pos + 1]
            if target >= (pos if floor is None else floor):
                raise BadPointer(f"Pointer at {pos} targets {target}")
            if end is None:
                end = pos + 2
            floor = target
            pos = target
            continue
        if kind:
            raise Malformed(f"Reserved label type {kind:#x} at offset {pos}")
        if length_byte == 0:
            if end is None:
                end = pos + 1
            break
        if pos + 1 + length_byte > len(wire):
            raise Malformed(f"Label at offset {pos} overruns the message")
        label = wire[pos + 1 : pos + 1 + length_byte]
        if not label.isascii() or b"." in label:
            raise Malformed(f"Label at offset {pos} is not a plain ASCII label")
        labels.append(label)
        length += 1 + length_byte
        if length > MAX_NAME_LENGTH:
            raise Malformed(f"Name at offset {offset} exceeds {MAX_NAME_LENGTH} bytes")
        pos += 1 + length_byte
    return DnsName(labels=tuple(labels)), end


def make_query(
    name: DnsName | str,
    txid: int,
    qtype: int = RRType.A,
    recursion_desired: bool = True,
) -> DnsMessage:
    if isinstance(name, str):
        name = DnsName.from_text(name)
    name.check()
    return DnsMessage(
        txid=txid,
        recursion_desired=recursion_desired,
        question=DnsQuestion(name=name, qtype=qtype, qclass=RRClass.IN),
    )


def make_response(
    query: DnsMessage,
    rcode: int,
    answers: Iterable[DnsRecord] = (),
) -> DnsMessage:
    return DnsMessage(
        txid=query.txid,
        is_response=True,
        rcode=rcode,
        recursion_desired=query.recursion_desired,
        recursion_available=True,
        question=query.question,
        answers=tuple(answers),
    )


def make_a_response(
    query: DnsMessage,
    addrs: Iterable[bytes | str | ipaddress.IPv4Address],
    ttl: int,
) -> DnsMessage:
    """Answer `query` with one A record per address, or NXDOMAIN when none."""
    answers = []
    for addr in addrs:
        try:
            packed = ipaddress.IPv4Address(addr).packed
        except ValueError as e:
            raise Malformed(f"Not an IPv4 address: {addr!r}") from e
        answers.append(
            DnsRecord(
                name=query.question.name,
                rtype=RRType.A,
                rclass=RRClass.IN,
                ttl=ttl,
                rdata=packed,
            )
        )
    if not answers:
        return make_response(query, Rcode.NXDOMAIN)
    return make_response(query, Rcode.NOERROR, answers)


def a_addresses(msg: DnsMessage) -> list[ipaddress.IPv4Address]:
    """The IPv4 addresses of the A answers owned by the question name."""
    return [
        ipaddress.IPv4Address(record.rdata)
        for record in msg.answers
        if record.rtype == RRType.A
        and record.rclass == RRClass.IN
        and record.name.matches(msg.question.name)
    ]
