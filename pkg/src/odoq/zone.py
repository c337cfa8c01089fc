"""Local zone store standing in for the root/TLD/authoritative hierarchy.

Zone file format, one record per line:

    <name> <TYPE> <value> [ttl]

`#` starts a comment. Only `A` records with a dotted-quad value are accepted.
"""

import ipaddress
import logging
from pathlib import Path

from pydantic import BaseModel, ConfigDict, Field

from odoq.config import config_provider
from odoq.dns_wire import DnsName, InvalidName, RRType

__all__ = [
    "ParseError",
    "ZoneEntry",
    "ZoneStore",
    "load_zone",
    "load_zone_file",
    "lookup",
    "lookup_entry",
]

logger = logging.getLogger(__name__)

_SUPPORTED_TYPES = {"A": RRType.A}


class ParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


class ZoneEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    rdatas: tuple[bytes, ...]
    ttl: int = Field(ge=0, lt=2**31)


class ZoneStore(BaseModel):
    """Records keyed by (lowercased labels, rtype)."""

    model_config = ConfigDict(frozen=True)

    records: dict[tuple[tuple[bytes, ...], int], ZoneEntry] = Field(
        default_factory=dict
    )

    def __len__(self) -> int:
        return len(self.records)

    def with_record(
        self, name: DnsName | str, address: str, ttl: int | None = None
    ) -> "ZoneStore":
        """A copy with one more A record, merged like a repeated zone file line."""
        if isinstance(name, str):
            name = DnsName.from_text(name)
        rdata = ipaddress.IPv4Address(address).packed
        if ttl is None:
            ttl = config_provider.get().default_ttl
        records = dict(self.records)
        _merge(records, (name.key(), RRType.A), rdata, ttl)
        return ZoneStore(records=records)


def _merge(
    records: dict[tuple[tuple[bytes, ...], int], ZoneEntry],
    key: tuple[tuple[bytes, ...], int],
    rdata: bytes,
    ttl: int,
) -> None:
    entry = records.get(key)
    if entry is None:
        records[key] = ZoneEntry(rdatas=(rdata,), ttl=ttl)
        return
    rdatas = entry.rdatas if rdata in entry.rdatas else entry.rdatas + (rdata,)
    # one RRset, one TTL: keep the smallest seen
    records[key] = ZoneEntry(rdatas=rdatas, ttl=min(entry.ttl, ttl))


def load_zone(text: str, default_ttl: int | None = None) -> ZoneStore:
    if default_ttl is None:
        default_ttl = config_provider.get().default_ttl
    records: dict[tuple[tuple[bytes, ...], int], ZoneEntry] = {}
    for lineno, raw_line in enumerate(text.splitlines(), start=1):
        line = raw_line.split("#", 1)[0].strip()
        if not line:
            continue
        fields = line.split()
        if len(fields) not in (3, 4):
            raise ParseError(
                lineno, f"expected '<name> <TYPE> <value> [ttl]', got {line!r}"
            )
        name_text, type_text, value = fields[:3]

        try:
            name = DnsName.from_text(name_text)
        except InvalidName as e:
            raise ParseError(lineno, f"invalid name {name_text!r}: {e}") from None
        rtype = _SUPPORTED_TYPES.get(type_text.upper())
        if rtype is None:
            raise ParseError(lineno, f"unsupported record type {type_text!r}")
        try:
            rdata = ipaddress.IPv4Address(value).packed
        except ValueError:
            raise ParseError(lineno, f"invalid IPv4 address {value!r}") from None

        ttl = default_ttl
        if len(fields) == 4:
            if not fields[3].isdigit() or int(fields[3]) >= 2**31:
                raise ParseError(lineno, f"invalid ttl {fields[3]!r}")
            ttl = int(fields[3])

        _merge(records, (name.key(), rtype), rdata, ttl)

    logger.debug(f"Loaded zone with {len(records)} RRsets")
    return ZoneStore(records=records)


def load_zone_file(path: Path | str, default_ttl: int | None = None) -> ZoneStore:
    return load_zone(Path(path).read_text(encoding="utf-8"), default_ttl)


def lookup_entry(
    zone: ZoneStore, name: DnsName, rtype: int = RRType.A
) -> ZoneEntry | None:
    return zone.records.get((name.key(), rtype))


def lookup(zone: ZoneStore, name: DnsName) -> list[bytes]:
    """A addresses for `name` (case-insensitive exact match), empty if unknown."""
    entry = lookup_entry(zone, name)
    return list(entry.rdatas) if entry is not None else []
