"""Scenario specs and reports, plus their line-oriented `key = value` text form.

Keys may repeat (one `node`, `link`, `outcome`, ... line per item). Values that
can hold spaces are percent-encoded.
"""

import typing
from collections import Counter
from urllib.parse import quote, unquote

from pydantic import BaseModel, Field

from odoq.envelope import EnvelopeError, decode_envelope
from odoq.simnet._base import (
    Direction,
    LinkSpec,
    NodeRole,
    NodeSpec,
    SimError,
    TamperRecord,
    TopologySpec,
    Transcript,
    TranscriptEntry,
)
from odoq.simnet.nodes import OutcomeKind, SessionRecord

__all__ = [
    "AssertionResult",
    "FormatError",
    "LinkLatencies",
    "OverheadReport",
    "ScenarioReport",
    "ScenarioSpec",
    "compare_direct_vs_oblivious",
    "count_messages",
]

DEFAULT_ZONE = ("example.com A 10.0.2.5",)


class FormatError(SimError, ValueError):
    pass


class AssertionResult(BaseModel):
    name: str
    passed: bool
    detail: str = ""


class LinkLatencies(BaseModel):
    client_proxy_ms: int = Field(ge=0)
    proxy_resolver_ms: int = Field(ge=0)
    client_resolver_ms: int = Field(ge=0)
    handshake_rtts: int = Field(default=0, ge=0)


class OverheadReport(BaseModel):
    oblivious_rtt_ms: int
    direct_rtt_ms: int

    @property
    def overhead_ms(self) -> int:
        return self.oblivious_rtt_ms - self.direct_rtt_ms


def compare_direct_vs_oblivious(latencies: LinkLatencies) -> OverheadReport:
    """Round trip of one resolution through the proxy vs. straight to the resolver.

    Every new connection first spends `handshake_rtts` round trips on its link.
    """
    cold = 1 + latencies.handshake_rtts
    oblivious = latencies.client_proxy_ms + latencies.proxy_resolver_ms
    return OverheadReport(
        oblivious_rtt_ms=2 * oblivious * cold,
        direct_rtt_ms=2 * latencies.client_resolver_ms * cold,
    )


def count_messages(transcripts: typing.Mapping[str, Transcript]) -> Counter[str]:
    """Sent envelopes per `src->dst TYPE`, undecodable bytes count as UNDECODABLE."""
    counts: Counter[str] = Counter()
    for node_id, transcript in transcripts.items():
        for entry in transcript.entries:
            if entry.direction != Direction.SENT:
                continue
            try:
                kind = decode_envelope(entry.data).msg_type.name
            except EnvelopeError:
                kind = "UNDECODABLE"
            counts[f"{node_id}->{entry.peer} {kind}"] += 1
    return counts


def _parse_lines(text: str) -> list[tuple[int, str, str]]:
    lines = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise FormatError(f"line {lineno}: expected 'key = value', got {line!r}")
        lines.append((lineno, key.strip(), value.strip()))
    return lines


def _int(lineno: int, value: str) -> int:
    try:
        return int(value, 0)
    except ValueError:
        raise FormatError(f"line {lineno}: not an integer: {value!r}") from None


def _fields(lineno: int, value: str, count: int) -> list[str]:
    parts = value.split()
    if len(parts) != count:
        raise FormatError(f"line {lineno}: expected {count} fields, got {value!r}")
    return parts


def _pairs(lineno: int, value: str) -> dict[str, str]:
    pairs = {}
    for token in value.split():
        key, sep, item = token.partition("=")
        if not sep:
            raise FormatError(f"line {lineno}: expected name=value, got {token!r}")
        pairs[key] = unquote(item)
    return pairs


class ScenarioSpec(BaseModel):
    scenario: str
    seed: int = 0
    # no nodes means the default client/proxy/resolver chain
    topology: TopologySpec = Field(default_factory=TopologySpec.chain)
    zone: tuple[str, ...] = DEFAULT_ZONE
    domains: tuple[str, ...] = ()

    def to_text(self) -> str:
        lines = [
            f"scenario = {self.scenario}",
            f"seed = {self.seed}",
            f"handshake_rtts = {self.topology.handshake_rtts}",
        ]
        for node in self.topology.nodes:
            lines.append(
                f"node = {node.node_id} {node.role.value} {node.processing_delay_ms}"
            )
        for link in self.topology.links:
            lines.append(f"link = {link.a} {link.b} {link.latency_ms}")
        lines += [f"zone = {record}" for record in self.zone]
        lines += [f"domain = {domain}" for domain in self.domains]
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ScenarioSpec":
        scenario = None
        seed = 0
        handshake_rtts = 0
        nodes: list[NodeSpec] = []
        links: list[LinkSpec] = []
        zone: list[str] = []
        domains: list[str] = []
        for lineno, key, value in _parse_lines(text):
            if key == "scenario":
                scenario = value
            elif key == "seed":
                seed = _int(lineno, value)
            elif key == "handshake_rtts":
                handshake_rtts = _int(lineno, value)
            elif key == "node":
                parts = value.split()
                if len(parts) not in (2, 3):
                    raise FormatError(
                        f"line {lineno}: expected 'node = <id> <role> [delay_ms]'"
                    )
                try:
                    role = NodeRole(parts[1])
                except ValueError:
                    raise FormatError(
                        f"line {lineno}: unknown role {parts[1]!r}"
                    ) from None
                delay = _int(lineno, parts[2]) if len(parts) == 3 else 0
                nodes.append(
                    NodeSpec(node_id=parts[0], role=role, processing_delay_ms=delay)
                )
            elif key == "link":
                a, b, latency = _fields(lineno, value, 3)
                links.append(LinkSpec(a=a, b=b, latency_ms=_int(lineno, latency)))
            elif key == "zone":
                zone.append(value)
            elif key == "domain":
                domains.append(value)
            else:
                raise FormatError(f"line {lineno}: unknown key {key!r}")
        if scenario is None:
            raise FormatError("Missing 'scenario = <name>'")

        if nodes:
            topology = TopologySpec(
                nodes=tuple(nodes), links=tuple(links), handshake_rtts=handshake_rtts
            )
        else:
            topology = TopologySpec.chain(handshake_rtts=handshake_rtts)
        return cls(
            scenario=scenario,
            seed=seed,
            topology=topology,
            zone=tuple(zone) if zone else DEFAULT_ZONE,
            domains=tuple(domains),
        )


class ScenarioReport(BaseModel):
    scenario: str
    seed: int
    outcomes: list[SessionRecord] = Field(default_factory=list)
    latency_ms: int | None = None
    message_counts: dict[str, int] = Field(default_factory=dict)
    establishments: dict[str, int] = Field(default_factory=dict)
    resets: dict[str, int] = Field(default_factory=dict)
    tamper_log: list[TamperRecord] = Field(default_factory=list)
    transcripts: dict[str, Transcript] = Field(default_factory=dict)
    assertions: list[AssertionResult] = Field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(assertion.passed for assertion in self.assertions)

    def assertion(self, name: str) -> AssertionResult:
        for assertion in self.assertions:
            if assertion.name == name:
                return assertion
        raise KeyError(name)

    def to_text(self, with_transcripts: bool = True) -> str:
        latency = "none" if self.latency_ms is None else str(self.latency_ms)
        lines = [
            f"scenario = {self.scenario}",
            f"seed = {self.seed}",
            f"latency_ms = {latency}",
        ]
        for record in self.outcomes:
            lines.append(f"outcome = {_record_to_text(record)}")
        for key, count in sorted(self.message_counts.items()):
            lines.append(f"messages = {key} {count}")
        for key, count in sorted(self.establishments.items()):
            lines.append(f"establishments = {key} {count}")
        for key, count in sorted(self.resets.items()):
            lines.append(f"resets = {key} {count}")
        for tamper in self.tamper_log:
            lines.append(
                f"tamper = time_ms={tamper.time_ms} src={tamper.src} dst={tamper.dst} "
                f"action={tamper.action} offset={tamper.offset} mask={tamper.mask:#04x}"
            )
        if with_transcripts:
            for node_id, transcript in sorted(self.transcripts.items()):
                for entry in transcript.entries:
                    lines.append(
                        f"transcript = {node_id} {entry.time_ms} "
                        f"{entry.direction.value} {entry.peer} {entry.stream_id} "
                        f"{entry.data.hex() or '-'}"
                    )
        for assertion in self.assertions:
            verdict = "PASS" if assertion.passed else "FAIL"
            line = f"assert = {assertion.name} {verdict} {quote(assertion.detail)}"
            lines.append(line.rstrip())
        lines.append(f"result = {'PASS' if self.passed else 'FAIL'}")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_text(cls, text: str) -> "ScenarioReport":
        values: dict[str, typing.Any] = {
            "outcomes": [],
            "message_counts": {},
            "establishments": {},
            "resets": {},
            "tamper_log": [],
            "transcripts": {},
            "assertions": [],
        }
        for lineno, key, value in _parse_lines(text):
            if key == "scenario":
                values["scenario"] = value
            elif key == "seed":
                values["seed"] = _int(lineno, value)
            elif key == "latency_ms":
                values["latency_ms"] = None if value == "none" else _int(lineno, value)
            elif key == "outcome":
                values["outcomes"].append(_record_from_text(lineno, value))
            elif key in ("messages", "establishments", "resets"):
                *name, count = value.split()
                target = "message_counts" if key == "messages" else key
                values[target][" ".join(name)] = _int(lineno, count)
            elif key == "tamper":
                pairs = _pairs(lineno, value)
                values["tamper_log"].append(
                    TamperRecord(
                        time_ms=_int(lineno, pairs["time_ms"]),
                        src=pairs["src"],
                        dst=pairs["dst"],
                        action=pairs["action"],
                        offset=_int(lineno, pairs["offset"]),
                        mask=_int(lineno, pairs["mask"]),
                    )
                )
            elif key == "transcript":
                node_id, time_ms, direction, peer, stream_id, data = _fields(
                    lineno, value, 6
                )
                transcript = values["transcripts"].setdefault(
                    node_id, Transcript(node_id=node_id)
                )
                transcript.entries.append(
                    TranscriptEntry(
                        time_ms=_int(lineno, time_ms),
                        direction=Direction(direction),
                        peer=peer,
                        stream_id=_int(lineno, stream_id),
                        data=b"" if data == "-" else bytes.fromhex(data),
                    )
                )
            elif key == "assert":
                name, verdict, *detail = value.split(maxsplit=2)
                if verdict not in ("PASS", "FAIL"):
                    raise FormatError(f"line {lineno}: verdict must be PASS or FAIL")
                values["assertions"].append(
                    AssertionResult(
                        name=name,
                        passed=verdict == "PASS",
                        detail=unquote(detail[0]) if detail else "",
                    )
                )
            elif key == "result":
                continue
            else:
                raise FormatError(f"line {lineno}: unknown key {key!r}")
        if "scenario" not in values or "seed" not in values:
            raise FormatError("Report needs 'scenario' and 'seed' lines")
        return cls(**values)


def _record_to_text(record: SessionRecord) -> str:
    pairs = {
        "domain": record.domain,
        "kind": record.kind.value if record.kind else "Pending",
        "addresses": ",".join(record.addresses),
        "ttl": record.ttl,
        "started_ms": record.started_ms,
        "finished_ms": "" if record.finished_ms is None else record.finished_ms,
        "retried": str(record.retried).lower(),
        "queries_sent": record.queries_sent,
        "detail": record.detail,
    }
    return " ".join(f"{key}={quote(str(value))}" for key, value in pairs.items())


def _record_from_text(lineno: int, value: str) -> SessionRecord:
    pairs = _pairs(lineno, value)
    try:
        return SessionRecord(
            domain=pairs["domain"],
            kind=None if pairs["kind"] == "Pending" else OutcomeKind(pairs["kind"]),
            addresses=tuple(filter(None, pairs["addresses"].split(","))),
            ttl=int(pairs["ttl"]),
            started_ms=int(pairs["started_ms"]),
            finished_ms=int(pairs["finished_ms"]) if pairs["finished_ms"] else None,
            retried=pairs["retried"] == "true",
            queries_sent=int(pairs["queries_sent"]),
            detail=pairs["detail"],
        )
    except (KeyError, ValueError) as e:
        raise FormatError(f"line {lineno}: bad outcome ({e})") from None
