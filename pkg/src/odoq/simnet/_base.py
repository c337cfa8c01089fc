from enum import Enum

from pydantic import BaseModel, ConfigDict, Field, model_validator

__all__ = [
    "Deadlock",
    "Direction",
    "DuplicateNode",
    "Frame",
    "LinkSpec",
    "MissingRole",
    "NodeRole",
    "NodeSpec",
    "SimError",
    "TamperRecord",
    "TopologySpec",
    "Transcript",
    "TranscriptEntry",
    "UnknownEndpoint",
    "UnknownScenario",
]


class SimError(Exception):
    pass


class DuplicateNode(SimError):
    pass


class UnknownEndpoint(SimError):
    pass


class UnknownScenario(SimError):
    pass


class MissingRole(SimError):
    pass


class Deadlock(SimError):
    pass


class NodeRole(str, Enum):
    CLIENT = "Client"
    PROXY = "Proxy"
    RESOLVER = "Resolver"


class NodeSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    node_id: str = Field(min_length=1, pattern=r"^\S+$")
    role: NodeRole
    processing_delay_ms: int = Field(default=0, ge=0)


class LinkSpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    a: str
    b: str
    latency_ms: int = Field(ge=0)

    @property
    def endpoints(self) -> frozenset[str]:
        return frozenset((self.a, self.b))


class TopologySpec(BaseModel):
    model_config = ConfigDict(frozen=True)

    nodes: tuple[NodeSpec, ...] = ()
    links: tuple[LinkSpec, ...] = ()
    # extra round trips spent on the handshake of each new connection
    handshake_rtts: int = Field(default=0, ge=0)

    @model_validator(mode="after")
    def _check_nodes(self) -> "TopologySpec":
        seen: set[str] = set()
        for node in self.nodes:
            if node.node_id in seen:
                raise DuplicateNode(node.node_id)
            seen.add(node.node_id)
        for link in self.links:
            for endpoint in (link.a, link.b):
                if endpoint not in seen:
                    raise UnknownEndpoint(
                        f"Link {link.a}<->{link.b} names unknown node {endpoint!r}"
                    )
        return self

    @classmethod
    def chain(
        cls,
        client_proxy_ms: int = 10,
        proxy_resolver_ms: int = 10,
        client_resolver_ms: int | None = 10,
        handshake_rtts: int = 0,
    ) -> "TopologySpec":
        """client, proxy and resolver, plus a direct client-resolver link unless
        `client_resolver_ms` is None."""
        links = [
            LinkSpec(a="client", b="proxy", latency_ms=client_proxy_ms),
            LinkSpec(a="proxy", b="resolver", latency_ms=proxy_resolver_ms),
        ]
        if client_resolver_ms is not None:
            links.append(
                LinkSpec(a="client", b="resolver", latency_ms=client_resolver_ms)
            )
        return cls(
            nodes=(
                NodeSpec(node_id="client", role=NodeRole.CLIENT),
                NodeSpec(node_id="proxy", role=NodeRole.PROXY),
                NodeSpec(node_id="resolver", role=NodeRole.RESOLVER),
            ),
            links=tuple(links),
            handshake_rtts=handshake_rtts,
        )


class Frame(BaseModel):
    """One unit handed to a link: the bytes of one stream, or a stream reset."""

    model_config = ConfigDict(frozen=True)

    src: str
    dst: str
    stream_id: int
    data: bytes = b""
    reset: bool = False
    detail: str = ""


class Direction(str, Enum):
    SENT = "sent"
    RECEIVED = "received"


class TranscriptEntry(BaseModel):
    model_config = ConfigDict(frozen=True)

    time_ms: int
    direction: Direction
    peer: str
    stream_id: int
    data: bytes


class Transcript(BaseModel):
    """Every byte a node put on or took off the wire, in virtual time order."""

    node_id: str
    entries: list[TranscriptEntry] = Field(default_factory=list)

    def observed_bytes(self) -> bytes:
        return b"".join(entry.data for entry in self.entries)

    def peers(self) -> set[str]:
        return {entry.peer for entry in self.entries}


class TamperRecord(BaseModel):
    model_config = ConfigDict(frozen=True)

    time_ms: int
    src: str
    dst: str
    action: str
    offset: int = -1
    mask: int = 0
