"""Simulator nodes: thin drivers feeding frames into the sans-IO cores."""

import logging
from abc import ABC, abstractmethod
from enum import Enum

from pydantic import BaseModel

from odoq.client import (
    Answer,
    ClientSession,
    NxDomain,
    Reject,
    Retry,
    on_envelope,
    start_session,
)
from odoq.config import config_provider
from odoq.envelope import Envelope, encode_envelope, format_target_uri, strip_target
from odoq.proxy import (
    Deny,
    Drop,
    Proxy,
    ProxyConfig,
    RelayToClient,
    UnknownSlot,
)
from odoq.resolver import (
    NonceCache,
    ResolverError,
    ResolverState,
    handle_query,
    rotate_keys,
)
from odoq.seal import DEFAULT_SUITE, KeyConfig, generate_keypair
from odoq.simnet._base import Frame, MissingRole, NodeRole, TopologySpec
from odoq.simnet.sim import Sim, TimerHandle
from odoq.zone import ZoneStore

__all__ = [
    "ClientNode",
    "OutcomeKind",
    "ProxyNode",
    "ResolverNode",
    "SessionRecord",
    "SimNode",
    "build_topology",
]

logger = logging.getLogger(__name__)


class OutcomeKind(str, Enum):
    ANSWER = "Answer"
    NXDOMAIN = "NxDomain"
    REJECT = "Reject"
    RESET = "Reset"


class SessionRecord(BaseModel):
    """What one client session ended with, as seen from the client node."""

    domain: str
    started_ms: int
    finished_ms: int | None = None
    kind: OutcomeKind | None = None
    addresses: tuple[str, ...] = ()
    ttl: int = 0
    detail: str = ""
    retried: bool = False
    queries_sent: int = 0

    @property
    def pending(self) -> bool:
        return self.kind is None

    @property
    def latency_ms(self) -> int | None:
        if self.finished_ms is None:
            return None
        return self.finished_ms - self.started_ms


class SimNode(ABC):
    role: NodeRole

    def __init__(self, sim: Sim, node_id: str):
        self.sim = sim
        self.node_id = node_id

    @abstractmethod
    def on_frame(self, frame: Frame) -> None: ...


class ClientNode(SimNode):
    role = NodeRole.CLIENT

    def __init__(
        self,
        sim: Sim,
        node_id: str,
        key_config: KeyConfig,
        resolver_uri: str,
        proxy_id: str | None,
        resolver_id: str | None,
    ):
        super().__init__(sim, node_id)
        self.key_config = key_config
        self.resolver_uri = resolver_uri
        self.proxy_id = proxy_id
        self.resolver_id = resolver_id
        self.records: list[SessionRecord] = []
        self.sessions: list[ClientSession] = []
        self._direct: list[bool] = []
        self._streams: dict[tuple[str, int], int] = {}

    def resolve(
        self,
        domain: str,
        at_ms: int = 0,
        direct: bool = False,
        resolver_uri: str | None = None,
    ) -> None:
        """Schedule a resolution of `domain`, through the proxy unless `direct`."""
        hop = self.resolver_id if direct else self.proxy_id
        if hop is None:
            raise MissingRole(
                f"Client {self.node_id} has no {'resolver' if direct else 'proxy'} "
                "link"
            )
        uri = resolver_uri or self.resolver_uri
        self.sim.schedule(at_ms, lambda: self._start(domain, uri, hop, direct))

    def on_frame(self, frame: Frame) -> None:
        index = self._streams.pop((frame.src, frame.stream_id), None)
        if index is None:
            logger.debug(f"{self.node_id}: reply on unknown stream {frame.stream_id}")
            return
        record = self.records[index]
        if not record.pending:
            return
        if frame.reset:
            self._finish(index, OutcomeKind.RESET, detail=frame.detail)
            return

        session = self.sessions[index]
        outcome = on_envelope(session, frame.data, rng=self.sim.random_bytes)
        record.retried = session.retried
        record.queries_sent = session.queries_sent
        if isinstance(outcome, Retry):
            self._send(index, frame.src, outcome.envelope)
        elif isinstance(outcome, Answer):
            self._finish(
                index,
                OutcomeKind.ANSWER,
                addresses=tuple(str(addr) for addr in outcome.addresses),
                ttl=outcome.ttl,
            )
        elif isinstance(outcome, NxDomain):
            self._finish(index, OutcomeKind.NXDOMAIN)
        else:
            assert isinstance(outcome, Reject)
            self._finish(index, OutcomeKind.REJECT, detail=outcome.reason.value)

    def _start(self, domain: str, uri: str, hop: str, direct: bool) -> None:
        session, envelope = start_session(
            domain, uri, self.key_config, rng=self.sim.random_bytes
        )
        index = len(self.sessions)
        self.sessions.append(session)
        self._direct.append(direct)
        self.records.append(
            SessionRecord(domain=domain, started_ms=self.sim.now, queries_sent=1)
        )
        self._send(index, hop, envelope)

    def _send(self, index: int, hop: str, envelope: Envelope) -> None:
        if self._direct[index]:
            envelope = strip_target(envelope)
        stream_id = self.sim.open_stream(self.node_id, hop)
        self._streams[(hop, stream_id)] = index
        self.sim.send(self.node_id, hop, stream_id, encode_envelope(envelope))

    def _finish(self, index: int, kind: OutcomeKind, **fields) -> None:
        record = self.records[index]
        record.kind = kind
        record.finished_ms = self.sim.now
        for name, value in fields.items():
            setattr(record, name, value)
        logger.debug(
            f"{self.sim.now}ms {self.node_id}: {record.domain} -> {kind.value} "
            f"{record.detail}"
        )


class ProxyNode(SimNode):
    role = NodeRole.PROXY

    def __init__(
        self,
        sim: Sim,
        node_id: str,
        proxy: Proxy,
        resolvers: dict[str, str],
        timeout_ms: int | None = None,
    ):
        super().__init__(sim, node_id)
        self.proxy = proxy
        # resolver URI -> node id
        self.resolvers = resolvers
        self.timeout_ms = timeout_ms or config_provider.get().sim_exchange_timeout_ms
        self.late_replies = 0
        self._resolver_ids = set(resolvers.values())
        self._upstream: dict[tuple[str, int], int] = {}
        self._downstream: dict[int, tuple[str, int]] = {}
        self._timers: dict[int, TimerHandle] = {}

    def on_frame(self, frame: Frame) -> None:
        if frame.src in self._resolver_ids:
            self._from_resolver(frame)
        elif not frame.reset:
            self._from_client(frame)

    def _from_client(self, frame: Frame) -> None:
        decision = self.proxy.on_client_query(frame.data, client_channel=frame.src)
        if isinstance(decision, Deny):
            self.sim.reset(
                self.node_id, frame.src, frame.stream_id, detail=decision.reason.value
            )
            return

        slot_id = decision.slot.slot_id
        self._downstream[slot_id] = (frame.src, frame.stream_id)
        resolver_id = self.resolvers.get(decision.resolver_uri)
        if resolver_id is None or not self.sim.has_link(self.node_id, resolver_id):
            self._give_up(slot_id)
            return

        stream_id = self.sim.open_stream(self.node_id, resolver_id)
        upstream = (resolver_id, stream_id)
        self._upstream[upstream] = slot_id
        self.sim.send(
            self.node_id, resolver_id, stream_id, encode_envelope(decision.envelope)
        )
        self._timers[slot_id] = self.sim.schedule(
            self.timeout_ms, lambda: self._on_timeout(slot_id, upstream)
        )

    def _from_resolver(self, frame: Frame) -> None:
        slot_id = self._upstream.pop((frame.src, frame.stream_id), None)
        if slot_id is None:
            self.late_replies += 1
            logger.warning(
                f"{self.node_id}: reply from {frame.src} on stream {frame.stream_id} "
                "has no slot, dropped"
            )
            return
        self._cancel_timer(slot_id)
        if frame.reset:
            self._give_up(slot_id)
            return

        try:
            decision = self.proxy.on_resolver_reply(slot_id, frame.data)
        except UnknownSlot:
            return
        client_id, client_stream = self._downstream[slot_id]
        if isinstance(decision, Drop):
            del self._downstream[slot_id]
            self.sim.reset(self.node_id, client_id, client_stream, detail="Dropped")
            return

        assert isinstance(decision, RelayToClient)
        if decision.slot_retired:
            del self._downstream[slot_id]
        self.sim.send(
            self.node_id, client_id, client_stream, encode_envelope(decision.envelope)
        )

    def _on_timeout(self, slot_id: int, upstream: tuple[str, int]) -> None:
        self._upstream.pop(upstream, None)
        self._timers.pop(slot_id, None)
        self._give_up(slot_id)

    def _give_up(self, slot_id: int) -> None:
        try:
            deny = self.proxy.on_resolver_timeout(slot_id)
        except UnknownSlot:
            return
        client_id, client_stream = self._downstream.pop(slot_id)
        self.sim.reset(self.node_id, client_id, client_stream, detail=deny.reason.value)

    def _cancel_timer(self, slot_id: int) -> None:
        timer = self._timers.pop(slot_id, None)
        if timer is not None:
            timer.cancel()


class ResolverNode(SimNode):
    role = NodeRole.RESOLVER

    def __init__(self, sim: Sim, node_id: str, state: ResolverState, uri: str):
        super().__init__(sim, node_id)
        self.state = state
        self.uri = uri
        self.dropped = 0

    def on_frame(self, frame: Frame) -> None:
        if frame.reset:
            return
        try:
            reply = handle_query(self.state, frame.data)
        except ResolverError as e:
            # connection level error: nothing goes back
            self.dropped += 1
            logger.warning(f"{self.node_id}: {type(e).__name__}: {e}")
            return
        self.sim.send(self.node_id, frame.src, frame.stream_id, encode_envelope(reply))

    def rotate(self, at_ms: int = 0) -> None:
        self.sim.schedule(
            at_ms, lambda: rotate_keys(self.state, rng=self.sim.random_bytes)
        )


def build_topology(
    spec: TopologySpec, zone: ZoneStore | None = None, seed: int = 0
) -> Sim:
    """A ready simulator with one node per spec entry, wired as follows.

    Every resolver gets a fresh key pair (key_id 0) and `zone`. Every proxy
    allows all resolvers it has a link to. Every client targets the first
    resolver and goes through the first proxy it is linked to, the client's key
    config is that resolver's initial one.
    """
    sim = Sim(spec, seed=seed)
    zone = zone if zone is not None else ZoneStore()
    port = config_provider.get().resolver_port

    resolvers: dict[str, ResolverNode] = {}
    for node in spec.nodes:
        if node.role != NodeRole.RESOLVER:
            continue
        keypair = generate_keypair(DEFAULT_SUITE, key_id=0, rng=sim.random_bytes)
        state = ResolverState(current=keypair, zone=zone, seen_nonces=NonceCache())
        uri = format_target_uri(node.node_id, port)
        resolvers[node.node_id] = ResolverNode(sim, node.node_id, state, uri)
        sim.add_node(resolvers[node.node_id])

    proxy_ids = []
    for node in spec.nodes:
        if node.role != NodeRole.PROXY:
            continue
        linked = {
            r.uri: r.node_id
            for r in resolvers.values()
            if sim.has_link(node.node_id, r.node_id)
        }
        if not linked:
            raise MissingRole(f"Proxy {node.node_id} has no resolver link")
        proxy = Proxy(ProxyConfig(allowed_resolvers=frozenset(linked)))
        sim.add_node(ProxyNode(sim, node.node_id, proxy, linked))
        proxy_ids.append(node.node_id)

    for node in spec.nodes:
        if node.role != NodeRole.CLIENT:
            continue
        proxy_id = next((p for p in proxy_ids if sim.has_link(node.node_id, p)), None)
        if not resolvers:
            raise MissingRole(f"Client {node.node_id} has no resolver to query")
        resolver = next(iter(resolvers.values()))
        direct_id = (
            resolver.node_id if sim.has_link(node.node_id, resolver.node_id) else None
        )
        sim.add_node(
            ClientNode(
                sim,
                node.node_id,
                key_config=resolver.state.current.config,
                resolver_uri=resolver.uri,
                proxy_id=proxy_id,
                resolver_id=direct_id,
            )
        )

    logger.debug(
        f"Built topology: {len(spec.nodes)} nodes, {len(spec.links)} links, "
        f"seed {seed}"
    )
    return sim
