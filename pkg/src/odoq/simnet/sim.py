"""Deterministic discrete-event network.

Virtual time is integer milliseconds. A frame sent over a link arrives exactly
`latency_ms` later; nodes spend no time on processing unless their spec says so.
Events scheduled for the same instant run in scheduling order.
"""

import heapq
import itertools
import logging
import random
import typing
from collections import Counter

from odoq.simnet._base import (
    Direction,
    Frame,
    LinkSpec,
    NodeSpec,
    TamperRecord,
    TopologySpec,
    Transcript,
    TranscriptEntry,
    UnknownEndpoint,
)

if typing.TYPE_CHECKING:
    from odoq.simnet.nodes import SimNode

__all__ = ["Interceptor", "Sim", "TimerHandle"]

logger = logging.getLogger(__name__)

# Given the frame about to cross a link, returns the payloads that actually
# arrive: the original, a tampered copy, several copies, or none.
Interceptor = typing.Callable[[Frame], list[bytes]]


class TimerHandle:
    def __init__(self, due_ms: int):
        self.due_ms = due_ms
        self.cancelled = False

    def cancel(self) -> None:
        self.cancelled = True


class Sim:
    def __init__(self, topology: TopologySpec | None = None, seed: int = 0):
        self.topology = topology or TopologySpec()
        self.seed = seed
        self.rng = random.Random(seed)
        self.now = 0

        self.specs: dict[str, NodeSpec] = {n.node_id: n for n in self.topology.nodes}
        self.nodes: dict[str, "SimNode"] = {}
        self.transcripts: dict[str, Transcript] = {
            node_id: Transcript(node_id=node_id) for node_id in self.specs
        }
        self._links: dict[frozenset[str], LinkSpec] = {
            link.endpoints: link for link in self.topology.links
        }

        self._queue: list[tuple[int, int, TimerHandle, typing.Callable[[], None]]] = []
        self._seq = itertools.count()

        # keyed by (initiator, responder)
        self.establishments: Counter[tuple[str, str]] = Counter()
        self.resets: Counter[tuple[str, str]] = Counter()
        self._connected_at: dict[frozenset[str], int] = {}
        self._stream_ids: dict[tuple[str, str], itertools.count] = {}

        self.interceptors: dict[tuple[str, str], Interceptor] = {}
        self.tamper_log: list[TamperRecord] = []

    def random_bytes(self, size: int) -> bytes:
        """The seeded random source handed to keys, sessions and tampering."""
        return self.rng.randbytes(size)

    def add_node(self, node: "SimNode") -> None:
        self.nodes[node.node_id] = node

    def latency(self, a: str, b: str) -> int:
        try:
            return self._links[frozenset((a, b))].latency_ms
        except KeyError:
            raise UnknownEndpoint(f"No link between {a!r} and {b!r}") from None

    def has_link(self, a: str, b: str) -> bool:
        return frozenset((a, b)) in self._links

    def open_stream(self, src: str, dst: str) -> int:
        """Next client-initiated bidirectional stream id on the src->dst connection."""
        counter = self._stream_ids.setdefault((src, dst), itertools.count())
        return 4 * next(counter)

    def schedule(
        self, delay_ms: int, callback: typing.Callable[[], None]
    ) -> TimerHandle:
        if delay_ms < 0:
            raise ValueError(f"Cannot schedule into the past: {delay_ms}ms")
        handle = TimerHandle(self.now + delay_ms)
        heapq.heappush(self._queue, (handle.due_ms, next(self._seq), handle, callback))
        return handle

    def send(
        self, src: str, dst: str, stream_id: int, data: bytes, delay_ms: int = 0
    ) -> None:
        self._submit(Frame(src=src, dst=dst, stream_id=stream_id, data=data), delay_ms)

    def reset(
        self, src: str, dst: str, stream_id: int, detail: str = "", delay_ms: int = 0
    ) -> None:
        frame = Frame(src=src, dst=dst, stream_id=stream_id, reset=True, detail=detail)
        self._submit(frame, delay_ms)

    def run(self, until_ms: int | None = None) -> int:
        """Process events until none remain (or `until_ms`), returns the count."""
        processed = 0
        while self._queue:
            due_ms, _, handle, callback = self._queue[0]
            if until_ms is not None and due_ms > until_ms:
                break
            heapq.heappop(self._queue)
            if handle.cancelled:
                continue
            self.now = due_ms
            callback()
            processed += 1
        return processed

    @property
    def idle(self) -> bool:
        return all(handle.cancelled for _, _, handle, _ in self._queue)

    def _submit(self, frame: Frame, delay_ms: int) -> None:
        latency = self.latency(frame.src, frame.dst)
        if frame.dst not in self.nodes:
            raise UnknownEndpoint(f"Node {frame.dst!r} has no handler")
        pair = frozenset((frame.src, frame.dst))
        if pair not in self._connected_at:
            self.establishments[(frame.src, frame.dst)] += 1
            handshake_ms = 2 * latency * self.topology.handshake_rtts
            self._connected_at[pair] = self.now + delay_ms + handshake_ms
            logger.debug(
                f"{self.now}ms connection {frame.src}->{frame.dst} "
                f"(handshake {handshake_ms}ms)"
            )
        depart_ms = max(self.now + delay_ms, self._connected_at[pair])
        self.schedule(depart_ms - self.now, lambda: self._depart(frame, latency))

    def _depart(self, frame: Frame, latency: int) -> None:
        if frame.reset:
            self.resets[(frame.src, frame.dst)] += 1
            self.schedule(latency, lambda: self._arrive(frame))
            return

        self._record(frame.src, Direction.SENT, frame.dst, frame.stream_id, frame.data)
        interceptor = self.interceptors.get((frame.src, frame.dst))
        payloads = [frame.data] if interceptor is None else interceptor(frame)
        for data in payloads:
            delivered = frame.model_copy(update={"data": data})
            self.schedule(latency, lambda f=delivered: self._arrive(f))

    def _arrive(self, frame: Frame) -> None:
        if not frame.reset:
            self._record(
                frame.dst, Direction.RECEIVED, frame.src, frame.stream_id, frame.data
            )
        node = self.nodes[frame.dst]
        spec = self.specs.get(frame.dst)
        delay = spec.processing_delay_ms if spec is not None else 0
        if delay:
            self.schedule(delay, lambda: node.on_frame(frame))
        else:
            node.on_frame(frame)

    def _record(
        self,
        node_id: str,
        direction: Direction,
        peer: str,
        stream_id: int,
        data: bytes,
    ) -> None:
        transcript = self.transcripts.setdefault(node_id, Transcript(node_id=node_id))
        transcript.entries.append(
            TranscriptEntry(
                time_ms=self.now,
                direction=direction,
                peer=peer,
                stream_id=stream_id,
                data=data,
            )
        )
