import pydantic
import pytest

from odoq.simnet import (
    Direction,
    DuplicateNode,
    Frame,
    LinkSpec,
    MissingRole,
    NodeRole,
    NodeSpec,
    OutcomeKind,
    Sim,
    SimNode,
    TopologySpec,
    UnknownEndpoint,
    build_topology,
)
from odoq.zone import load_zone


class Recorder(SimNode):
    role = NodeRole.CLIENT

    def __init__(self, sim, node_id):
        super().__init__(sim, node_id)
        self.frames: list[tuple[int, Frame]] = []

    def on_frame(self, frame: Frame) -> None:
        self.frames.append((self.sim.now, frame))


def _pair(latency_ms=7, delay_ms=0, handshake_rtts=0) -> Sim:
    sim = Sim(
        TopologySpec(
            nodes=(
                NodeSpec(node_id="a", role=NodeRole.CLIENT),
                NodeSpec(
                    node_id="b", role=NodeRole.CLIENT, processing_delay_ms=delay_ms
                ),
            ),
            links=(LinkSpec(a="a", b="b", latency_ms=latency_ms),),
            handshake_rtts=handshake_rtts,
        )
    )
    sim.add_node(Recorder(sim, "a"))
    sim.add_node(Recorder(sim, "b"))
    return sim


def test_frame_arrives_after_link_latency():
    sim = _pair(latency_ms=7)
    sim.send("a", "b", 0, b"hello")
    sim.run()

    [(time_ms, frame)] = sim.nodes["b"].frames
    assert time_ms == 7
    assert frame.data == b"hello"
    assert sim.now == 7


def test_processing_delay():
    sim = _pair(latency_ms=7, delay_ms=3)
    sim.send("a", "b", 0, b"x")
    sim.run()
    assert sim.nodes["b"].frames[0][0] == 10


def test_handshake_delays_first_departure_only():
    sim = _pair(latency_ms=5, handshake_rtts=1)
    sim.send("a", "b", 0, b"first")
    sim.run()
    sim.send("a", "b", 4, b"second")
    sim.run()

    times = [time_ms for time_ms, _ in sim.nodes["b"].frames]
    assert times == [15, 20]
    assert sim.establishments[("a", "b")] == 1


def test_transcripts_record_both_sides():
    sim = _pair()
    sim.send("a", "b", 4, b"payload")
    sim.run()

    [sent] = sim.transcripts["a"].entries
    [received] = sim.transcripts["b"].entries
    assert (sent.direction, sent.peer, sent.time_ms) == (Direction.SENT, "b", 0)
    assert (received.direction, received.peer, received.time_ms) == (
        Direction.RECEIVED,
        "a",
        7,
    )
    assert sent.stream_id == received.stream_id == 4
    assert sim.transcripts["b"].observed_bytes() == b"payload"


def test_resets_are_counted_not_transcribed():
    sim = _pair()
    sim.reset("a", "b", 0, detail="Busy")
    sim.run()

    [(_, frame)] = sim.nodes["b"].frames
    assert frame.reset and frame.detail == "Busy"
    assert sim.resets[("a", "b")] == 1
    assert sim.transcripts["a"].entries == []


def test_same_instant_events_run_in_scheduling_order():
    sim = Sim()
    order = []
    for i in range(5):
        sim.schedule(3, lambda i=i: order.append(i))
    sim.schedule(1, lambda: order.append("early"))
    sim.run()
    assert order == ["early", 0, 1, 2, 3, 4]


def test_cancelled_timer_does_not_fire():
    sim = Sim()
    fired = []
    handle = sim.schedule(5, lambda: fired.append(True))
    assert not sim.idle
    handle.cancel()
    assert sim.idle
    assert sim.run() == 0
    assert fired == []


def test_run_until():
    sim = Sim()
    fired = []
    sim.schedule(5, lambda: fired.append(5))
    sim.schedule(10, lambda: fired.append(10))
    assert sim.run(until_ms=7) == 1
    assert fired == [5]
    sim.run()
    assert fired == [5, 10]


def test_cannot_schedule_into_the_past():
    with pytest.raises(ValueError):
        Sim().schedule(-1, lambda: None)


def test_interceptor_can_drop_and_duplicate():
    sim = _pair()
    sim.interceptors[("a", "b")] = lambda frame: [frame.data, frame.data + b"!"]
    sim.send("a", "b", 0, b"x")
    sim.run()
    assert [frame.data for _, frame in sim.nodes["b"].frames] == [b"x", b"x!"]

    sim.interceptors[("a", "b")] = lambda frame: []
    sim.send("a", "b", 4, b"y")
    sim.run()
    assert len(sim.nodes["b"].frames) == 2


def test_stream_ids_are_client_bidirectional():
    sim = _pair()
    assert [sim.open_stream("a", "b") for _ in range(3)] == [0, 4, 8]
    assert sim.open_stream("b", "a") == 0


def test_unknown_link():
    sim = _pair()
    with pytest.raises(UnknownEndpoint):
        sim.latency("a", "c")


def test_duplicate_node_id():
    with pytest.raises(DuplicateNode):
        TopologySpec(
            nodes=(
                NodeSpec(node_id="a", role=NodeRole.CLIENT),
                NodeSpec(node_id="a", role=NodeRole.PROXY),
            )
        )


def test_link_to_unknown_node():
    with pytest.raises(UnknownEndpoint):
        TopologySpec(
            nodes=(NodeSpec(node_id="a", role=NodeRole.CLIENT),),
            links=(LinkSpec(a="a", b="ghost", latency_ms=1),),
        )


@pytest.mark.parametrize("node_id", ["", "two words"])
def test_node_id_must_be_a_token(node_id):
    with pytest.raises(pydantic.ValidationError):
        NodeSpec(node_id=node_id, role=NodeRole.CLIENT)


def test_proxy_without_resolver_link():
    spec = TopologySpec(
        nodes=(
            NodeSpec(node_id="client", role=NodeRole.CLIENT),
            NodeSpec(node_id="proxy", role=NodeRole.PROXY),
            NodeSpec(node_id="resolver", role=NodeRole.RESOLVER),
        ),
        links=(LinkSpec(a="client", b="proxy", latency_ms=1),),
    )
    with pytest.raises(MissingRole):
        build_topology(spec)


def test_client_without_resolver():
    spec = TopologySpec(nodes=(NodeSpec(node_id="client", role=NodeRole.CLIENT),))
    with pytest.raises(MissingRole):
        build_topology(spec)


def test_client_without_links():
    spec = TopologySpec(
        nodes=(
            NodeSpec(node_id="client", role=NodeRole.CLIENT),
            NodeSpec(node_id="resolver", role=NodeRole.RESOLVER),
        )
    )
    sim = build_topology(spec)
    with pytest.raises(MissingRole):
        sim.nodes["client"].resolve("example.com")
    with pytest.raises(MissingRole):
        sim.nodes["client"].resolve("example.com", direct=True)


def test_build_topology_wiring(sim, resolver_uri):
    client, proxy, resolver = (sim.nodes[n] for n in ("client", "proxy", "resolver"))
    assert resolver.uri == resolver_uri
    assert client.resolver_uri == resolver_uri
    assert client.key_config == resolver.state.current.config
    assert client.proxy_id == "proxy"
    assert client.resolver_id == "resolver"
    assert proxy.proxy.config.allowed_resolvers == {resolver_uri}
    assert proxy.resolvers == {resolver_uri: "resolver"}


def test_resolution_through_the_chain(sim):
    sim.nodes["client"].resolve("example.com")
    sim.run()

    [record] = sim.nodes["client"].records
    assert record.kind == OutcomeKind.ANSWER
    assert record.addresses == ("10.0.2.5",)
    assert record.latency_ms == 40
    assert sim.establishments == {("client", "proxy"): 1, ("proxy", "resolver"): 1}


def test_processing_delay_adds_to_latency():
    spec = TopologySpec.chain()
    nodes = tuple(
        node.model_copy(update={"processing_delay_ms": 5})
        if node.role == NodeRole.RESOLVER
        else node
        for node in spec.nodes
    )
    sim = build_topology(
        spec.model_copy(update={"nodes": nodes}),
        zone=load_zone("example.com A 10.0.2.5"),
    )
    sim.nodes["client"].resolve("example.com")
    sim.run()
    assert sim.nodes["client"].records[0].latency_ms == 45


def test_lost_reply_times_out_at_the_proxy(sim, isolated_config):
    sim.interceptors[("resolver", "proxy")] = lambda frame: []
    sim.nodes["client"].resolve("example.com")
    sim.run()

    [record] = sim.nodes["client"].records
    assert record.kind == OutcomeKind.RESET
    assert record.detail == "Timeout"
    assert record.finished_ms == (
        10 + isolated_config.sim_exchange_timeout_ms + 10
    )
    assert sim.nodes["proxy"].proxy.live_slots == 0
