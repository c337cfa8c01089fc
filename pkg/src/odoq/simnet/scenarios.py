"""Named protocol scenarios and the runner producing their reports.

A scenario is a function scheduling work on a built simulator and checking the
result. Register new ones with `@scenario`:

```python
@scenario(description="resolve twice, one second apart")
def twice(ctx: ScenarioContext) -> None:
    ctx.client.resolve("example.com")
    ctx.client.resolve("example.com", at_ms=1000)
    ctx.sim.run()
    kinds = [record.kind for record in ctx.client.records]
    ctx.check("both_answered", kinds == [OutcomeKind.ANSWER] * 2)
```
"""

import ipaddress
import logging
import typing

from odoq.dns_wire import DnsName, decode_message
from odoq.envelope import EnvelopeError, MsgType, decode_envelope
from odoq.seal import SealedResponse, SealError, open_response
from odoq.simnet._base import (
    Deadlock,
    Direction,
    MissingRole,
    NodeRole,
    TamperRecord,
    TopologySpec,
    UnknownScenario,
)
from odoq.simnet.nodes import (
    ClientNode,
    OutcomeKind,
    ProxyNode,
    ResolverNode,
    SimNode,
    build_topology,
)
from odoq.simnet.report import (
    AssertionResult,
    LinkLatencies,
    OverheadReport,
    ScenarioReport,
    ScenarioSpec,
    compare_direct_vs_oblivious,
    count_messages,
)
from odoq.simnet.sim import Sim
from odoq.zone import load_zone, lookup

__all__ = [
    "RegisteredScenario",
    "ScenarioContext",
    "get_scenario",
    "list_scenarios",
    "measure_direct_vs_oblivious",
    "run_scenario",
    "run_spec",
    "scenario",
]

logger = logging.getLogger(__name__)


class ScenarioContext:
    def __init__(self, sim: Sim, domains: typing.Sequence[str]):
        self.sim = sim
        self.domains = list(domains)
        self.assertions: list[AssertionResult] = []

    def nodes(self, role: NodeRole) -> list[SimNode]:
        return [node for node in self.sim.nodes.values() if node.role == role]

    def _first(self, role: NodeRole) -> typing.Any:
        nodes = self.nodes(role)
        if not nodes:
            raise MissingRole(f"Scenario needs a {role.value} node")
        return nodes[0]

    @property
    def client(self) -> ClientNode:
        return self._first(NodeRole.CLIENT)

    @property
    def proxy(self) -> ProxyNode:
        return self._first(NodeRole.PROXY)

    @property
    def resolver(self) -> ResolverNode:
        return self._first(NodeRole.RESOLVER)

    def domain(self, default: str) -> str:
        return self.domains[0] if self.domains else default

    def check(self, name: str, passed: bool, detail: str = "") -> bool:
        self.assertions.append(AssertionResult(name=name, passed=passed, detail=detail))
        if not passed:
            logger.warning(f"Assertion {name} failed: {detail}")
        return passed

    def expected_addresses(self, domain: str) -> tuple[str, ...]:
        addrs = lookup(self.resolver.state.zone, DnsName.from_text(domain))
        return tuple(str(ipaddress.IPv4Address(addr)) for addr in addrs)

    def latencies(self) -> LinkLatencies:
        client, proxy, resolver = self.client, self.proxy, self.resolver
        sim = self.sim

        def latency(a: SimNode, b: SimNode) -> int:
            if not sim.has_link(a.node_id, b.node_id):
                return 0
            return sim.latency(a.node_id, b.node_id)

        return LinkLatencies(
            client_proxy_ms=latency(client, proxy),
            proxy_resolver_ms=latency(proxy, resolver),
            client_resolver_ms=latency(client, resolver),
            handshake_rtts=sim.topology.handshake_rtts,
        )

    def flip_byte(self, src: str, dst: str, every_frame: bool = True) -> None:
        """Flip one random bit in frames crossing src->dst, logged per frame."""
        done = False

        def interceptor(frame) -> list[bytes]:
            nonlocal done
            if done or not frame.data:
                return [frame.data]
            done = not every_frame
            offset = self.sim.rng.randrange(len(frame.data))
            mask = 1 << self.sim.rng.randrange(8)
            self.sim.tamper_log.append(
                TamperRecord(
                    time_ms=self.sim.now,
                    src=src,
                    dst=dst,
                    action="flip",
                    offset=offset,
                    mask=mask,
                )
            )
            data = bytearray(frame.data)
            data[offset] ^= mask
            return [bytes(data)]

        self.sim.interceptors[(src, dst)] = interceptor

    def duplicate_first(self, src: str, dst: str) -> None:
        done = False

        def interceptor(frame) -> list[bytes]:
            nonlocal done
            if done:
                return [frame.data]
            done = True
            self.sim.tamper_log.append(
                TamperRecord(time_ms=self.sim.now, src=src, dst=dst, action="duplicate")
            )
            return [frame.data, frame.data]

        self.sim.interceptors[(src, dst)] = interceptor


ScenarioFunc = typing.Callable[[ScenarioContext], None]


class RegisteredScenario(typing.NamedTuple):
    name: str
    func: ScenarioFunc
    description: str
    # an oblivious scenario gets the blindness checks on top of its own
    oblivious: bool


class _Register:
    def __init__(self):
        self._scenarios: dict[str, RegisteredScenario] = {}

    def add(self, entry: RegisteredScenario) -> None:
        existing = self._scenarios.get(entry.name)
        if existing:
            raise ValueError(
                f'A scenario is already registered as "{entry.name}".\n'
                f"Existing: {existing.func.__module__}.{existing.func.__name__}\n"
                f"New: {entry.func.__module__}.{entry.func.__name__}"
            )
        logger.debug(f"Registering scenario: {entry.name}")
        self._scenarios[entry.name] = entry

    def get(self, name: str) -> RegisteredScenario:
        try:
            return self._scenarios[name]
        except KeyError:
            raise UnknownScenario(
                f"Unknown scenario {name!r}, known: {', '.join(self.names())}"
            ) from None

    def names(self) -> list[str]:
        return list(self._scenarios)


_REGISTER = _Register()


@typing.overload
def scenario(_func: ScenarioFunc) -> ScenarioFunc: ...


@typing.overload
def scenario(
    *, name: str | None = None, description: str = "", oblivious: bool = True
) -> typing.Callable[[ScenarioFunc], ScenarioFunc]: ...


def scenario(
    _func: ScenarioFunc | None = None,
    *,
    name: str | None = None,
    description: str = "",
    oblivious: bool = True,
) -> ScenarioFunc | typing.Callable[[ScenarioFunc], ScenarioFunc]:
    def wrapper(func: ScenarioFunc) -> ScenarioFunc:
        _REGISTER.add(
            RegisteredScenario(
                name=name or func.__name__,
                func=func,
                description=description or (func.__doc__ or "").strip(),
                oblivious=oblivious,
            )
        )
        return func

    if _func is None:
        return wrapper
    return wrapper(_func)


def get_scenario(name: str) -> RegisteredScenario:
    return _REGISTER.get(name)


def list_scenarios() -> list[RegisteredScenario]:
    return [_REGISTER.get(name) for name in _REGISTER.names()]


def run_scenario(
    sim: Sim,
    scenario: str | RegisteredScenario,
    domains: typing.Sequence[str] = (),
) -> ScenarioReport:
    """Drive `sim` through `scenario` to quiescence and report.

    Raises Deadlock if a client session is still waiting once no events remain.
    """
    entry = get_scenario(scenario) if isinstance(scenario, str) else scenario
    ctx = ScenarioContext(sim, domains)
    logger.info(f"Running scenario {entry.name} (seed {sim.seed})")
    entry.func(ctx)
    sim.run()

    clients = [node for node in ctx.nodes(NodeRole.CLIENT)]
    pending = [
        f"{client.node_id}:{record.domain}"
        for client in clients
        for record in client.records
        if record.pending
    ]
    if pending:
        raise Deadlock(f"Sessions still waiting at {sim.now}ms: {', '.join(pending)}")

    if entry.oblivious:
        _check_blindness(ctx)

    outcomes = [record for client in clients for record in client.records]
    latencies = [r.latency_ms for r in outcomes if r.latency_ms is not None]
    return ScenarioReport(
        scenario=entry.name,
        seed=sim.seed,
        outcomes=[record.model_copy() for record in outcomes],
        latency_ms=max(latencies) if latencies else None,
        message_counts=dict(count_messages(sim.transcripts)),
        establishments={f"{a}->{b}": n for (a, b), n in sim.establishments.items()},
        resets={f"{a}->{b}": n for (a, b), n in sim.resets.items()},
        tamper_log=list(sim.tamper_log),
        transcripts={k: v.model_copy(deep=True) for k, v in sim.transcripts.items()},
        assertions=ctx.assertions,
    )


def run_spec(spec: ScenarioSpec) -> ScenarioReport:
    zone = load_zone("\n".join(spec.zone))
    sim = build_topology(spec.topology, zone=zone, seed=spec.seed)
    return run_scenario(sim, spec.scenario, spec.domains)


def measure_direct_vs_oblivious(
    latencies: LinkLatencies, seed: int = 0
) -> OverheadReport:
    """Measure both round trips in the simulator on a fresh chain each."""
    topology = TopologySpec.chain(
        client_proxy_ms=latencies.client_proxy_ms,
        proxy_resolver_ms=latencies.proxy_resolver_ms,
        client_resolver_ms=latencies.client_resolver_ms,
        handshake_rtts=latencies.handshake_rtts,
    )
    measured = {}
    for name in ("happy_path", "direct_doq"):
        spec = ScenarioSpec(scenario=name, seed=seed, topology=topology)
        measured[name] = run_spec(spec).latency_ms
    return OverheadReport(
        oblivious_rtt_ms=measured["happy_path"], direct_rtt_ms=measured["direct_doq"]
    )


def _check_blindness(ctx: ScenarioContext) -> None:
    proxies = {node.node_id for node in ctx.nodes(NodeRole.PROXY)}
    for resolver in ctx.nodes(NodeRole.RESOLVER):
        peers = ctx.sim.transcripts[resolver.node_id].peers()
        ctx.check(
            f"resolver_peers_are_proxies[{resolver.node_id}]",
            peers <= proxies,
            f"peers {sorted(peers)}",
        )

    secrets = []
    for client in ctx.nodes(NodeRole.CLIENT):
        assert isinstance(client, ClientNode)
        for session, record in zip(client.sessions, client.records):
            secrets.append((record.domain, session.query.question.name.to_wire()))
            for addr in record.addresses:
                secrets.append((addr, ipaddress.IPv4Address(addr).packed))
    for proxy_id in proxies:
        seen = ctx.sim.transcripts[proxy_id].observed_bytes()
        leaked = sorted({label for label, raw in secrets if raw in seen})
        ctx.check(f"proxy_blind[{proxy_id}]", not leaked, f"leaked {leaked}")


def _sealed_rcodes(ctx: ScenarioContext, session_index: int = 0) -> list[int]:
    """Open every response the resolver sent with the client's session secrets."""
    secrets = ctx.client.sessions[session_index].secrets
    rcodes = []
    for entry in ctx.sim.transcripts[ctx.resolver.node_id].entries:
        if entry.direction != Direction.SENT:
            continue
        try:
            envelope = decode_envelope(entry.data)
            if envelope.msg_type != MsgType.OBLIVIOUS_RESPONSE:
                continue
            wire, _, _ = open_response(
                secrets, SealedResponse(ciphertext=envelope.payload)
            )
        except (EnvelopeError, SealError):
            continue
        rcodes.append(decode_message(wire).rcode)
    return rcodes


def _resolver_sent(ctx: ScenarioContext) -> list[str]:
    kinds = []
    for entry in ctx.sim.transcripts[ctx.resolver.node_id].entries:
        if entry.direction == Direction.SENT:
            kinds.append(decode_envelope(entry.data).msg_type.name)
    return kinds


def _check_answer(ctx: ScenarioContext, index: int = 0) -> None:
    record = ctx.client.records[index]
    expected = ctx.expected_addresses(record.domain)
    ctx.check(
        "answer_matches_zone",
        record.kind == OutcomeKind.ANSWER and record.addresses == expected,
        f"{record.kind} {record.addresses}, zone has {expected}",
    )


def _check_no_answer(ctx: ScenarioContext) -> None:
    kinds = [record.kind for record in ctx.client.records]
    ctx.check(
        "no_false_answer",
        all(kind in (OutcomeKind.REJECT, OutcomeKind.RESET) for kind in kinds),
        f"outcomes {[kind.value for kind in kinds if kind]}",
    )


def _check_establishments(ctx: ScenarioContext) -> None:
    counts = ctx.sim.establishments
    ctx.check(
        "one_connection_per_hop",
        bool(counts) and all(n == 1 for n in counts.values()),
        f"{dict(counts)}",
    )


@scenario(description="resolve the fixture domain through the proxy")
def happy_path(ctx: ScenarioContext) -> None:
    ctx.client.resolve(ctx.domain("example.com"))
    ctx.sim.run()
    _check_answer(ctx)
    expected = compare_direct_vs_oblivious(ctx.latencies()).oblivious_rtt_ms
    latency = ctx.client.records[0].latency_ms
    ctx.check(
        "latency_matches_model",
        latency == expected,
        f"measured {latency}ms, model {expected}ms",
    )


@scenario(description="a name missing from the zone yields a verified NXDOMAIN")
def nxdomain(ctx: ScenarioContext) -> None:
    ctx.client.resolve(ctx.domain("unknown.test"))
    ctx.sim.run()
    record = ctx.client.records[0]
    ctx.check(
        "verified_nxdomain", record.kind == OutcomeKind.NXDOMAIN, f"{record.kind}"
    )


@scenario(
    description="the resolver rotates its key before the query arrives; the client "
    "recovers with one KEY_UPDATE on the same connection"
)
def key_rotation(ctx: ScenarioContext) -> None:
    client, proxy, resolver = ctx.client, ctx.proxy, ctx.resolver
    resolver.rotate(at_ms=0)
    client.resolve(ctx.domain("example.com"))
    ctx.sim.run()

    _check_answer(ctx)
    counts = count_messages(ctx.sim.transcripts)
    queries = counts[f"{client.node_id}->{proxy.node_id} OBLIVIOUS_QUERY"]
    key_updates = counts[f"{resolver.node_id}->{proxy.node_id} KEY_UPDATE"]
    ctx.check("two_client_queries", queries == 2, f"{queries} queries")
    ctx.check("one_key_update", key_updates == 1, f"{key_updates} KEY_UPDATEs")
    ctx.check("client_retried", ctx.client.records[0].retried)
    _check_establishments(ctx)
    expected = 2 * compare_direct_vs_oblivious(ctx.latencies()).oblivious_rtt_ms
    if ctx.sim.topology.handshake_rtts == 0:
        latency = ctx.client.records[0].latency_ms
        ctx.check(
            "latency_two_round_trips",
            latency == expected,
            f"measured {latency}ms, expected {expected}ms",
        )


@scenario(description="the query is delivered to the resolver twice")
def replay_duplicate(ctx: ScenarioContext) -> None:
    ctx.duplicate_first(ctx.proxy.node_id, ctx.resolver.node_id)
    ctx.client.resolve(ctx.domain("example.com"))
    ctx.sim.run()

    answers = [r for r in ctx.client.records if r.kind == OutcomeKind.ANSWER]
    ctx.check("one_answer", len(answers) == 1, f"{len(answers)} answers")
    rcodes = _sealed_rcodes(ctx)
    ctx.check("replay_gets_servfail", sorted(rcodes) == [0, 2], f"rcodes {rcodes}")
    ctx.check(
        "duplicate_reply_dropped_at_proxy",
        ctx.proxy.late_replies == 1,
        f"{ctx.proxy.late_replies} late replies",
    )


@scenario(description="one bit of the sealed response is flipped in flight")
def tamper_response(ctx: ScenarioContext) -> None:
    ctx.flip_byte(ctx.resolver.node_id, ctx.proxy.node_id)
    ctx.client.resolve(ctx.domain("example.com"))
    ctx.sim.run()
    _check_no_answer(ctx)


@scenario(description="one bit of the sealed query is flipped in flight")
def tamper_request(ctx: ScenarioContext) -> None:
    ctx.flip_byte(ctx.proxy.node_id, ctx.resolver.node_id)
    ctx.client.resolve(ctx.domain("example.com"))
    ctx.sim.run()
    _check_no_answer(ctx)
    sent = _resolver_sent(ctx)
    ctx.check(
        "resolver_only_sends_key_updates",
        all(kind == "KEY_UPDATE" for kind in sent),
        f"resolver sent {sent}",
    )


@scenario(description="the client names a resolver outside the proxy allowlist")
def deny_unlisted_resolver(ctx: ScenarioContext) -> None:
    ctx.client.resolve(ctx.domain("example.com"), resolver_uri="quic://evil.example:1")
    ctx.sim.run()
    record = ctx.client.records[0]
    ctx.check(
        "denied_not_allowed",
        record.kind == OutcomeKind.RESET and record.detail == "NotAllowed",
        f"{record.kind} {record.detail}",
    )
    ctx.check(
        "resolver_untouched",
        not ctx.sim.transcripts[ctx.resolver.node_id].entries,
    )


@scenario(
    oblivious=False,
    description="plain DoQ baseline: the client queries the resolver directly",
)
def direct_doq(ctx: ScenarioContext) -> None:
    client, resolver = ctx.client, ctx.resolver
    client.resolve(ctx.domain("example.com"), direct=True)
    ctx.sim.run()
    _check_answer(ctx)
    expected = compare_direct_vs_oblivious(ctx.latencies()).direct_rtt_ms
    latency = client.records[0].latency_ms
    ctx.check(
        "latency_matches_model",
        latency == expected,
        f"measured {latency}ms, model {expected}ms",
    )
    ctx.check(
        "resolver_sees_client",
        client.node_id in ctx.sim.transcripts[resolver.node_id].peers(),
    )


@scenario(description="several sessions share one client->proxy connection")
def multiplexed_queries(ctx: ScenarioContext) -> None:
    domains = ctx.domains or ["example.com", "www.example.com", "unknown.test"]
    for domain in domains:
        ctx.client.resolve(domain)
    ctx.sim.run()

    records = ctx.client.records
    ctx.check(
        "all_sessions_verified",
        len(records) == len(domains)
        and all(r.kind in (OutcomeKind.ANSWER, OutcomeKind.NXDOMAIN) for r in records),
        f"{[r.kind.value if r.kind else None for r in records]}",
    )
    for record in records:
        expected = ctx.expected_addresses(record.domain)
        if expected and record.addresses != expected:
            ctx.check(f"answer[{record.domain}]", False, f"{record.addresses}")
    _check_establishments(ctx)
    streams = {
        entry.stream_id
        for entry in ctx.sim.transcripts[ctx.client.node_id].entries
        if entry.direction == Direction.SENT
    }
    ctx.check("one_stream_per_query", len(streams) == len(domains), f"{streams}")
