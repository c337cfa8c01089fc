"""odoq-proxy: relay sealed queries to allowlisted resolvers."""

import argparse
import logging
import sys

from odoq.cli._common import (
    CliError,
    add_logging_argument,
    add_tls_client_arguments,
    add_tls_server_arguments,
    load_server_identity,
    parse_endpoint,
    run,
    setup_logging,
    tls_client_kwargs,
)
from odoq.config import config_provider
from odoq.envelope import EnvelopeError, parse_target_uri
from odoq.proxy import Deny, Drop, Proxy, ProxyConfig, UnknownSlot
from odoq.transport import (
    ChannelPool,
    EndpointAddr,
    Exchange,
    Listener,
    ListenFailed,
    TlsIdentity,
    TransportError,
    listen,
)

__all__ = ["build_parser", "main", "start_proxy"]

logger = logging.getLogger(__name__)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odoq-proxy",
        description="Oblivious DNS-over-QUIC proxy. Forwards sealed queries to "
        "the resolvers named with --allow and relays their replies.",
    )
    parser.add_argument(
        "--listen",
        required=True,
        help=f"host:port to bind (default port {config_provider.get().proxy_port})",
    )
    parser.add_argument(
        "--allow",
        action="append",
        default=[],
        metavar="RESOLVER_URI",
        help="resolver target URI (quic://host:port) clients may reach, repeatable",
    )
    add_tls_server_arguments(parser)
    add_tls_client_arguments(parser, peer="resolvers")
    add_logging_argument(parser)
    return parser


async def _relay(proxy: Proxy, pool: ChannelPool, exchange: Exchange) -> None:
    decision = proxy.on_client_query(exchange.envelope, exchange.connection)
    if isinstance(decision, Deny):
        exchange.reset()
        return

    slot_id = decision.slot.slot_id
    try:
        reply = await pool.exchange(decision.resolver_uri, decision.envelope)
    except TransportError as err:
        logger.warning(f"Slot {slot_id}: no reply from {decision.resolver_uri}: {err}")
        try:
            proxy.on_resolver_timeout(slot_id)
        except UnknownSlot:
            return
        exchange.reset()
        return

    try:
        relay = proxy.on_resolver_reply(slot_id, reply)
    except UnknownSlot:
        logger.debug(f"Slot {slot_id} released before its reply arrived")
        return
    if isinstance(relay, Drop):
        exchange.reset()
        return
    exchange.reply(relay.envelope)


async def start_proxy(
    proxy: Proxy, addr: EndpointAddr, identity: TlsIdentity, pool: ChannelPool
) -> Listener:
    """Serve `proxy` on `addr`, reaching resolvers through `pool`."""

    async def handle(exchange: Exchange) -> None:
        await _relay(proxy, pool, exchange)

    def on_disconnect(connection) -> None:
        released = proxy.release(connection)
        if released:
            logger.debug(f"Client went away, released {released} slots")

    return await listen(addr, identity, handler=handle, on_disconnect=on_disconnect)


def _proxy_config(allow: list[str]) -> ProxyConfig:
    if not allow:
        raise CliError("At least one --allow resolver URI is required")
    for uri in allow:
        try:
            parse_target_uri(uri)
        except EnvelopeError as err:
            raise CliError(str(err)) from err
    return ProxyConfig(allowed_resolvers=frozenset(allow))


async def _main(args: argparse.Namespace) -> int:
    setup_logging(args.log_level)
    proxy = Proxy(_proxy_config(args.allow))
    addr = parse_endpoint(args.listen, config_provider.get().proxy_port)
    identity = load_server_identity(args.cert, args.key, addr.host)

    async with ChannelPool(**tls_client_kwargs(args)) as pool:
        try:
            listener = await start_proxy(proxy, addr, identity, pool)
        except ListenFailed as err:
            raise CliError(str(err)) from err
        logger.info(
            f"Relaying on {listener.addr} to {', '.join(sorted(args.allow))}"
        )
        await listener.serve_forever()
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run("odoq-proxy", _main(args))


if __name__ == "__main__":
    sys.exit(main())
