"""odoq-client: resolve one name through a proxy.

Exit status: 0 answer, 2 name does not exist, 3 reply rejected, 4 transport
failure, 1 usage errors.
"""

import argparse
import logging
import sys
from enum import IntEnum
from pathlib import Path

from odoq.cli._common import (
    CliError,
    add_logging_argument,
    add_tls_client_arguments,
    apply_timeout,
    parse_endpoint,
    parse_key_config,
    run,
    setup_logging,
    tls_client_kwargs,
)
from odoq.client import (
    Answer,
    ClientOutcome,
    NxDomain,
    Reject,
    Retry,
    on_envelope,
    start_session,
)
from odoq.config import config_provider
from odoq.dns_wire import DnsName, DnsWireError
from odoq.envelope import EnvelopeError, parse_target_uri
from odoq.seal import KeyConfig, RandomSource, system_random
from odoq.transport import EndpointAddr, TransportError, connect

__all__ = ["ExitCode", "build_parser", "main", "resolve"]

logger = logging.getLogger(__name__)


class ExitCode(IntEnum):
    ANSWER = 0
    USAGE = 1
    NAME_ERROR = 2
    REJECTED = 3
    TRANSPORT = 4


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odoq-client",
        description="Resolve DOMAIN through an oblivious DNS-over-QUIC proxy and "
        "print one `<domain> <ip>` line per address.",
    )
    parser.add_argument(
        "--proxy",
        required=True,
        help=f"proxy host:port (default port {config_provider.get().proxy_port})",
    )
    parser.add_argument(
        "--resolver",
        required=True,
        metavar="RESOLVER_URI",
        help="target resolver URI, quic://host:port",
    )
    parser.add_argument(
        "--key",
        required=True,
        help="the resolver's base64 key config, or @path to a file holding it",
    )
    parser.add_argument(
        "--timeout",
        type=float,
        help="seconds to wait for the handshake and for each reply "
        f"(default {config_provider.get().exchange_timeout})",
    )
    add_tls_client_arguments(parser, peer="proxy")
    add_logging_argument(parser)
    parser.add_argument("domain", help="name to resolve, e.g. example.com")
    return parser


async def resolve(
    domain: DnsName | str,
    proxy: EndpointAddr | str,
    resolver_uri: str,
    key_config: KeyConfig,
    *,
    ca_file: Path | str | None = None,
    ca_data: bytes | None = None,
    insecure: bool = False,
    pin_sha256: str | None = None,
    rng: RandomSource = system_random,
) -> ClientOutcome:
    """Run one session against `proxy`, retrying once on a key update.

    The retry goes on a new stream of the same connection.
    """
    session, envelope = start_session(domain, resolver_uri, key_config, rng)
    channel = await connect(
        proxy,
        ca_file=ca_file,
        ca_data=ca_data,
        insecure=insecure,
        pin_sha256=pin_sha256,
    )
    async with channel:
        while True:
            reply = await channel.exchange(envelope)
            outcome = on_envelope(session, reply, rng)
            if not isinstance(outcome, Retry):
                return outcome
            logger.info(
                f"Resolver published key_id {session.key_config.key_id}, retrying"
            )
            envelope = outcome.envelope


def _report(domain: DnsName, outcome: ClientOutcome) -> ExitCode:
    if isinstance(outcome, Answer):
        if not outcome.addresses:
            print(f"odoq-client: {domain.to_text()} has no A records", file=sys.stderr)
        for address in outcome.addresses:
            print(f"{domain.to_text()} {address}")
        return ExitCode.ANSWER
    if isinstance(outcome, NxDomain):
        print(f"odoq-client: {domain.to_text()} does not exist", file=sys.stderr)
        return ExitCode.NAME_ERROR
    assert isinstance(outcome, Reject)
    print(
        f"odoq-client: reply rejected: {outcome.reason.value} {outcome.detail}",
        file=sys.stderr,
    )
    return ExitCode.REJECTED


async def _main(args: argparse.Namespace) -> int:
    setup_logging(args.log_level)
    apply_timeout(args.timeout)
    key_config = parse_key_config(args.key)
    proxy = parse_endpoint(args.proxy, config_provider.get().proxy_port)
    try:
        domain = DnsName.from_text(args.domain)
        domain.check()
        parse_target_uri(args.resolver)
    except (DnsWireError, EnvelopeError) as err:
        raise CliError(str(err)) from err

    try:
        outcome = await resolve(
            domain, proxy, args.resolver, key_config, **tls_client_kwargs(args)
        )
    except TransportError as err:
        raise CliError(
            f"{type(err).__name__}: {err}", exit_code=ExitCode.TRANSPORT
        ) from err
    return _report(domain, outcome)


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run("odoq-client", _main(args))


if __name__ == "__main__":
    sys.exit(main())
