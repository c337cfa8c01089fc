"""odoq-resolver: answer oblivious queries from a local zone file."""

import argparse
import asyncio
import logging
import sys
import threading
import typing
from pathlib import Path

from pydantic import ValidationError

from odoq.cli._common import (
    CliError,
    add_logging_argument,
    add_tls_server_arguments,
    format_key_config,
    load_server_identity,
    parse_endpoint,
    run,
    setup_logging,
)
from odoq.config import config_provider
from odoq.resolver import ResolverError, ResolverState, handle_query, rotate_keys
from odoq.seal import DEFAULT_SUITE, ResolverKeyPair, generate_keypair
from odoq.transport import (
    EndpointAddr,
    Exchange,
    Listener,
    ListenFailed,
    TlsIdentity,
    listen,
)
from odoq.zone import ParseError, load_zone_file

__all__ = [
    "build_parser",
    "load_or_create_keypair",
    "main",
    "rotate_and_publish",
    "save_keypair",
    "start_resolver",
]

logger = logging.getLogger(__name__)

ROTATE_COMMAND = "rotate"


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="odoq-resolver",
        description="Oblivious DNS-over-QUIC resolver. Prints its base64 key "
        "config on standard output; type `rotate` on standard input to switch "
        "to a fresh key.",
    )
    parser.add_argument(
        "--listen",
        required=True,
        help="host:port to bind (default port "
        f"{config_provider.get().resolver_port})",
    )
    parser.add_argument(
        "--key-file",
        required=True,
        type=Path,
        help="JSON file holding the resolver key pair, created when missing",
    )
    parser.add_argument(
        "--zone",
        required=True,
        type=Path,
        help="zone file with lines `<name> A <ipv4> [ttl]`",
    )
    add_tls_server_arguments(parser)
    add_logging_argument(parser)
    return parser


def save_keypair(path: Path, keypair: ResolverKeyPair) -> None:
    path.write_text(keypair.model_dump_json(indent=2))


def load_or_create_keypair(path: Path) -> ResolverKeyPair:
    if not path.exists():
        keypair = generate_keypair(DEFAULT_SUITE, key_id=0)
        save_keypair(path, keypair)
        logger.info(f"Generated key_id 0 into {path}")
        return keypair
    try:
        keypair = ResolverKeyPair.model_validate_json(path.read_text())
        _ = keypair.config.suite
    except (OSError, ValidationError, ValueError) as err:
        raise CliError(f"Invalid key file {path}: {err}") from err
    return keypair


def rotate_and_publish(
    state: ResolverState, key_file: Path, out: typing.TextIO = sys.stdout
) -> None:
    rotate_keys(state)
    keypair = state.key_pair()
    save_keypair(key_file, keypair)
    print(format_key_config(keypair.config), file=out, flush=True)


async def start_resolver(
    state: ResolverState, addr: EndpointAddr, identity: TlsIdentity
) -> Listener:
    async def handle(exchange: Exchange) -> None:
        try:
            reply = handle_query(state, exchange.envelope)
        except ResolverError as err:
            logger.warning(f"No reply on stream {exchange.stream_id}: {err}")
            exchange.reset()
            return
        exchange.reply(reply)

    return await listen(addr, identity, handler=handle)


def _read_stdin(
    loop: asyncio.AbstractEventLoop, lines: "asyncio.Queue[str | None]"
) -> None:
    try:
        for line in sys.stdin:
            loop.call_soon_threadsafe(lines.put_nowait, line)
        loop.call_soon_threadsafe(lines.put_nowait, None)
    except RuntimeError:
        pass  # loop closed on shutdown


async def _watch_stdin(state: ResolverState, key_file: Path) -> None:
    lines: asyncio.Queue[str | None] = asyncio.Queue()
    threading.Thread(
        target=_read_stdin,
        args=(asyncio.get_running_loop(), lines),
        name="odoq-resolver-stdin",
        daemon=True,
    ).start()
    while True:
        line = await lines.get()
        if line is None:
            logger.debug("Standard input closed, rotation disabled")
            return
        command = line.strip()
        if command == ROTATE_COMMAND:
            rotate_and_publish(state, key_file)
        elif command:
            logger.warning(f"Unknown command {command!r}, expected {ROTATE_COMMAND!r}")


async def _main(args: argparse.Namespace) -> int:
    setup_logging(args.log_level)
    addr = parse_endpoint(args.listen, config_provider.get().resolver_port)
    try:
        zone = load_zone_file(args.zone)
    except OSError as err:
        raise CliError(f"Unable to read zone file: {err}") from err
    except ParseError as err:
        raise CliError(f"{args.zone}: {err}") from err

    keypair = load_or_create_keypair(args.key_file)
    state = ResolverState(current=keypair, zone=zone)
    identity = load_server_identity(args.cert, args.key, addr.host)
    try:
        listener = await start_resolver(state, addr, identity)
    except ListenFailed as err:
        raise CliError(str(err)) from err

    print(format_key_config(keypair.config), flush=True)
    logger.info(f"Serving {len(zone)} zone entries on {listener.addr}")
    watcher = asyncio.create_task(_watch_stdin(state, args.key_file))
    try:
        await listener.serve_forever()
    finally:
        watcher.cancel()
    return 0


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    return run("odoq-resolver", _main(args))


if __name__ == "__main__":
    sys.exit(main())
