import argparse
import asyncio
import base64
import binascii
import logging
import sys
import tempfile
import typing
from pathlib import Path

from odoq.config import config_provider
from odoq.envelope import EnvelopeError
from odoq.seal import KeyConfig, SealError, decode_key_config, encode_key_config
from odoq.transport import (
    EndpointAddr,
    TlsIdentity,
    generate_test_pki,
    parse_fingerprint,
)

__all__ = [
    "CliError",
    "add_logging_argument",
    "add_tls_client_arguments",
    "add_tls_server_arguments",
    "apply_timeout",
    "format_key_config",
    "load_server_identity",
    "parse_endpoint",
    "parse_key_config",
    "run",
    "setup_logging",
    "tls_client_kwargs",
]

logger = logging.getLogger(__name__)

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s %(message)s"


class CliError(Exception):
    """A usage or startup failure, reported on stderr with `exit_code`."""

    def __init__(self, message: str, exit_code: int = 1):
        super().__init__(message)
        self.exit_code = exit_code


def add_logging_argument(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--log-level",
        default="WARNING",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="logging threshold, logs go to standard error (default: %(default)s)",
    )


def setup_logging(level: str) -> None:
    logging.basicConfig(format=LOG_FORMAT, level=level, stream=sys.stderr)


def add_tls_server_arguments(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--cert",
        type=Path,
        help="PEM certificate chain, leaf first; an ephemeral test identity is "
        "generated when omitted",
    )
    parser.add_argument("--key", type=Path, help="PEM private key for --cert")


def add_tls_client_arguments(
    parser: argparse.ArgumentParser, peer: str = "server"
) -> None:
    group = parser.add_mutually_exclusive_group()
    group.add_argument(
        "--ca-file",
        type=Path,
        help=f"PEM CA certificates used to verify the {peer} "
        "(default: system trust store)",
    )
    group.add_argument(
        "--insecure",
        action="store_true",
        help=f"skip verification of the {peer} certificate",
    )
    parser.add_argument(
        "--pin-sha256",
        metavar="HEX",
        help=f"require this SHA-256 fingerprint of the {peer} leaf certificate; "
        "replaces the trust store unless --ca-file is given",
    )


def tls_client_kwargs(args: argparse.Namespace) -> dict[str, typing.Any]:
    if args.pin_sha256 is not None:
        try:
            parse_fingerprint(args.pin_sha256)
        except ValueError as err:
            raise CliError(f"Invalid --pin-sha256: {err}") from None
    return {
        "ca_file": args.ca_file,
        "insecure": args.insecure,
        "pin_sha256": args.pin_sha256,
    }


def load_server_identity(
    cert: Path | None, key: Path | None, hostname: str
) -> TlsIdentity:
    if (cert is None) != (key is None):
        raise CliError("--cert and --key must be given together")
    if cert is not None:
        try:
            return TlsIdentity.from_files(cert, key)
        except OSError as err:
            raise CliError(f"Unable to read TLS identity: {err}") from err

    pki = generate_test_pki([hostname])
    with tempfile.NamedTemporaryFile(
        prefix="odoq-ca-", suffix=".pem", delete=False
    ) as ca_file:
        ca_file.write(pki.ca_pem)
    logger.warning(
        f"No --cert given, serving an ephemeral identity for {hostname}; "
        f"its CA is at {ca_file.name}"
    )
    return pki.identity


def parse_endpoint(text: str, default_port: int) -> EndpointAddr:
    """`host`, `host:port` or `quic://host:port`."""
    try:
        return EndpointAddr.parse(text)
    except (EnvelopeError, ValueError):
        pass
    try:
        return EndpointAddr.parse(f"{text}:{default_port}")
    except (EnvelopeError, ValueError) as err:
        raise CliError(f"Invalid endpoint {text!r}: {err}") from None


def format_key_config(config: KeyConfig) -> str:
    return base64.b64encode(encode_key_config(config)).decode("ascii")


def parse_key_config(value: str) -> KeyConfig:
    """A base64 KeyConfig, or `@path` to a file holding one."""
    if value.startswith("@"):
        try:
            value = Path(value[1:]).read_text()
        except OSError as err:
            raise CliError(f"Unable to read key config: {err}") from err
    try:
        config = decode_key_config(base64.b64decode(value.strip(), validate=True))
        _ = config.suite
    except (binascii.Error, SealError, ValueError) as err:
        raise CliError(f"Invalid key config: {err}") from err
    return config


def apply_timeout(seconds: float | None) -> None:
    """Use `seconds` for both the handshake and the exchange timeout."""
    if seconds is None:
        return
    if seconds <= 0:
        raise CliError(f"Timeout must be positive, got {seconds}")
    config = config_provider.get()
    config_provider.set(
        config.model_copy(
            update={"exchange_timeout": seconds, "connect_timeout": seconds}
        )
    )


def run(prog: str, coro: typing.Coroutine[typing.Any, typing.Any, int]) -> int:
    """Run a binary's main coroutine, mapping CliError to its exit code."""
    try:
        return asyncio.run(coro)
    except CliError as err:
        print(f"{prog}: {err}", file=sys.stderr)
        return err.exit_code
    except KeyboardInterrupt:
        return 130
