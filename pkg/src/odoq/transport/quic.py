"""Envelope exchanges over QUIC: one bidirectional stream per request and reply.

The client opens a stream, writes one encoded envelope and ends its side; the
server answers with one envelope and ends the stream, or resets it to refuse.
"""

import asyncio
import contextlib
import functools
import hmac
import logging
import ssl
import typing
from collections import Counter
from pathlib import Path

from aioquic.asyncio import QuicConnectionProtocol, connect as quic_connect, serve
from aioquic.asyncio.server import QuicServer
from aioquic.quic.configuration import QuicConfiguration
from aioquic.quic.events import (
    ConnectionTerminated,
    QuicEvent,
    StreamDataReceived,
    StreamReset as QuicStreamReset,
)
from cryptography import x509
from pydantic import BaseModel, ConfigDict, Field

from odoq.config import config_provider
from odoq.envelope import (
    MAX_PAYLOAD_SIZE,
    TARGET_SCHEME,
    Envelope,
    EnvelopeError,
    decode_envelope,
    encode_envelope,
    format_target_uri,
    parse_target_uri,
)
from odoq.transport.tls import TlsIdentity, fingerprint_sha256, parse_fingerprint

__all__ = [
    "Channel",
    "ChannelPool",
    "ConnectFailed",
    "EndpointAddr",
    "Exchange",
    "FramingError",
    "HandshakeTimeout",
    "ListenFailed",
    "Listener",
    "StreamReset",
    "TlsFailed",
    "TransportError",
    "TransportTimeout",
    "connect",
    "establishment_count",
    "listen",
]

logger = logging.getLogger(__name__)

# application error codes carried in RESET_STREAM
REFUSED = 0x1
INTERNAL = 0x2

# header, longest target, payload length and the largest payload
_MAX_FRAME_SIZE = 4 + 0xFFFF + 4 + MAX_PAYLOAD_SIZE

# QUIC maps TLS alerts onto 0x100-0x1ff
_CRYPTO_ERRORS = range(0x100, 0x200)


class TransportError(Exception):
    pass


class ConnectFailed(TransportError):
    pass


class ListenFailed(TransportError):
    pass


class TlsFailed(TransportError):
    pass


class TransportTimeout(TransportError):
    pass


class HandshakeTimeout(ConnectFailed, TransportTimeout):
    pass


class StreamReset(TransportError):
    pass


class FramingError(TransportError):
    pass


class EndpointAddr(BaseModel):
    model_config = ConfigDict(frozen=True)

    host: str = Field(min_length=1)
    port: int = Field(ge=0, le=0xFFFF)
    scheme: typing.Literal["quic"] = TARGET_SCHEME

    @classmethod
    def from_uri(cls, uri: str) -> "EndpointAddr":
        host, port = parse_target_uri(uri)
        return cls(host=host, port=port)

    @classmethod
    def parse(cls, text: str) -> "EndpointAddr":
        """Accept either a target URI or a bare `host:port`."""
        if "://" not in text:
            text = f"{TARGET_SCHEME}://{text}"
        return cls.from_uri(text)

    @property
    def uri(self) -> str:
        return format_target_uri(self.host, self.port)

    def __str__(self) -> str:
        return self.uri


_establishments: Counter[str] = Counter()


def establishment_count(addr: EndpointAddr | str) -> int:
    """Connections this process has completed to `addr` so far."""
    if isinstance(addr, str):
        addr = EndpointAddr.parse(addr)
    return _establishments[addr.uri]


def _encode(e: Envelope) -> bytes:
    try:
        return encode_envelope(e)
    except EnvelopeError as err:
        raise FramingError(str(err)) from err


def _decode(data: bytes) -> Envelope:
    try:
        return decode_envelope(data)
    except EnvelopeError as err:
        raise FramingError(str(err)) from err


class _ClientProtocol(QuicConnectionProtocol):
    def __init__(self, *args, **kwargs):
        super().__init__(*args, **kwargs)
        self._buffers: dict[int, bytearray] = {}
        self._replies: dict[int, asyncio.Future[bytes]] = {}
        self.terminated: ConnectionTerminated | None = None

    def start_exchange(self, data: bytes) -> asyncio.Future[bytes]:
        if self.terminated is not None:
            raise StreamReset(f"Connection closed: {self.terminated.reason_phrase}")
        stream_id = self._quic.get_next_available_stream_id()
        reply = asyncio.get_running_loop().create_future()
        self._replies[stream_id] = reply
        self._buffers[stream_id] = bytearray()
        self._quic.send_stream_data(stream_id, data, end_stream=True)
        self.transmit()
        return reply

    def abandon(self, reply: asyncio.Future[bytes]) -> None:
        for stream_id, pending in list(self._replies.items()):
            if pending is reply:
                del self._replies[stream_id]
                self._buffers.pop(stream_id, None)

    def peer_certificate(self) -> x509.Certificate | None:
        return self._quic.tls._peer_certificate

    def quic_event_received(self, event: QuicEvent) -> None:
        if isinstance(event, StreamDataReceived):
            buffer = self._buffers.get(event.stream_id)
            if buffer is None:
                return
            buffer.extend(event.data)
            if len(buffer) > _MAX_FRAME_SIZE:
                self._fail(event.stream_id, FramingError("Reply exceeds frame limit"))
            elif event.end_stream:
                self._buffers.pop(event.stream_id)
                reply = self._replies.pop(event.stream_id)
                if not reply.done():
                    reply.set_result(bytes(buffer))
        elif isinstance(event, QuicStreamReset):
            self._fail(
                event.stream_id,
                StreamReset(f"Stream {event.stream_id} reset ({event.error_code:#x})"),
            )
        elif isinstance(event, ConnectionTerminated):
            self.terminated = event
            for stream_id in list(self._replies):
                self._fail(
                    stream_id, StreamReset(f"Connection closed: {event.reason_phrase}")
                )

    def _fail(self, stream_id: int, error: TransportError) -> None:
        self._buffers.pop(stream_id, None)
        reply = self._replies.pop(stream_id, None)
        if reply is not None and not reply.done():
            reply.set_exception(error)


class Channel:
    """An established connection to one peer.

    Only `connect` builds channels, so nothing can be sent before the handshake
    has completed.
    """

    def __init__(
        self,
        addr: EndpointAddr,
        protocol: _ClientProtocol,
        exit_stack: contextlib.AsyncExitStack,
    ):
        self.addr = addr
        self._protocol = protocol
        self._exit_stack = exit_stack

    @property
    def establishment_count(self) -> int:
        return establishment_count(self.addr)

    @property
    def closed(self) -> bool:
        return self._protocol.terminated is not None

    async def exchange(self, e: Envelope, timeout: float | None = None) -> Envelope:
        """Send `e` on a fresh stream and wait for the single reply envelope."""
        if timeout is None:
            timeout = config_provider.get().exchange_timeout
        reply = self._protocol.start_exchange(_encode(e))
        try:
            data = await asyncio.wait_for(reply, timeout)
        except asyncio.CancelledError:
            self._protocol.abandon(reply)
            raise
        except asyncio.TimeoutError:
            self._protocol.abandon(reply)
            raise TransportTimeout(
                f"No reply from {self.addr} within {timeout}s"
            ) from None
        if not data:
            raise StreamReset(f"{self.addr} ended the stream without a reply")
        return _decode(data)

    async def close(self) -> None:
        await self._exit_stack.aclose()

    async def __aenter__(self) -> "Channel":
        return self

    async def __aexit__(self, *exc_info) -> None:
        await self.close()


def _client_configuration(
    ca_file: Path | str | None,
    ca_data: bytes | None,
    insecure: bool,
    pinned: bool = False,
) -> QuicConfiguration:
    config = config_provider.get()
    configuration = QuicConfiguration(
        is_client=True,
        alpn_protocols=[config.alpn],
        idle_timeout=config.idle_timeout,
    )
    if insecure or (pinned and ca_file is None and ca_data is None):
        configuration.verify_mode = ssl.CERT_NONE
    elif ca_file is not None or ca_data is not None:
        configuration.load_verify_locations(
            cafile=str(ca_file) if ca_file is not None else None,
            cadata=ca_data,
        )
    return configuration


async def connect(
    addr: EndpointAddr | str,
    *,
    ca_file: Path | str | None = None,
    ca_data: bytes | None = None,
    insecure: bool = False,
    pin_sha256: str | None = None,
    timeout: float | None = None,
) -> Channel:
    """Establish a channel to `addr`, verifying the server certificate.

    Without `ca_file`/`ca_data` the system trust store is used. `insecure`
    skips verification altogether. With `pin_sha256` (hex, `:` separators allowed)
    the server's leaf certificate must have that SHA-256 fingerprint; the pin
    stands in for the trust store unless a CA is given as well.

    Raises ValueError for a malformed pin and TlsFailed when the pin does not match.
    """
    if isinstance(addr, str):
        addr = EndpointAddr.parse(addr)
    if timeout is None:
        timeout = config_provider.get().connect_timeout
    pin = parse_fingerprint(pin_sha256) if pin_sha256 is not None else None
    configuration = _client_configuration(
        ca_file, ca_data, insecure, pinned=pin is not None
    )

    created: list[_ClientProtocol] = []

    def create_protocol(*args, **kwargs) -> _ClientProtocol:
        protocol = _ClientProtocol(*args, **kwargs)
        created.append(protocol)
        return protocol

    exit_stack = contextlib.AsyncExitStack()
    try:
        protocol = await asyncio.wait_for(
            exit_stack.enter_async_context(
                quic_connect(
                    addr.host,
                    addr.port,
                    configuration=configuration,
                    create_protocol=create_protocol,
                )
            ),
            timeout,
        )
    except asyncio.TimeoutError:
        await exit_stack.aclose()
        raise HandshakeTimeout(f"No handshake with {addr} within {timeout}s") from None
    except (ConnectionError, OSError) as err:
        await exit_stack.aclose()
        terminated = created[0].terminated if created else None
        if terminated is not None and terminated.error_code in _CRYPTO_ERRORS:
            raise TlsFailed(
                f"TLS handshake with {addr} failed: {terminated.reason_phrase}"
            ) from err
        raise ConnectFailed(f"Unable to connect to {addr}: {err}") from err

    if pin is not None:
        try:
            _check_pin(protocol, pin, addr)
        except TlsFailed:
            await exit_stack.aclose()
            raise

    _establishments[addr.uri] += 1
    logger.info(f"Connected to {addr}")
    return Channel(addr, protocol, exit_stack)


def _check_pin(protocol: _ClientProtocol, pin: bytes, addr: EndpointAddr) -> None:
    certificate = protocol.peer_certificate()
    if certificate is None:
        raise TlsFailed(f"{addr} presented no certificate to check the pin against")
    seen = fingerprint_sha256(certificate)
    if not hmac.compare_digest(bytes.fromhex(seen), pin):
        raise TlsFailed(f"Certificate of {addr} does not match the pin (got {seen})")
    logger.debug(f"Certificate pin matched for {addr}")


class Exchange:
    """One request received by a listener, answered by `reply` or `reset`."""

    def __init__(
        self, envelope: Envelope, connection: "_ServerProtocol", stream_id: int
    ):
        self.envelope = envelope
        self.connection = connection
        self.stream_id = stream_id
        self.answered = False

    def reply(self, e: Envelope) -> None:
        data = _encode(e)
        self._answer()
        self.connection.send_reply(self.stream_id, data)

    def reset(self, error_code: int = REFUSED) -> None:
        self._answer()
        self.connection.reset(self.stream_id, error_code)

    def _answer(self) -> None:
        if self.answered:
            raise RuntimeError(f"Stream {self.stream_id} was already answered")
        self.answered = True


class _ServerProtocol(QuicConnectionProtocol):
    def __init__(self, *args, listener: "Listener", **kwargs):
        super().__init__(*args, **kwargs)
        self._listener = listener
        self._buffers: dict[int, bytearray] = {}
        self.closed = False

    def send_reply(self, stream_id: int, data: bytes) -> None:
        if self.closed:
            logger.debug(f"Dropping reply on stream {stream_id}, connection closed")
            return
        self._quic.send_stream_data(stream_id, data, end_stream=True)
        self.transmit()

    def reset(self, stream_id: int, error_code: int) -> None:
        if self.closed:
            return
        self._quic.reset_stream(stream_id, error_code)
        self.transmit()

    def quic_event_received(self, event: QuicEvent) -> None:
        if isinstance(event, StreamDataReceived):
            buffer = self._buffers.setdefault(event.stream_id, bytearray())
            buffer.extend(event.data)
            if len(buffer) > _MAX_FRAME_SIZE:
                self._buffers.pop(event.stream_id)
                logger.warning(f"Stream {event.stream_id} exceeds frame limit")
                self.reset(event.stream_id, REFUSED)
            elif event.end_stream:
                self._buffers.pop(event.stream_id)
                self._on_request(event.stream_id, bytes(buffer))
        elif isinstance(event, QuicStreamReset):
            self._buffers.pop(event.stream_id, None)
        elif isinstance(event, ConnectionTerminated):
            self.closed = True
            self._buffers.clear()
            self._listener._connection_lost(self)

    def _on_request(self, stream_id: int, data: bytes) -> None:
        try:
            envelope = decode_envelope(data)
        except EnvelopeError as err:
            logger.warning(f"Undecodable request on stream {stream_id}: {err}")
            self.reset(stream_id, REFUSED)
            return
        self._listener._dispatch(Exchange(envelope, self, stream_id))


ExchangeHandler = typing.Callable[[Exchange], typing.Awaitable[None]]
DisconnectHandler = typing.Callable[[typing.Any], None]


class Listener:
    """A bound QUIC server handing out request exchanges.

    With a `handler` every exchange runs in its own task, otherwise exchanges
    queue up for `accept_exchange`.
    """

    def __init__(
        self,
        addr: EndpointAddr,
        handler: ExchangeHandler | None = None,
        on_disconnect: DisconnectHandler | None = None,
    ):
        self.addr = addr
        self._handler = handler
        self._on_disconnect = on_disconnect
        self._queue: asyncio.Queue[Exchange] = asyncio.Queue()
        self._tasks: set[asyncio.Task] = set()
        self._server: QuicServer | None = None

    @property
    def uri(self) -> str:
        return self.addr.uri

    async def accept_exchange(self) -> tuple[Envelope, typing.Callable]:
        """Wait for the next request, returns it with its reply function."""
        exchange = await self._queue.get()
        return exchange.envelope, exchange.reply

    async def next_exchange(self) -> Exchange:
        return await self._queue.get()

    def close(self) -> None:
        if self._server is not None:
            self._server.close()
            self._server = None
        for task in self._tasks:
            task.cancel()
        logger.info(f"Stopped listening on {self.addr}")

    async def serve_forever(self) -> None:
        try:
            await asyncio.Future()
        finally:
            self.close()

    async def __aenter__(self) -> "Listener":
        return self

    async def __aexit__(self, *exc_info) -> None:
        self.close()

    def _dispatch(self, exchange: Exchange) -> None:
        if self._handler is None:
            self._queue.put_nowait(exchange)
            return
        task = asyncio.get_running_loop().create_task(self._handle(exchange))
        self._tasks.add(task)
        task.add_done_callback(self._tasks.discard)

    async def _handle(self, exchange: Exchange) -> None:
        try:
            await self._handler(exchange)
        except Exception:
            logger.exception(f"Handler failed on stream {exchange.stream_id}")
            if not exchange.answered:
                exchange.reset(INTERNAL)

    def _connection_lost(self, connection: _ServerProtocol) -> None:
        if self._on_disconnect is not None:
            self._on_disconnect(connection)


async def listen(
    addr: EndpointAddr | str,
    identity: TlsIdentity,
    *,
    handler: ExchangeHandler | None = None,
    on_disconnect: DisconnectHandler | None = None,
) -> Listener:
    """Bind a QUIC server on `addr` (port 0 picks a free port)."""
    if isinstance(addr, str):
        addr = EndpointAddr.parse(addr)
    config = config_provider.get()
    configuration = QuicConfiguration(
        is_client=False,
        alpn_protocols=[config.alpn],
        idle_timeout=config.idle_timeout,
    )
    certificates = identity.certificates()
    configuration.certificate = certificates[0]
    configuration.certificate_chain = certificates[1:]
    configuration.private_key = identity.private_key()

    listener = Listener(addr, handler=handler, on_disconnect=on_disconnect)
    try:
        server = await serve(
            addr.host,
            addr.port,
            configuration=configuration,
            create_protocol=functools.partial(_ServerProtocol, listener=listener),
        )
    except OSError as err:
        raise ListenFailed(f"Unable to listen on {addr}: {err}") from err

    listener._server = server
    if addr.port == 0:
        port = server._transport.get_extra_info("sockname")[1]
        listener.addr = addr.model_copy(update={"port": port})
    logger.info(f"Listening on {listener.addr}")
    return listener


class ChannelPool:
    """One channel per peer URI, opened on first use and reopened once closed."""

    def __init__(self, **connect_kwargs):
        self._connect_kwargs = connect_kwargs
        self._channels: dict[str, Channel] = {}
        self._locks: dict[str, asyncio.Lock] = {}

    async def get(self, uri: str) -> Channel:
        lock = self._locks.setdefault(uri, asyncio.Lock())
        async with lock:
            channel = self._channels.get(uri)
            if channel is None or channel.closed:
                channel = await connect(uri, **self._connect_kwargs)
                self._channels[uri] = channel
            return channel

    async def exchange(self, uri: str, e: Envelope) -> Envelope:
        channel = await self.get(uri)
        return await channel.exchange(e)

    async def close(self) -> None:
        channels, self._channels = self._channels, {}
        for channel in channels.values():
            await channel.close()

    async def __aenter__(self) -> "ChannelPool":
        return self

    async def __aexit__(self, *exc_info) -> None:
        await self.close()
