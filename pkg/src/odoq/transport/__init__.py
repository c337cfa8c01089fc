from odoq.transport.quic import (
    Channel,
    ChannelPool,
    ConnectFailed,
    EndpointAddr,
    Exchange,
    FramingError,
    HandshakeTimeout,
    ListenFailed,
    Listener,
    StreamReset,
    TlsFailed,
    TransportError,
    TransportTimeout,
    connect,
    establishment_count,
    listen,
)
from odoq.transport.tls import (
    TestPki,
    TlsIdentity,
    fingerprint_sha256,
    generate_test_pki,
    parse_fingerprint,
)

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
    "TestPki",
    "TlsFailed",
    "TlsIdentity",
    "TransportError",
    "TransportTimeout",
    "connect",
    "establishment_count",
    "fingerprint_sha256",
    "generate_test_pki",
    "listen",
    "parse_fingerprint",
]
