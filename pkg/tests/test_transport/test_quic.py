import asyncio
import socket

import pytest

from odoq.envelope import MAX_PAYLOAD_SIZE, Envelope, MsgType
from odoq.transport import (
    ChannelPool,
    ConnectFailed,
    EndpointAddr,
    Exchange,
    FramingError,
    ListenFailed,
    StreamReset,
    TlsFailed,
    TransportTimeout,
    connect,
    establishment_count,
    generate_test_pki,
    listen,
)
from odoq.transport.quic import INTERNAL

QUERY = Envelope(msg_type=MsgType.OBLIVIOUS_QUERY, payload=b"sealed query")


async def _echo(exchange: Exchange) -> None:
    exchange.reply(
        Envelope(
            msg_type=MsgType.OBLIVIOUS_RESPONSE,
            payload=exchange.envelope.payload[::-1],
        )
    )


@pytest.fixture(scope="function")
async def echo_listener(test_pki):
    listener = await listen("127.0.0.1:0", test_pki.identity, handler=_echo)
    async with listener:
        yield listener


def _free_udp_port() -> int:
    with socket.socket(socket.AF_INET, socket.SOCK_DGRAM) as sock:
        sock.bind(("127.0.0.1", 0))
        return sock.getsockname()[1]


async def test_exchange(echo_listener, test_pki):
    assert echo_listener.addr.port != 0

    async with await connect(echo_listener.uri, ca_data=test_pki.ca_pem) as channel:
        reply = await channel.exchange(QUERY)

    assert reply == Envelope(
        msg_type=MsgType.OBLIVIOUS_RESPONSE, payload=b"yreuq delaes"
    )


async def test_exchanges_share_one_connection(echo_listener, test_pki):
    before = establishment_count(echo_listener.addr)
    async with await connect(echo_listener.uri, ca_data=test_pki.ca_pem) as channel:
        replies = await asyncio.gather(
            *(
                channel.exchange(QUERY.model_copy(update={"payload": bytes([i])}))
                for i in range(10)
            )
        )
        assert channel.establishment_count == before + 1

    assert [reply.payload for reply in replies] == [bytes([i]) for i in range(10)]
    assert establishment_count(echo_listener.addr) == before + 1


async def test_ca_file(echo_listener, test_pki, tmp_path):
    ca_file = test_pki.write_ca(tmp_path / "ca.pem")
    async with await connect(echo_listener.uri, ca_file=ca_file) as channel:
        assert (await channel.exchange(QUERY)).msg_type == MsgType.OBLIVIOUS_RESPONSE


async def test_insecure(echo_listener):
    async with await connect(echo_listener.uri, insecure=True) as channel:
        assert (await channel.exchange(QUERY)).msg_type == MsgType.OBLIVIOUS_RESPONSE


async def test_unknown_ca_is_a_tls_failure(echo_listener):
    stranger = generate_test_pki(["127.0.0.1"])
    with pytest.raises(TlsFailed):
        await connect(echo_listener.uri, ca_data=stranger.ca_pem)


async def test_nothing_listening(test_pki):
    addr = EndpointAddr(host="127.0.0.1", port=_free_udp_port())
    with pytest.raises(ConnectFailed):
        await connect(addr, ca_data=test_pki.ca_pem, timeout=0.5)


async def test_port_in_use(echo_listener, test_pki):
    with pytest.raises(ListenFailed):
        await listen(echo_listener.addr, test_pki.identity)


async def test_accept_exchange_without_handler(test_pki):
    async with await listen("127.0.0.1:0", test_pki.identity) as listener:
        async with await connect(listener.uri, ca_data=test_pki.ca_pem) as channel:
            pending = asyncio.create_task(channel.exchange(QUERY))
            envelope, reply = await listener.accept_exchange()
            assert envelope == QUERY
            reply(Envelope(msg_type=MsgType.KEY_UPDATE, payload=b"config"))
            assert (await pending).msg_type == MsgType.KEY_UPDATE


async def test_reset_reaches_the_client(test_pki):
    async def refuse(exchange: Exchange) -> None:
        exchange.reset()

    async with await listen("127.0.0.1:0", test_pki.identity, handler=refuse) as ln:
        async with await connect(ln.uri, ca_data=test_pki.ca_pem) as channel:
            with pytest.raises(StreamReset):
                await channel.exchange(QUERY)
            assert not channel.closed


async def test_failing_handler_resets_the_stream(test_pki):
    async def broken(exchange: Exchange) -> None:
        raise RuntimeError("boom")

    async with await listen("127.0.0.1:0", test_pki.identity, handler=broken) as ln:
        async with await connect(ln.uri, ca_data=test_pki.ca_pem) as channel:
            with pytest.raises(StreamReset) as exc_info:
                await channel.exchange(QUERY)
            assert f"{INTERNAL:#x}" in str(exc_info.value)


async def test_empty_reply_is_a_reset(test_pki):
    async def hang_up(exchange: Exchange) -> None:
        exchange.answered = True
        exchange.connection.send_reply(exchange.stream_id, b"")

    async with await listen("127.0.0.1:0", test_pki.identity, handler=hang_up) as ln:
        async with await connect(ln.uri, ca_data=test_pki.ca_pem) as channel:
            with pytest.raises(StreamReset):
                await channel.exchange(QUERY)


async def test_undecodable_request_is_reset(echo_listener, test_pki):
    async with await connect(echo_listener.uri, ca_data=test_pki.ca_pem) as channel:
        with pytest.raises(StreamReset):
            await asyncio.wait_for(channel._protocol.start_exchange(b"junk"), 5)
        assert (await channel.exchange(QUERY)).msg_type == MsgType.OBLIVIOUS_RESPONSE


async def test_exchange_timeout(test_pki):
    async def never(exchange: Exchange) -> None:
        await asyncio.sleep(60)

    async with await listen("127.0.0.1:0", test_pki.identity, handler=never) as ln:
        async with await connect(ln.uri, ca_data=test_pki.ca_pem) as channel:
            with pytest.raises(TransportTimeout):
                await channel.exchange(QUERY, timeout=0.2)
            assert channel._protocol._replies == {}
            assert channel._protocol._buffers == {}


async def test_cancelled_exchange_forgets_its_stream(test_pki):
    async def never(exchange: Exchange) -> None:
        await asyncio.sleep(60)

    async with await listen("127.0.0.1:0", test_pki.identity, handler=never) as ln:
        async with await connect(ln.uri, ca_data=test_pki.ca_pem) as channel:
            pending = asyncio.create_task(channel.exchange(QUERY, timeout=30))
            await asyncio.sleep(0.1)
            pending.cancel()
            with pytest.raises(asyncio.CancelledError):
                await pending
            assert channel._protocol._replies == {}


async def test_pinned_certificate(echo_listener, test_pki):
    pin = test_pki.identity.fingerprint_sha256()
    async with await connect(echo_listener.uri, pin_sha256=pin) as channel:
        assert (await channel.exchange(QUERY)).msg_type == MsgType.OBLIVIOUS_RESPONSE


async def test_pin_accepts_colon_separated_upper_case(echo_listener, test_pki):
    digest = test_pki.identity.fingerprint_sha256().upper()
    pin = ":".join(digest[i : i + 2] for i in range(0, len(digest), 2))
    async with await connect(echo_listener.uri, pin_sha256=pin) as channel:
        assert not channel.closed


async def test_pin_mismatch_is_a_tls_failure(echo_listener, test_pki):
    stranger = generate_test_pki(["127.0.0.1"]).identity.fingerprint_sha256()
    before = establishment_count(echo_listener.addr)
    with pytest.raises(TlsFailed, match="does not match the pin"):
        await connect(echo_listener.uri, pin_sha256=stranger)
    assert establishment_count(echo_listener.addr) == before


async def test_pin_is_checked_on_top_of_the_ca(echo_listener, test_pki):
    stranger = generate_test_pki(["127.0.0.1"]).identity.fingerprint_sha256()
    with pytest.raises(TlsFailed):
        await connect(
            echo_listener.uri, ca_data=test_pki.ca_pem, pin_sha256=stranger
        )


@pytest.mark.parametrize("pin", ["not hex", "abcd", "00" * 33])
async def test_malformed_pin(echo_listener, pin):
    with pytest.raises(ValueError):
        await connect(echo_listener.uri, pin_sha256=pin)


async def test_oversized_envelope_is_a_framing_error(echo_listener, test_pki):
    too_big = QUERY.model_copy(update={"payload": b"\x00" * (MAX_PAYLOAD_SIZE + 1)})
    async with await connect(echo_listener.uri, ca_data=test_pki.ca_pem) as channel:
        with pytest.raises(FramingError):
            await channel.exchange(too_big)


async def test_disconnect_is_reported(test_pki):
    gone = asyncio.Event()
    listener = await listen(
        "127.0.0.1:0",
        test_pki.identity,
        handler=_echo,
        on_disconnect=lambda connection: gone.set(),
    )
    async with listener:
        channel = await connect(listener.uri, ca_data=test_pki.ca_pem)
        await channel.exchange(QUERY)
        await channel.close()
        await asyncio.wait_for(gone.wait(), 5)


async def test_channel_pool(echo_listener, test_pki):
    async with ChannelPool(ca_data=test_pki.ca_pem) as pool:
        first = await pool.get(echo_listener.uri)
        replies = await asyncio.gather(
            *(pool.exchange(echo_listener.uri, QUERY) for _ in range(5))
        )
        assert await pool.get(echo_listener.uri) is first
        assert len(replies) == 5

        await first.close()
        assert first.closed
        second = await pool.get(echo_listener.uri)
        assert second is not first
        assert (await second.exchange(QUERY)).msg_type == MsgType.OBLIVIOUS_RESPONSE


@pytest.mark.parametrize(
    "text,expected",
    [
        ("127.0.0.1:8853", ("127.0.0.1", 8853)),
        ("quic://resolver.example:443", ("resolver.example", 443)),
        ("[::1]:8443", ("::1", 8443)),
    ],
)
def test_endpoint_addr_parse(text, expected):
    addr = EndpointAddr.parse(text)
    assert (addr.host, addr.port) == expected
    assert EndpointAddr.from_uri(addr.uri) == addr
    assert str(addr) == addr.uri


@pytest.mark.parametrize("text", ["resolver", "https://resolver:443", "host:99999"])
def test_endpoint_addr_rejects(text):
    with pytest.raises(ValueError):
        EndpointAddr.parse(text)


async def test_channel_pool_passes_the_pin(echo_listener, test_pki):
    stranger = generate_test_pki(["127.0.0.1"]).identity.fingerprint_sha256()
    async with ChannelPool(pin_sha256=stranger) as pool:
        with pytest.raises(TlsFailed):
            await pool.exchange(echo_listener.uri, QUERY)
