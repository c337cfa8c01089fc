import ast
import inspect

import pydantic
import pytest

import odoq.proxy
from odoq.envelope import Envelope, MsgType, encode_envelope
from odoq.proxy import (
    Deny,
    DenyReason,
    Drop,
    Forward,
    Proxy,
    ProxyConfig,
    RelayToClient,
    UnknownSlot,
)

RESOLVER = "quic://resolver:8853"
OTHER_RESOLVER = "quic://other-resolver:8853"


def _query(target=RESOLVER, payload=b"sealed") -> Envelope:
    return Envelope(
        msg_type=MsgType.OBLIVIOUS_QUERY, target_uri=target, payload=payload
    )


RESPONSE = Envelope(msg_type=MsgType.OBLIVIOUS_RESPONSE, payload=b"answer")
KEY_UPDATE = Envelope(msg_type=MsgType.KEY_UPDATE, payload=b"config")


@pytest.fixture(scope="function")
def proxy() -> Proxy:
    return Proxy(ProxyConfig(allowed_resolvers=frozenset({RESOLVER})))


def test_forwards_stripped_query(proxy):
    client = object()
    decision = proxy.on_client_query(_query(), client)

    assert isinstance(decision, Forward)
    assert decision.resolver_uri == RESOLVER
    assert decision.envelope == Envelope(
        msg_type=MsgType.OBLIVIOUS_QUERY, payload=b"sealed"
    )
    assert decision.slot.client_channel is client
    assert proxy.live_slots == 1


def test_forwards_encoded_query(proxy):
    decision = proxy.on_client_query(encode_envelope(_query()), "client")
    assert isinstance(decision, Forward)
    assert decision.envelope.target_uri == ""


def test_payload_is_relayed_byte_for_byte(proxy):
    payload = bytes(range(256)) * 4
    decision = proxy.on_client_query(_query(payload=payload), "client")
    assert decision.envelope.payload == payload

    reply = Envelope(msg_type=MsgType.OBLIVIOUS_RESPONSE, payload=payload[::-1])
    relayed = proxy.on_resolver_reply(decision.slot.slot_id, reply)
    assert relayed.envelope == reply


def test_unlisted_resolver_is_denied(proxy):
    decision = proxy.on_client_query(_query(OTHER_RESOLVER), "client")
    assert decision == Deny(reason=DenyReason.NOT_ALLOWED, detail=repr(OTHER_RESOLVER))
    assert proxy.live_slots == 0


@pytest.mark.parametrize("data", [b"", b"\x02\x01\x00\x00", b"\x01\x01\x00\x05ab"])
def test_undecodable_query_is_denied(proxy, data):
    decision = proxy.on_client_query(data, "client")
    assert isinstance(decision, Deny)
    assert decision.reason == DenyReason.MALFORMED


@pytest.mark.parametrize("e", [RESPONSE, KEY_UPDATE])
def test_non_query_is_denied(proxy, e):
    assert proxy.on_client_query(e, "client").reason == DenyReason.WRONG_TYPE


def test_response_retires_slot(proxy):
    client = object()
    slot_id = proxy.on_client_query(_query(), client).slot.slot_id

    decision = proxy.on_resolver_reply(slot_id, encode_envelope(RESPONSE))
    assert decision == RelayToClient(
        client_channel=client, envelope=RESPONSE, slot_retired=True
    )
    assert proxy.live_slots == 0
    with pytest.raises(UnknownSlot):
        proxy.on_resolver_reply(slot_id, RESPONSE)


def test_key_update_keeps_slot_for_the_retry(proxy):
    client = object()
    slot_id = proxy.on_client_query(_query(), client).slot.slot_id

    decision = proxy.on_resolver_reply(slot_id, KEY_UPDATE)
    assert decision.client_channel is client
    assert not decision.slot_retired
    assert proxy.get_slot(slot_id).awaiting_retry

    retry = proxy.on_client_query(_query(payload=b"resealed"), client)
    assert retry.slot.slot_id == slot_id
    assert not retry.slot.awaiting_retry
    assert proxy.live_slots == 1

    assert proxy.on_resolver_reply(slot_id, RESPONSE).slot_retired
    assert proxy.live_slots == 0


def test_retry_slot_is_per_client(proxy):
    first, second = object(), object()
    slot_id = proxy.on_client_query(_query(), first).slot.slot_id
    proxy.on_resolver_reply(slot_id, KEY_UPDATE)

    other = proxy.on_client_query(_query(), second)
    assert other.slot.slot_id != slot_id
    assert proxy.live_slots == 2


def test_unused_retry_slots_do_not_fill_the_table(isolated_config):
    proxy = Proxy(ProxyConfig(allowed_resolvers=frozenset({RESOLVER}), max_slots=4))
    greedy = object()
    slot_ids = [proxy.on_client_query(_query(), greedy).slot.slot_id for _ in range(4)]
    for slot_id in slot_ids:
        proxy.on_resolver_reply(slot_id, KEY_UPDATE)

    assert proxy.live_slots == 1
    assert proxy.get_slot(slot_ids[-1]).awaiting_retry
    for slot_id in slot_ids[:-1]:
        with pytest.raises(UnknownSlot):
            proxy.get_slot(slot_id)
    assert isinstance(proxy.on_client_query(_query(), object()), Forward)


def test_parked_slots_are_kept_per_resolver(isolated_config):
    proxy = Proxy(
        ProxyConfig(allowed_resolvers=frozenset({RESOLVER, OTHER_RESOLVER}))
    )
    client = object()
    first = proxy.on_client_query(_query(), client).slot.slot_id
    second = proxy.on_client_query(_query(target=OTHER_RESOLVER), client).slot.slot_id
    proxy.on_resolver_reply(first, KEY_UPDATE)
    proxy.on_resolver_reply(second, KEY_UPDATE)

    assert proxy.get_slot(first).awaiting_retry
    assert proxy.get_slot(second).awaiting_retry


def test_slot_ids_are_unique(proxy):
    ids = {proxy.on_client_query(_query(), object()).slot.slot_id for _ in range(50)}
    assert len(ids) == 50


@pytest.mark.parametrize("reply", [b"junk", _query(target="")])
def test_bad_resolver_reply_is_dropped(proxy, reply):
    slot_id = proxy.on_client_query(_query(), "client").slot.slot_id
    assert isinstance(proxy.on_resolver_reply(slot_id, reply), Drop)
    assert proxy.live_slots == 0


def test_reply_for_unknown_slot(proxy):
    with pytest.raises(UnknownSlot):
        proxy.on_resolver_reply(12345, RESPONSE)


def test_resolver_timeout(proxy):
    slot_id = proxy.on_client_query(_query(), "client").slot.slot_id

    assert proxy.on_resolver_timeout(slot_id).reason == DenyReason.TIMEOUT
    assert proxy.live_slots == 0
    with pytest.raises(UnknownSlot):
        proxy.on_resolver_timeout(slot_id)


def test_slot_limit(isolated_config):
    proxy = Proxy(ProxyConfig(allowed_resolvers=frozenset({RESOLVER}), max_slots=2))
    first = proxy.on_client_query(_query(), "a")
    proxy.on_client_query(_query(), "b")

    assert proxy.on_client_query(_query(), "c").reason == DenyReason.BUSY
    proxy.on_resolver_reply(first.slot.slot_id, RESPONSE)
    assert isinstance(proxy.on_client_query(_query(), "c"), Forward)


def test_release_retires_client_slots(proxy):
    gone, stays = object(), object()
    for _ in range(3):
        proxy.on_client_query(_query(), gone)
    kept = proxy.on_client_query(_query(), stays)

    assert proxy.release(gone) == 3
    assert proxy.live_slots == 1
    assert proxy.get_slot(kept.slot.slot_id).client_channel is stays
    assert proxy.release(gone) == 0


def test_config_needs_a_resolver():
    with pytest.raises(pydantic.ValidationError):
        ProxyConfig(allowed_resolvers=frozenset())


def test_max_slots_default_comes_from_config(isolated_config):
    config = ProxyConfig(allowed_resolvers=frozenset({RESOLVER}))
    assert config.max_slots == isolated_config.max_relay_slots


def test_proxy_module_holds_no_keys():
    tree = ast.parse(inspect.getsource(odoq.proxy))
    imported = {
        node.module
        for node in ast.walk(tree)
        if isinstance(node, ast.ImportFrom) and node.module
    }
    assert not any(module.startswith("odoq.seal") for module in imported)
    assert "odoq.dns_wire" not in imported
