"""Resolver side: open the sealed request, answer from the zone, seal the answer
under the client's key. A request that does not open under the current key gets a
KEY_UPDATE carrying the current public key config instead.
"""

import logging
import threading
from collections import deque

from pydantic import BaseModel, ConfigDict, Field, PrivateAttr

from odoq.config import config_provider
from odoq.dns_wire import (
    DnsWireError,
    Rcode,
    RRClass,
    RRType,
    decode_message,
    encode_message,
    make_a_response,
    make_response,
)
from odoq.envelope import (
    Envelope,
    EnvelopeError,
    MsgType,
    decode_envelope,
)
from odoq.seal import (
    DecryptFailure,
    Malformed,
    MalformedBody,
    RandomSource,
    ResolverKeyPair,
    decode_sealed_request,
    encode_key_config,
    generate_keypair,
    open_request,
    seal_response,
    system_random,
)
from odoq.zone import ZoneStore, lookup, lookup_entry

__all__ = [
    "MalformedEnvelope",
    "MalformedQuery",
    "NonceCache",
    "ResolverError",
    "ResolverState",
    "handle_query",
    "lookup",
    "rotate_keys",
]

logger = logging.getLogger(__name__)


class ResolverError(Exception):
    pass


class MalformedEnvelope(ResolverError):
    """The input is not a decodable query envelope, nothing is sent back."""


class MalformedQuery(ResolverError):
    """The request opened but its DNS query does not decode."""


def _default_nonce_capacity() -> int:
    return config_provider.get().nonce_cache_capacity


class NonceCache:
    """Bounded set of seen client nonces, oldest evicted first."""

    def __init__(self, capacity: int | None = None):
        if capacity is None:
            capacity = _default_nonce_capacity()
        if capacity < 1:
            raise ValueError(f"Nonce cache capacity must be at least 1, got {capacity}")
        self.capacity = capacity
        self._order: deque[bytes] = deque()
        self._seen: set[bytes] = set()

    def __len__(self) -> int:
        return len(self._seen)

    def __contains__(self, nonce: bytes) -> bool:
        return nonce in self._seen

    def add(self, nonce: bytes) -> bool:
        """Record `nonce`, returning False if it was already present."""
        if nonce in self._seen:
            return False
        if len(self._order) >= self.capacity:
            self._seen.discard(self._order.popleft())
        self._order.append(nonce)
        self._seen.add(nonce)
        return True


class ResolverState(BaseModel):
    """Key pairs, zone and replay cache of one resolver.

    Holds nothing about clients: the resolver only ever talks to proxies.
    """

    model_config = ConfigDict(arbitrary_types_allowed=True)

    current: ResolverKeyPair
    previous: ResolverKeyPair | None = None
    zone: ZoneStore = Field(default_factory=ZoneStore)
    seen_nonces: NonceCache = Field(default_factory=NonceCache)

    _lock: threading.Lock = PrivateAttr(default_factory=threading.Lock)

    def key_pair(self) -> ResolverKeyPair:
        with self._lock:
            return self.current


def handle_query(state: ResolverState, e: Envelope | bytes) -> Envelope:
    """Answer one stripped query envelope.

    Raises MalformedEnvelope if `e` is not a decodable query envelope and
    MalformedQuery if the opened request does not carry a DNS query. Either way
    the caller sends nothing back.
    """
    if isinstance(e, bytes):
        try:
            e = decode_envelope(e)
        except EnvelopeError as err:
            raise MalformedEnvelope(str(err)) from err
    if e.msg_type != MsgType.OBLIVIOUS_QUERY:
        raise MalformedEnvelope(f"Expected a query, got {e.msg_type.name}")

    # rotation may happen concurrently, this request is served by one key pair
    keypair = state.key_pair()
    try:
        sealed = decode_sealed_request(e.payload)
        query_wire, secrets = open_request(keypair, sealed)
    except (Malformed, DecryptFailure, MalformedBody) as err:
        logger.warning(
            f"Unable to open request ({type(err).__name__}), publishing key_id "
            f"{keypair.config.key_id}"
        )
        return Envelope(
            msg_type=MsgType.KEY_UPDATE, payload=encode_key_config(keypair.config)
        )

    try:
        query = decode_message(query_wire)
    except DnsWireError as err:
        raise MalformedQuery(str(err)) from err
    if query.is_response:
        raise MalformedQuery("Opened request carries a response")

    with state._lock:
        fresh = state.seen_nonces.add(secrets.nonce)

    question = query.question
    if not fresh:
        logger.warning(f"Replayed nonce for txid {query.txid}, answering SERVFAIL")
        response = make_response(query, Rcode.SERVFAIL)
    elif question.qtype != RRType.A or question.qclass != RRClass.IN:
        logger.info(
            f"Unsupported question type {question.qtype}/{question.qclass}, "
            "answering NOTIMP"
        )
        response = make_response(query, Rcode.NOTIMP)
    else:
        entry = lookup_entry(state.zone, question.name)
        if entry is None:
            response = make_a_response(query, [], ttl=0)
        else:
            response = make_a_response(query, entry.rdatas, ttl=entry.ttl)
    logger.debug(f"Answering txid {query.txid} with rcode {response.rcode}")

    sealed_response = seal_response(secrets, encode_message(response), question.name)
    return Envelope(
        msg_type=MsgType.OBLIVIOUS_RESPONSE, payload=sealed_response.ciphertext
    )


def rotate_keys(
    state: ResolverState, rng: RandomSource = system_random
) -> ResolverState:
    """Replace the current key pair with a fresh one under the next key_id.

    The old pair moves to `previous` but is never used to open requests again.
    """
    with state._lock:
        old = state.current
        new_key_id = (old.config.key_id + 1) % 256
        state.current = generate_keypair(old.config.suite, new_key_id, rng)
        state.previous = old
    logger.info(f"Rotated resolver key: key_id {old.config.key_id} -> {new_key_id}")
    return state
