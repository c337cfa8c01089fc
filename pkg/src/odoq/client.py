"""Client side state machine: seal the query, verify the sealed answer, and recover
once from a resolver key rotation.

Sans-IO: callers feed it envelopes and act on the returned outcomes, the simulator
and the QUIC binding drive it the same way.
"""

import hmac
import ipaddress
import logging
from enum import Enum

from pydantic import BaseModel, ConfigDict

from odoq.dns_wire import (
    DnsMessage,
    DnsName,
    DnsWireError,
    Rcode,
    RRType,
    a_addresses,
    decode_message,
    encode_message,
    make_query,
)
from odoq.envelope import (
    Envelope,
    EnvelopeError,
    MsgType,
    decode_envelope,
    encode_envelope,
    parse_target_uri,
)
from odoq.seal import (
    DecryptFailure,
    KeyConfig,
    MalformedBody,
    RandomSource,
    SealedResponse,
    SealError,
    SessionSecrets,
    decode_key_config,
    encode_sealed_request,
    open_response,
    seal_request,
    system_random,
)

__all__ = [
    "Answer",
    "ClientOutcome",
    "ClientSession",
    "ClientState",
    "NxDomain",
    "Reject",
    "RejectReason",
    "Retry",
    "SessionFinished",
    "on_envelope",
    "start_session",
]

logger = logging.getLogger(__name__)

MAX_QUERIES_PER_SESSION = 2


class SessionFinished(RuntimeError):
    """Raised when an envelope is fed to a session that already concluded."""


class ClientState(str, Enum):
    AWAITING_RESPONSE = "AwaitingResponse"
    DONE = "Done"
    FAILED = "Failed"


class RejectReason(str, Enum):
    DECRYPT_FAILURE = "DecryptFailure"
    MALFORMED_RESPONSE = "MalformedResponse"
    DOMAIN_MISMATCH = "DomainMismatch"
    NONCE_MISMATCH = "NonceMismatch"
    TXID_MISMATCH = "TxidMismatch"
    QUESTION_MISMATCH = "QuestionMismatch"
    REPEATED_KEY_UPDATE = "RepeatedKeyUpdate"
    BAD_KEY_UPDATE = "BadKeyUpdate"
    UNEXPECTED_MESSAGE = "UnexpectedMessage"
    SERVER_FAILURE = "ServerFailure"


class Answer(BaseModel):
    model_config = ConfigDict(frozen=True)

    addresses: tuple[ipaddress.IPv4Address, ...]
    ttl: int


class NxDomain(BaseModel):
    """A verified negative answer: the name does not exist."""

    model_config = ConfigDict(frozen=True)

    domain: DnsName


class Retry(BaseModel):
    model_config = ConfigDict(frozen=True)

    envelope: Envelope


class Reject(BaseModel):
    model_config = ConfigDict(frozen=True)

    reason: RejectReason
    detail: str = ""


ClientOutcome = Answer | NxDomain | Retry | Reject


class ClientSession(BaseModel):
    """Single-owner state of one resolution.

    The secrets are chosen once and reused verbatim for the retry after a
    KEY_UPDATE, only the resolver key (and HPKE's ephemeral key) changes.
    """

    domain: DnsName
    resolver_uri: str
    key_config: KeyConfig
    secrets: SessionSecrets
    query: DnsMessage
    query_wire: bytes
    state: ClientState = ClientState.AWAITING_RESPONSE
    retried: bool = False
    queries_sent: int = 0


def start_session(
    domain: DnsName | str,
    resolver_uri: str,
    key_config: KeyConfig,
    rng: RandomSource = system_random,
) -> tuple[ClientSession, Envelope]:
    if isinstance(domain, str):
        domain = DnsName.from_text(domain)
    domain.check()
    parse_target_uri(resolver_uri)
    _ = key_config.suite

    secrets = SessionSecrets.generate(key_config.aead_id, rng)
    query = make_query(domain, txid=int.from_bytes(rng(2), "big"))
    session = ClientSession(
        domain=domain,
        resolver_uri=resolver_uri,
        key_config=key_config,
        secrets=secrets,
        query=query,
        query_wire=encode_message(query),
    )
    envelope = _sealed_query(session, rng)
    logger.debug(
        f"Started session for {domain} via {resolver_uri}, key_id "
        f"{key_config.key_id}"
    )
    return session, envelope


def on_envelope(
    session: ClientSession,
    e: Envelope | bytes,
    rng: RandomSource = system_random,
) -> ClientOutcome:
    """Advance `session` with a reply relayed by the proxy.

    All protocol failures come back as `Reject`, the session is then Failed.
    """
    if session.state != ClientState.AWAITING_RESPONSE:
        raise SessionFinished(f"Session for {session.domain} is {session.state.value}")

    if isinstance(e, bytes):
        try:
            e = decode_envelope(e)
        except EnvelopeError as err:
            return _reject(session, RejectReason.MALFORMED_RESPONSE, str(err))

    if e.msg_type == MsgType.KEY_UPDATE:
        return _on_key_update(session, e, rng)
    if e.msg_type == MsgType.OBLIVIOUS_RESPONSE:
        return _on_response(session, e)
    return _reject(session, RejectReason.UNEXPECTED_MESSAGE, e.msg_type.name)


def _sealed_query(session: ClientSession, rng: RandomSource) -> Envelope:
    sealed = seal_request(session.key_config, session.query_wire, session.secrets, rng)
    envelope = Envelope(
        msg_type=MsgType.OBLIVIOUS_QUERY,
        target_uri=session.resolver_uri,
        payload=encode_sealed_request(sealed),
    )
    # fail here rather than at the transport if the payload can not be framed
    encode_envelope(envelope)
    session.queries_sent += 1
    assert session.queries_sent <= MAX_QUERIES_PER_SESSION
    return envelope


def _on_key_update(
    session: ClientSession, e: Envelope, rng: RandomSource
) -> ClientOutcome:
    if session.retried:
        return _reject(session, RejectReason.REPEATED_KEY_UPDATE)
    try:
        config = decode_key_config(e.payload)
    except SealError as err:
        return _reject(session, RejectReason.BAD_KEY_UPDATE, str(err))
    if config.aead_id != session.secrets.aead_id:
        return _reject(
            session,
            RejectReason.BAD_KEY_UPDATE,
            f"AEAD changed from {session.secrets.aead_id:#06x} "
            f"to {config.aead_id:#06x}",
        )

    logger.info(
        f"Resolver published key_id {config.key_id} (had {session.key_config.key_id}),"
        f" retrying {session.domain} on the same connection"
    )
    session.key_config = config
    session.retried = True
    return Retry(envelope=_sealed_query(session, rng))


def _on_response(session: ClientSession, e: Envelope) -> ClientOutcome:
    try:
        response_wire, domain, nonce = open_response(
            session.secrets, SealedResponse(ciphertext=e.payload)
        )
    except DecryptFailure as err:
        return _reject(session, RejectReason.DECRYPT_FAILURE, str(err))
    except MalformedBody as err:
        return _reject(session, RejectReason.MALFORMED_RESPONSE, str(err))

    if not domain.matches(session.domain):
        return _reject(
            session, RejectReason.DOMAIN_MISMATCH, f"{domain} != {session.domain}"
        )
    if not hmac.compare_digest(nonce, session.secrets.nonce):
        return _reject(session, RejectReason.NONCE_MISMATCH)

    try:
        response = decode_message(response_wire)
    except DnsWireError as err:
        return _reject(session, RejectReason.MALFORMED_RESPONSE, str(err))
    if not response.is_response:
        return _reject(session, RejectReason.MALFORMED_RESPONSE, "QR bit not set")
    if response.txid != session.query.txid:
        return _reject(session, RejectReason.TXID_MISMATCH)
    if not _same_question(response, session.query):
        return _reject(session, RejectReason.QUESTION_MISMATCH)

    if response.rcode == Rcode.NXDOMAIN:
        session.state = ClientState.DONE
        logger.debug(f"Verified NXDOMAIN for {session.domain}")
        return NxDomain(domain=session.domain)
    if response.rcode != Rcode.NOERROR:
        return _reject(
            session, RejectReason.SERVER_FAILURE, f"rcode {response.rcode}"
        )

    owner = response.question.name
    ttl = min(
        (
            record.ttl
            for record in response.answers
            if record.rtype == RRType.A and record.name.matches(owner)
        ),
        default=0,
    )
    session.state = ClientState.DONE
    answer = Answer(addresses=tuple(a_addresses(response)), ttl=ttl)
    logger.debug(f"Verified {len(answer.addresses)} address(es) for {session.domain}")
    return answer


def _same_question(response: DnsMessage, query: DnsMessage) -> bool:
    return (
        response.question.name.matches(query.question.name)
        and response.question.qtype == query.question.qtype
        and response.question.qclass == query.question.qclass
    )


def _reject(session: ClientSession, reason: RejectReason, detail: str = "") -> Reject:
    session.state = ClientState.FAILED
    logger.warning(f"Rejected reply for {session.domain}: {reason.value} {detail}")
    return Reject(reason=reason, detail=detail)
