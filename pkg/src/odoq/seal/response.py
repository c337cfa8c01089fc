"""The sealed response: the DNS answer, the queried domain and the client nonce,
sealed under the symmetric key the client chose for this query."""

import struct

from cryptography.exceptions import InvalidTag
from cryptography.hazmat.primitives import hashes
from cryptography.hazmat.primitives.kdf.hkdf import HKDF

from odoq.dns_wire import DnsName, InvalidName
from odoq.seal._base import (
    DecryptFailure,
    MalformedBody,
    SealedResponse,
    SessionSecrets,
)
from odoq.seal._hpke import get_aead

__all__ = ["RESPONSE_AAD", "open_response", "response_nonce", "seal_response"]

RESPONSE_INFO = b"odoq response"
RESPONSE_AAD = b"\x02"

_U16 = struct.Struct(">H")


def response_nonce(secrets: SessionSecrets) -> bytes:
    """AEAD nonce for the single response sealed under `secrets.sym_key`."""
    aead = get_aead(secrets.aead_id)
    return HKDF(
        algorithm=hashes.SHA256(),
        length=aead.n_n,
        salt=secrets.nonce,
        info=RESPONSE_INFO,
    ).derive(secrets.sym_key)


def seal_response(
    secrets: SessionSecrets, response_wire: bytes, domain: DnsName
) -> SealedResponse:
    domain_text = domain.to_text().encode("ascii")
    body = b"".join(
        [
            bytes([len(secrets.nonce)]),
            secrets.nonce,
            bytes([len(domain_text)]),
            domain_text,
            _U16.pack(len(response_wire)),
            response_wire,
        ]
    )
    aead = get_aead(secrets.aead_id)
    ciphertext = aead.seal(secrets.sym_key, response_nonce(secrets), RESPONSE_AAD, body)
    return SealedResponse(ciphertext=ciphertext)


def open_response(
    secrets: SessionSecrets, m: SealedResponse
) -> tuple[bytes, DnsName, bytes]:
    """Returns (response wire, domain, nonce) as sealed by the resolver."""
    aead = get_aead(secrets.aead_id)
    if len(m.ciphertext) < aead.n_t:
        raise DecryptFailure("Unable to open sealed response")
    try:
        body = aead.open(
            secrets.sym_key, response_nonce(secrets), RESPONSE_AAD, m.ciphertext
        )
    except InvalidTag:
        raise DecryptFailure("Unable to open sealed response") from None

    try:
        offset = 0
        nonce_len = body[offset]
        nonce = body[offset + 1 : offset + 1 + nonce_len]
        offset += 1 + nonce_len
        domain_len = body[offset]
        domain_raw = body[offset + 1 : offset + 1 + domain_len]
        offset += 1 + domain_len
        (dns_len,) = _U16.unpack_from(body, offset)
        offset += _U16.size
    except (IndexError, struct.error):
        raise MalformedBody("Response body cut short") from None
    response_wire = body[offset:]
    if (
        len(nonce) != nonce_len
        or len(domain_raw) != domain_len
        or len(response_wire) != dns_len
    ):
        raise MalformedBody("Response body lengths do not match its content")
    try:
        domain = DnsName.from_text(domain_raw.decode("ascii"))
    except (UnicodeDecodeError, InvalidName) as e:
        raise MalformedBody(f"Response body domain is invalid: {e}") from None
    return response_wire, domain, nonce
