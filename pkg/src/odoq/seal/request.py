"""The sealed request: the DNS query, the client's symmetric key and nonce, sealed
to the resolver's public key with HPKE."""

import logging
import struct

from cryptography.exceptions import InvalidTag

from odoq.seal._base import (
    CLIENT_NONCE_SIZE,
    DecryptFailure,
    KeyConfig,
    Malformed,
    MalformedBody,
    RandomSource,
    ResolverKeyPair,
    SealedRequest,
    SessionSecrets,
    UnsupportedSuite,
    system_random,
)
from odoq.seal._hpke import DEFAULT_SUITE, HpkeSuite, get_suite

__all__ = [
    "REQUEST_INFO",
    "decode_key_config",
    "decode_sealed_request",
    "derive_keypair",
    "encode_key_config",
    "encode_sealed_request",
    "generate_keypair",
    "open_request",
    "request_aad",
    "seal_request",
]

logger = logging.getLogger(__name__)

REQUEST_INFO = b"odoq query"
_REQUEST_AAD_TAG = 0x01

_KEY_CONFIG_HEADER = struct.Struct(">BHHHH")
_SEALED_REQUEST_HEAD = struct.Struct(">BH")
_U16 = struct.Struct(">H")
_U32 = struct.Struct(">I")

SuiteLike = HpkeSuite | tuple[int, int, int]


def _resolve_suite(suite: SuiteLike) -> HpkeSuite:
    if isinstance(suite, HpkeSuite):
        return suite
    return get_suite(*suite)


def derive_keypair(suite: SuiteLike, key_id: int, ikm: bytes) -> ResolverKeyPair:
    suite = _resolve_suite(suite)
    private_key, public_key = suite.kem.derive_key_pair(ikm)
    kem_id, kdf_id, aead_id = suite.ids
    config = KeyConfig(
        key_id=key_id,
        kem_id=kem_id,
        kdf_id=kdf_id,
        aead_id=aead_id,
        public_key=public_key,
    )
    return ResolverKeyPair(config=config, private_key=private_key)


def generate_keypair(
    suite: SuiteLike = DEFAULT_SUITE,
    key_id: int = 0,
    rng: RandomSource = system_random,
) -> ResolverKeyPair:
    suite = _resolve_suite(suite)
    return derive_keypair(suite, key_id, rng(suite.kem.n_sk))


def encode_key_config(config: KeyConfig) -> bytes:
    return (
        _KEY_CONFIG_HEADER.pack(
            config.key_id,
            config.kem_id,
            config.kdf_id,
            config.aead_id,
            len(config.public_key),
        )
        + config.public_key
    )


def decode_key_config(data: bytes) -> KeyConfig:
    if len(data) < _KEY_CONFIG_HEADER.size:
        raise Malformed(f"Key config needs {_KEY_CONFIG_HEADER.size} header bytes")
    key_id, kem_id, kdf_id, aead_id, pk_len = _KEY_CONFIG_HEADER.unpack_from(data)
    public_key = data[_KEY_CONFIG_HEADER.size :]
    if len(public_key) != pk_len:
        raise Malformed(
            f"Key config declares {pk_len} public key bytes, carries {len(public_key)}"
        )
    config = KeyConfig(
        key_id=key_id,
        kem_id=kem_id,
        kdf_id=kdf_id,
        aead_id=aead_id,
        public_key=public_key,
    )
    _ = config.suite  # raises UnsupportedSuite on unknown ids or a mis-sized key
    return config


def encode_sealed_request(q: SealedRequest) -> bytes:
    return b"".join(
        [
            _SEALED_REQUEST_HEAD.pack(q.key_id, len(q.enc)),
            q.enc,
            _U32.pack(len(q.ciphertext)),
            q.ciphertext,
        ]
    )


def decode_sealed_request(data: bytes) -> SealedRequest:
    try:
        key_id, enc_len = _SEALED_REQUEST_HEAD.unpack_from(data)
        offset = _SEALED_REQUEST_HEAD.size
        enc = data[offset : offset + enc_len]
        offset += enc_len
        (ct_len,) = _U32.unpack_from(data, offset)
        offset += _U32.size
    except struct.error as e:
        raise Malformed(f"Sealed request cut short: {e}") from None
    ciphertext = data[offset:]
    if len(enc) != enc_len or len(ciphertext) != ct_len:
        raise Malformed("Sealed request lengths do not match its content")
    return SealedRequest(key_id=key_id, enc=enc, ciphertext=ciphertext)


def request_aad(key_id: int) -> bytes:
    return bytes([_REQUEST_AAD_TAG, key_id])


def _pack_request_body(query_wire: bytes, secrets: SessionSecrets) -> bytes:
    return b"".join(
        [
            bytes([len(secrets.sym_key)]),
            secrets.sym_key,
            bytes([len(secrets.nonce)]),
            secrets.nonce,
            _U16.pack(len(query_wire)),
            query_wire,
        ]
    )


def _unpack_request_body(body: bytes, sym_key_size: int) -> tuple[bytes, bytes, bytes]:
    try:
        offset = 0
        sym_key_len = body[offset]
        sym_key = body[offset + 1 : offset + 1 + sym_key_len]
        offset += 1 + sym_key_len
        nonce_len = body[offset]
        nonce = body[offset + 1 : offset + 1 + nonce_len]
        offset += 1 + nonce_len
        (dns_len,) = _U16.unpack_from(body, offset)
        offset += _U16.size
    except (IndexError, struct.error):
        raise MalformedBody("Request body cut short") from None
    query_wire = body[offset:]
    if sym_key_len != sym_key_size or len(sym_key) != sym_key_len:
        raise MalformedBody(f"Request body sym_key must be {sym_key_size} bytes")
    if nonce_len != CLIENT_NONCE_SIZE or len(nonce) != nonce_len:
        raise MalformedBody(f"Request body nonce must be {CLIENT_NONCE_SIZE} bytes")
    if len(query_wire) != dns_len:
        raise MalformedBody("Request body query length does not match")
    return query_wire, sym_key, nonce


def seal_request(
    config: KeyConfig,
    query_wire: bytes,
    secrets: SessionSecrets,
    rng: RandomSource = system_random,
) -> SealedRequest:
    """Seal the query and `secrets` to the resolver key in `config`, HPKE base mode."""
    suite = config.suite
    if secrets.aead_id != config.aead_id:
        raise ValueError(
            f"Session secrets were made for AEAD {secrets.aead_id:#06x}, the key "
            f"config uses {config.aead_id:#06x}"
        )
    body = _pack_request_body(query_wire, secrets)
    enc, ciphertext = suite.seal_base(
        config.public_key,
        REQUEST_INFO,
        request_aad(config.key_id),
        body,
        rng,
    )
    return SealedRequest(key_id=config.key_id, enc=enc, ciphertext=ciphertext)


def open_request(
    keypair: ResolverKeyPair, q: SealedRequest
) -> tuple[bytes, SessionSecrets]:
    """Recover (query wire, secrets) or raise DecryptFailure/MalformedBody.

    Wrong key id, wrong private key and tag mismatch all raise the same error.
    """
    config = keypair.config
    try:
        if q.key_id != config.key_id:
            raise DecryptFailure()
        suite = config.suite
        body = suite.open_base(
            q.enc,
            keypair.private_key,
            REQUEST_INFO,
            request_aad(q.key_id),
            q.ciphertext,
        )
    except (DecryptFailure, UnsupportedSuite, InvalidTag, ValueError):
        raise DecryptFailure("Unable to open sealed request") from None

    query_wire, sym_key, nonce = _unpack_request_body(body, suite.aead.n_k)
    secrets = SessionSecrets(sym_key=sym_key, nonce=nonce, aead_id=config.aead_id)
    return query_wire, secrets
