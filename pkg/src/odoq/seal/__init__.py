from odoq.seal._base import (
    AEAD_AES_128_GCM,
    AEAD_AES_256_GCM,
    AEAD_CHACHA20_POLY1305,
    CLIENT_NONCE_SIZE,
    KDF_HKDF_SHA256,
    KDF_HKDF_SHA384,
    KDF_HKDF_SHA512,
    KEM_X448_HKDF_SHA512,
    KEM_X25519_HKDF_SHA256,
    DecryptFailure,
    KeyConfig,
    Malformed,
    MalformedBody,
    RandomSource,
    ResolverKeyPair,
    SealedRequest,
    SealedResponse,
    SealError,
    SessionSecrets,
    UnsupportedSuite,
    system_random,
)
from odoq.seal._hpke import DEFAULT_SUITE, HpkeSuite, get_aead, get_suite
from odoq.seal.request import (
    decode_key_config,
    decode_sealed_request,
    derive_keypair,
    encode_key_config,
    encode_sealed_request,
    generate_keypair,
    open_request,
    seal_request,
)
from odoq.seal.response import open_response, seal_response

__all__ = [
    "AEAD_AES_128_GCM",
    "AEAD_AES_256_GCM",
    "AEAD_CHACHA20_POLY1305",
    "CLIENT_NONCE_SIZE",
    "DEFAULT_SUITE",
    "KDF_HKDF_SHA256",
    "KDF_HKDF_SHA384",
    "KDF_HKDF_SHA512",
    "KEM_X25519_HKDF_SHA256",
    "KEM_X448_HKDF_SHA512",
    "DecryptFailure",
    "HpkeSuite",
    "KeyConfig",
    "Malformed",
    "MalformedBody",
    "RandomSource",
    "ResolverKeyPair",
    "SealError",
    "SealedRequest",
    "SealedResponse",
    "SessionSecrets",
    "UnsupportedSuite",
    "decode_key_config",
    "decode_sealed_request",
    "derive_keypair",
    "encode_key_config",
    "encode_sealed_request",
    "generate_keypair",
    "get_aead",
    "get_suite",
    "open_request",
    "open_response",
    "seal_request",
    "seal_response",
    "system_random",
]
