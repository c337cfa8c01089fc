import os
from typing import TYPE_CHECKING, Callable

from pydantic import BaseModel, ConfigDict, Field, model_validator

if TYPE_CHECKING:
    from odoq.seal._hpke import HpkeSuite

__all__ = [
    "AEAD_AES_128_GCM",
    "AEAD_AES_256_GCM",
    "AEAD_CHACHA20_POLY1305",
    "CLIENT_NONCE_SIZE",
    "DecryptFailure",
    "KDF_HKDF_SHA256",
    "KDF_HKDF_SHA384",
    "KDF_HKDF_SHA512",
    "KEM_X25519_HKDF_SHA256",
    "KEM_X448_HKDF_SHA512",
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
    "system_random",
]

KEM_X25519_HKDF_SHA256 = 0x0020
KEM_X448_HKDF_SHA512 = 0x0021
KDF_HKDF_SHA256 = 0x0001
KDF_HKDF_SHA384 = 0x0002
KDF_HKDF_SHA512 = 0x0003
AEAD_AES_128_GCM = 0x0001
AEAD_AES_256_GCM = 0x0002
AEAD_CHACHA20_POLY1305 = 0x0003

CLIENT_NONCE_SIZE = 16

RandomSource = Callable[[int], bytes]


def system_random(size: int) -> bytes:
    return os.urandom(size)


class SealError(Exception):
    pass


class UnsupportedSuite(SealError):
    pass


class DecryptFailure(SealError):
    pass


class MalformedBody(SealError):
    pass


class Malformed(SealError):
    pass


_BYTES_AS_BASE64 = ConfigDict(
    frozen=True,
    ser_json_bytes="base64",
    val_json_bytes="base64",
)


class KeyConfig(BaseModel):
    """The resolver's published HPKE public key and its algorithm identifiers."""

    model_config = _BYTES_AS_BASE64

    key_id: int = Field(ge=0, le=0xFF)
    kem_id: int = Field(default=KEM_X25519_HKDF_SHA256, ge=0, le=0xFFFF)
    kdf_id: int = Field(default=KDF_HKDF_SHA256, ge=0, le=0xFFFF)
    aead_id: int = Field(default=AEAD_AES_128_GCM, ge=0, le=0xFFFF)
    public_key: bytes

    @property
    def suite(self) -> "HpkeSuite":
        """The suite for the identifiers, checked against the public key size."""
        from odoq.seal._hpke import get_suite

        suite = get_suite(self.kem_id, self.kdf_id, self.aead_id)
        if len(self.public_key) != suite.kem.n_pk:
            raise UnsupportedSuite(
                f"Public key is {len(self.public_key)} bytes, KEM {self.kem_id:#06x} "
                f"uses {suite.kem.n_pk}"
            )
        return suite


class ResolverKeyPair(BaseModel):
    model_config = _BYTES_AS_BASE64

    config: KeyConfig
    private_key: bytes = Field(repr=False)


class SessionSecrets(BaseModel):
    """Per-query secrets chosen by the client: the response key and the nonce.

    `aead_id` is not transmitted, both ends take it from the resolver key config.
    """

    model_config = ConfigDict(frozen=True)

    sym_key: bytes = Field(repr=False)
    nonce: bytes = Field(min_length=CLIENT_NONCE_SIZE, max_length=CLIENT_NONCE_SIZE)
    aead_id: int = Field(default=AEAD_AES_128_GCM, ge=0, le=0xFFFF)

    @model_validator(mode="after")
    def _check_key_size(self) -> "SessionSecrets":
        from odoq.seal._hpke import get_aead

        aead = get_aead(self.aead_id)
        if len(self.sym_key) != aead.n_k:
            raise ValueError(
                f"sym_key must be {aead.n_k} bytes for AEAD {self.aead_id:#06x}"
            )
        return self

    @classmethod
    def generate(
        cls,
        aead_id: int = AEAD_AES_128_GCM,
        rng: RandomSource = system_random,
    ) -> "SessionSecrets":
        from odoq.seal._hpke import get_aead

        aead = get_aead(aead_id)
        return cls(sym_key=rng(aead.n_k), nonce=rng(CLIENT_NONCE_SIZE), aead_id=aead_id)


class SealedRequest(BaseModel):
    model_config = ConfigDict(frozen=True)

    key_id: int = Field(ge=0, le=0xFF)
    enc: bytes
    ciphertext: bytes


class SealedResponse(BaseModel):
    model_config = ConfigDict(frozen=True)

    ciphertext: bytes
