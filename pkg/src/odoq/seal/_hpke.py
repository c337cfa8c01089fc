"""HPKE base mode (single-shot seal/open) composed from `cryptography` primitives."""

import struct
import typing
from abc import ABC

from cryptography.hazmat.primitives import hashes, hmac
from cryptography.hazmat.primitives.asymmetric import x448, x25519
from cryptography.hazmat.primitives.ciphers.aead import AESGCM, ChaCha20Poly1305
from cryptography.hazmat.primitives.kdf.hkdf import HKDFExpand

from odoq.seal._base import (
    AEAD_AES_128_GCM,
    AEAD_AES_256_GCM,
    AEAD_CHACHA20_POLY1305,
    KDF_HKDF_SHA256,
    KDF_HKDF_SHA384,
    KDF_HKDF_SHA512,
    KEM_X448_HKDF_SHA512,
    KEM_X25519_HKDF_SHA256,
    RandomSource,
    UnsupportedSuite,
)

__all__ = [
    "DEFAULT_SUITE",
    "Aead",
    "DhKem",
    "HpkeSuite",
    "Kdf",
    "get_aead",
    "get_suite",
]

_VERSION_LABEL = b"HPKE-v1"
_MODE_BASE = 0x00


class Kdf:
    def __init__(
        self, kdf_id: int, hash_factory: typing.Callable[[], hashes.HashAlgorithm]
    ):
        self.id = kdf_id
        self._hash_factory = hash_factory
        self.n_h = hash_factory().digest_size

    def extract(self, salt: bytes, ikm: bytes) -> bytes:
        # An empty salt is defined as n_h zero bytes.
        mac = hmac.HMAC(salt or bytes(self.n_h), self._hash_factory())
        mac.update(ikm)
        return mac.finalize()

    def expand(self, prk: bytes, info: bytes, length: int) -> bytes:
        return HKDFExpand(
            algorithm=self._hash_factory(), length=length, info=info
        ).derive(prk)

    def labeled_extract(
        self, suite_id: bytes, salt: bytes, label: bytes, ikm: bytes
    ) -> bytes:
        return self.extract(salt, _VERSION_LABEL + suite_id + label + ikm)

    def labeled_expand(
        self, suite_id: bytes, prk: bytes, label: bytes, info: bytes, length: int
    ) -> bytes:
        labeled_info = (
            struct.pack(">H", length) + _VERSION_LABEL + suite_id + label + info
        )
        return self.expand(prk, labeled_info, length)


class DhKem(ABC):
    """DHKEM over a Montgomery curve, with deterministic key derivation."""

    id: int
    n_secret: int
    n_pk: int
    n_sk: int
    kdf: Kdf
    _private_cls: typing.Any
    _public_cls: typing.Any

    @property
    def n_enc(self) -> int:
        return self.n_pk

    @property
    def suite_id(self) -> bytes:
        return b"KEM" + struct.pack(">H", self.id)

    def derive_key_pair(self, ikm: bytes) -> tuple[bytes, bytes]:
        dkp_prk = self.kdf.labeled_extract(self.suite_id, b"", b"dkp_prk", ikm)
        sk = self.kdf.labeled_expand(self.suite_id, dkp_prk, b"sk", b"", self.n_sk)
        return sk, self.public_key_of(sk)

    def generate_key_pair(self, rng: RandomSource) -> tuple[bytes, bytes]:
        return self.derive_key_pair(rng(self.n_sk))

    def public_key_of(self, sk: bytes) -> bytes:
        return self._private_cls.from_private_bytes(sk).public_key().public_bytes_raw()

    def encap(self, pk_r: bytes, rng: RandomSource) -> tuple[bytes, bytes]:
        sk_e, enc = self.generate_key_pair(rng)
        dh = self._private_cls.from_private_bytes(sk_e).exchange(
            self._public_cls.from_public_bytes(pk_r)
        )
        return self._extract_and_expand(dh, enc + pk_r), enc

    def decap(self, enc: bytes, sk_r: bytes) -> bytes:
        private = self._private_cls.from_private_bytes(sk_r)
        dh = private.exchange(self._public_cls.from_public_bytes(enc))
        pk_rm = private.public_key().public_bytes_raw()
        return self._extract_and_expand(dh, enc + pk_rm)

    def _extract_and_expand(self, dh: bytes, kem_context: bytes) -> bytes:
        eae_prk = self.kdf.labeled_extract(self.suite_id, b"", b"eae_prk", dh)
        return self.kdf.labeled_expand(
            self.suite_id, eae_prk, b"shared_secret", kem_context, self.n_secret
        )


class X25519Kem(DhKem):
    id = KEM_X25519_HKDF_SHA256
    n_secret = 32
    n_pk = 32
    n_sk = 32
    kdf = Kdf(KDF_HKDF_SHA256, hashes.SHA256)
    _private_cls = x25519.X25519PrivateKey
    _public_cls = x25519.X25519PublicKey


class X448Kem(DhKem):
    id = KEM_X448_HKDF_SHA512
    n_secret = 64
    n_pk = 56
    n_sk = 56
    kdf = Kdf(KDF_HKDF_SHA512, hashes.SHA512)
    _private_cls = x448.X448PrivateKey
    _public_cls = x448.X448PublicKey


class Aead:
    n_n = 12
    n_t = 16

    def __init__(self, aead_id: int, n_k: int, cipher_cls: typing.Any):
        self.id = aead_id
        self.n_k = n_k
        self._cipher_cls = cipher_cls

    def seal(self, key: bytes, nonce: bytes, aad: bytes, plaintext: bytes) -> bytes:
        return self._cipher_cls(key).encrypt(nonce, plaintext, aad)

    def open(self, key: bytes, nonce: bytes, aad: bytes, ciphertext: bytes) -> bytes:
        """Raises `cryptography.exceptions.InvalidTag` on any integrity failure."""
        return self._cipher_cls(key).decrypt(nonce, ciphertext, aad)


class HpkeSuite:
    def __init__(self, kem: DhKem, kdf: Kdf, aead: Aead):
        self.kem = kem
        self.kdf = kdf
        self.aead = aead

    @property
    def ids(self) -> tuple[int, int, int]:
        return self.kem.id, self.kdf.id, self.aead.id

    @property
    def suite_id(self) -> bytes:
        return b"HPKE" + struct.pack(">HHH", *self.ids)

    def __repr__(self) -> str:
        kem_id, kdf_id, aead_id = self.ids
        return f"HpkeSuite(kem={kem_id:#06x}, kdf={kdf_id:#06x}, aead={aead_id:#06x})"

    def __eq__(self, other: object) -> bool:
        return isinstance(other, HpkeSuite) and self.ids == other.ids

    def __hash__(self) -> int:
        return hash(self.ids)

    def _key_schedule(self, shared_secret: bytes, info: bytes) -> tuple[bytes, bytes]:
        sid = self.suite_id
        psk_id_hash = self.kdf.labeled_extract(sid, b"", b"psk_id_hash", b"")
        info_hash = self.kdf.labeled_extract(sid, b"", b"info_hash", info)
        context = bytes([_MODE_BASE]) + psk_id_hash + info_hash
        secret = self.kdf.labeled_extract(sid, shared_secret, b"secret", b"")
        key = self.kdf.labeled_expand(sid, secret, b"key", context, self.aead.n_k)
        base_nonce = self.kdf.labeled_expand(
            sid, secret, b"base_nonce", context, self.aead.n_n
        )
        return key, base_nonce

    def seal_base(
        self,
        pk_r: bytes,
        info: bytes,
        aad: bytes,
        plaintext: bytes,
        rng: RandomSource,
    ) -> tuple[bytes, bytes]:
        """Single-shot base mode seal, returns (enc, ciphertext)."""
        shared_secret, enc = self.kem.encap(pk_r, rng)
        key, base_nonce = self._key_schedule(shared_secret, info)
        # sequence number 0: the nonce is the base nonce itself
        return enc, self.aead.seal(key, base_nonce, aad, plaintext)

    def open_base(
        self,
        enc: bytes,
        sk_r: bytes,
        info: bytes,
        aad: bytes,
        ciphertext: bytes,
    ) -> bytes:
        """Raises ValueError (bad encapsulated key) or InvalidTag."""
        shared_secret = self.kem.decap(enc, sk_r)
        key, base_nonce = self._key_schedule(shared_secret, info)
        return self.aead.open(key, base_nonce, aad, ciphertext)


_KEMS: dict[int, DhKem] = {kem.id: kem for kem in (X25519Kem(), X448Kem())}
_KDFS: dict[int, Kdf] = {
    KDF_HKDF_SHA256: Kdf(KDF_HKDF_SHA256, hashes.SHA256),
    KDF_HKDF_SHA384: Kdf(KDF_HKDF_SHA384, hashes.SHA384),
    KDF_HKDF_SHA512: Kdf(KDF_HKDF_SHA512, hashes.SHA512),
}
_AEADS: dict[int, Aead] = {
    AEAD_AES_128_GCM: Aead(AEAD_AES_128_GCM, 16, AESGCM),
    AEAD_AES_256_GCM: Aead(AEAD_AES_256_GCM, 32, AESGCM),
    AEAD_CHACHA20_POLY1305: Aead(AEAD_CHACHA20_POLY1305, 32, ChaCha20Poly1305),
}


def get_aead(aead_id: int) -> Aead:
    try:
        return _AEADS[aead_id]
    except KeyError:
        raise UnsupportedSuite(f"Unsupported AEAD id {aead_id:#06x}") from None


def get_suite(kem_id: int, kdf_id: int, aead_id: int) -> HpkeSuite:
    kem = _KEMS.get(kem_id)
    if kem is None:
        raise UnsupportedSuite(f"Unsupported KEM id {kem_id:#06x}")
    kdf = _KDFS.get(kdf_id)
    if kdf is None:
        raise UnsupportedSuite(f"Unsupported KDF id {kdf_id:#06x}")
    return HpkeSuite(kem, kdf, get_aead(aead_id))


DEFAULT_SUITE = get_suite(KEM_X25519_HKDF_SHA256, KDF_HKDF_SHA256, AEAD_AES_128_GCM)
