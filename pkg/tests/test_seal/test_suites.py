import itertools

import pytest
from cryptography.hazmat.primitives.asymmetric import x25519

from odoq.seal import (
    AEAD_AES_128_GCM,
    AEAD_AES_256_GCM,
    AEAD_CHACHA20_POLY1305,
    KDF_HKDF_SHA256,
    KDF_HKDF_SHA384,
    KDF_HKDF_SHA512,
    KEM_X448_HKDF_SHA512,
    KEM_X25519_HKDF_SHA256,
    DecryptFailure,
    SessionSecrets,
    UnsupportedSuite,
    derive_keypair,
    generate_keypair,
    get_suite,
    open_request,
    seal_request,
)
from odoq.utils.testing import seeded_random

ALL_SUITES = list(
    itertools.product(
        [KEM_X25519_HKDF_SHA256, KEM_X448_HKDF_SHA512],
        [KDF_HKDF_SHA256, KDF_HKDF_SHA384, KDF_HKDF_SHA512],
        [AEAD_AES_128_GCM, AEAD_AES_256_GCM, AEAD_CHACHA20_POLY1305],
    )
)


@pytest.mark.parametrize("ids", ALL_SUITES)
def test_request_roundtrip_for_every_suite(ids):
    rng = seeded_random(sum(ids))
    keypair = generate_keypair(ids, 9, rng)
    assert keypair.config.suite == get_suite(*ids)

    secrets = SessionSecrets.generate(keypair.config.aead_id, rng)
    sealed = seal_request(keypair.config, b"\x00query", secrets, rng)
    assert open_request(keypair, sealed) == (b"\x00query", secrets)


@pytest.mark.parametrize(
    "kem_id,key_size", [(KEM_X25519_HKDF_SHA256, 32), (KEM_X448_HKDF_SHA512, 56)]
)
def test_key_sizes(kem_id, key_size):
    keypair = generate_keypair((kem_id, KDF_HKDF_SHA256, AEAD_AES_128_GCM), 0)
    assert len(keypair.config.public_key) == key_size
    assert len(keypair.private_key) == key_size


def test_derive_keypair_is_deterministic():
    ids = (KEM_X25519_HKDF_SHA256, KDF_HKDF_SHA256, AEAD_AES_128_GCM)
    first = derive_keypair(ids, 1, b"\x07" * 32)
    assert first == derive_keypair(ids, 1, b"\x07" * 32)
    assert first != derive_keypair(ids, 1, b"\x08" * 32)


def test_derived_public_key_matches_private_key():
    keypair = generate_keypair()
    private = x25519.X25519PrivateKey.from_private_bytes(keypair.private_key)
    assert private.public_key().public_bytes_raw() == keypair.config.public_key


def test_suites_do_not_interoperate():
    rng = seeded_random(5)
    aes = generate_keypair(
        (KEM_X25519_HKDF_SHA256, KDF_HKDF_SHA256, AEAD_AES_128_GCM), 0, rng
    )
    sha512 = aes.model_copy(
        update={"config": aes.config.model_copy(update={"kdf_id": KDF_HKDF_SHA512})}
    )
    secrets = SessionSecrets.generate(rng=rng)
    sealed = seal_request(aes.config, b"query", secrets, rng)
    with pytest.raises(DecryptFailure):
        open_request(sha512, sealed)


@pytest.mark.parametrize(
    "ids",
    [
        (0x0010, KDF_HKDF_SHA256, AEAD_AES_128_GCM),
        (KEM_X25519_HKDF_SHA256, 0x0000, AEAD_AES_128_GCM),
        (KEM_X25519_HKDF_SHA256, KDF_HKDF_SHA256, 0xFFFF),
    ],
)
def test_unsupported_ids(ids):
    with pytest.raises(UnsupportedSuite):
        get_suite(*ids)
