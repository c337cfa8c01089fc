import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from odoq.dns_wire import encode_message, make_query
from odoq.seal import (
    AEAD_CHACHA20_POLY1305,
    DEFAULT_SUITE,
    KEM_X25519_HKDF_SHA256,
    DecryptFailure,
    KeyConfig,
    Malformed,
    MalformedBody,
    ResolverKeyPair,
    SealedRequest,
    SessionSecrets,
    UnsupportedSuite,
    decode_key_config,
    decode_sealed_request,
    encode_key_config,
    encode_sealed_request,
    generate_keypair,
    open_request,
    seal_request,
)
from odoq.seal.request import REQUEST_INFO, request_aad
from odoq.utils.testing import seeded_random

QUERY_WIRE = encode_message(make_query("example.com", txid=0x1234))
BODY_OVERHEAD = 1 + 16 + 1 + 16 + 2  # sym_key, nonce and query length prefixes
TAG_SIZE = 16


def test_generate_keypair_default_suite():
    keypair = generate_keypair()
    assert len(keypair.config.public_key) == 32
    assert len(keypair.private_key) == 32
    assert keypair.config.suite == DEFAULT_SUITE
    assert keypair.config.key_id == 0


def test_generate_keypair_is_random():
    assert generate_keypair().config.public_key != generate_keypair().config.public_key


def test_generate_keypair_is_reproducible_from_seed():
    first = generate_keypair(DEFAULT_SUITE, 3, seeded_random(42))
    second = generate_keypair(DEFAULT_SUITE, 3, seeded_random(42))
    assert first == second


def test_generate_keypair_rejects_unsupported_aead():
    with pytest.raises(UnsupportedSuite):
        generate_keypair((KEM_X25519_HKDF_SHA256, 0x0001, 0xFFFF), 0)


def test_open_inverts_seal(resolver_keypair, rng):
    secrets = SessionSecrets.generate(rng=rng)
    sealed = seal_request(resolver_keypair.config, QUERY_WIRE, secrets, rng)

    assert open_request(resolver_keypair, sealed) == (QUERY_WIRE, secrets)
    assert sealed.key_id == resolver_keypair.config.key_id


def test_ciphertext_length(resolver_keypair, rng):
    secrets = SessionSecrets.generate(rng=rng)
    sealed = seal_request(resolver_keypair.config, QUERY_WIRE, secrets, rng)
    assert len(sealed.enc) == 32
    assert len(sealed.ciphertext) == BODY_OVERHEAD + len(QUERY_WIRE) + TAG_SIZE


def test_ephemeral_key_differs_per_seal(resolver_keypair, rng):
    secrets = SessionSecrets.generate(rng=rng)
    first = seal_request(resolver_keypair.config, QUERY_WIRE, secrets, rng)
    second = seal_request(resolver_keypair.config, QUERY_WIRE, secrets, rng)
    assert first.enc != second.enc
    assert first.ciphertext != second.ciphertext


def test_rotated_away_key_cannot_be_opened(resolver_keypair, rng):
    rotated = generate_keypair(DEFAULT_SUITE, resolver_keypair.config.key_id, rng)
    secrets = SessionSecrets.generate(rng=rng)
    sealed = seal_request(resolver_keypair.config, QUERY_WIRE, secrets, rng)
    with pytest.raises(DecryptFailure):
        open_request(rotated, sealed)


def test_key_id_mismatch_is_a_decrypt_failure(resolver_keypair, rng):
    secrets = SessionSecrets.generate(rng=rng)
    sealed = seal_request(resolver_keypair.config, QUERY_WIRE, secrets, rng)
    other_id = sealed.model_copy(update={"key_id": sealed.key_id + 1})
    with pytest.raises(DecryptFailure):
        open_request(resolver_keypair, other_id)


@pytest.mark.parametrize("sample", range(64))
def test_flipped_bit_is_rejected(resolver_keypair, sample):
    rng = seeded_random(sample)
    secrets = SessionSecrets.generate(rng=rng)
    sealed = seal_request(resolver_keypair.config, QUERY_WIRE, secrets, rng)

    data = bytearray(sealed.enc + sealed.ciphertext)
    position = random.Random(sample).randrange(len(data) * 8)
    data[position // 8] ^= 1 << (position % 8)
    enc_size = len(sealed.enc)
    tampered = SealedRequest(
        key_id=sealed.key_id,
        enc=bytes(data[:enc_size]),
        ciphertext=bytes(data[enc_size:]),
    )
    with pytest.raises(DecryptFailure):
        open_request(resolver_keypair, tampered)


def test_truncated_ciphertext_is_rejected(resolver_keypair, rng):
    secrets = SessionSecrets.generate(rng=rng)
    sealed = seal_request(resolver_keypair.config, QUERY_WIRE, secrets, rng)
    short = sealed.model_copy(update={"ciphertext": sealed.ciphertext[:TAG_SIZE - 1]})
    with pytest.raises(DecryptFailure):
        open_request(resolver_keypair, short)


def test_authentic_but_malformed_body(resolver_keypair, rng):
    config = resolver_keypair.config
    enc, ciphertext = config.suite.seal_base(
        config.public_key, REQUEST_INFO, request_aad(config.key_id), b"junk", rng
    )
    sealed = SealedRequest(key_id=config.key_id, enc=enc, ciphertext=ciphertext)
    with pytest.raises(MalformedBody):
        open_request(resolver_keypair, sealed)


def test_seal_rejects_secrets_for_another_aead(resolver_keypair, rng):
    secrets = SessionSecrets.generate(AEAD_CHACHA20_POLY1305, rng)
    with pytest.raises(ValueError):
        seal_request(resolver_keypair.config, QUERY_WIRE, secrets, rng)


def test_ciphertext_hides_the_query_name(resolver_keypair):
    rng = seeded_random(7)
    qname = b"\x0bsupersecret\x07example\x03com\x00"
    wire = encode_message(make_query("supersecret.example.com", txid=1))
    for _ in range(20):
        secrets = SessionSecrets.generate(rng=rng)
        sealed = encode_sealed_request(
            seal_request(resolver_keypair.config, wire, secrets, rng)
        )
        assert qname not in sealed
        assert secrets.sym_key not in sealed
        assert secrets.nonce not in sealed


def test_sealed_request_codec(resolver_keypair, rng):
    secrets = SessionSecrets.generate(rng=rng)
    sealed = seal_request(resolver_keypair.config, QUERY_WIRE, secrets, rng)
    data = encode_sealed_request(sealed)

    assert decode_sealed_request(data) == sealed
    with pytest.raises(Malformed):
        decode_sealed_request(data[:2])
    with pytest.raises(Malformed):
        decode_sealed_request(data[:-1])
    with pytest.raises(Malformed):
        decode_sealed_request(data + b"\x00")


def test_key_config_codec(key_config):
    data = encode_key_config(key_config)
    assert len(data) == 9 + 32
    assert decode_key_config(data) == key_config


def test_key_config_with_missized_public_key():
    config = KeyConfig(key_id=1, public_key=b"\x01" * 31)
    with pytest.raises(UnsupportedSuite):
        decode_key_config(encode_key_config(config))


@pytest.mark.parametrize(
    "ids",
    [(0x0010, 0x0001, 0x0001), (0x0020, 0x0009, 0x0001), (0x0020, 0x0001, 0x0009)],
)
def test_key_config_with_unknown_algorithm(ids):
    kem_id, kdf_id, aead_id = ids
    config = KeyConfig(
        key_id=1, kem_id=kem_id, kdf_id=kdf_id, aead_id=aead_id, public_key=b"\x01" * 32
    )
    with pytest.raises(UnsupportedSuite):
        decode_key_config(encode_key_config(config))


def test_key_config_declared_length_mismatch(key_config):
    data = encode_key_config(key_config)
    with pytest.raises(Malformed):
        decode_key_config(data[:-1])
    with pytest.raises(Malformed):
        decode_key_config(data[:5])


def test_keypair_json_file_format(resolver_keypair):
    restored = ResolverKeyPair.model_validate_json(resolver_keypair.model_dump_json())
    assert restored == resolver_keypair
    assert "private_key" not in repr(resolver_keypair)


@settings(max_examples=500, deadline=None)
@given(query_wire=st.binary(max_size=512), seed=st.integers(0, 2**32))
def test_roundtrip_random_bodies(resolver_keypair, query_wire, seed):
    rng = seeded_random(seed)
    secrets = SessionSecrets.generate(rng=rng)
    sealed = seal_request(resolver_keypair.config, query_wire, secrets, rng)
    assert len(sealed.ciphertext) == BODY_OVERHEAD + len(query_wire) + TAG_SIZE
    assert open_request(resolver_keypair, sealed) == (query_wire, secrets)


@settings(max_examples=1000)
@given(
    key_id=st.integers(0, 255),
    suite=st.sampled_from(
        [(0x0020, 0x0001, 0x0001), (0x0020, 0x0003, 0x0003), (0x0021, 0x0002, 0x0002)]
    ),
    data=st.data(),
)
def test_key_config_roundtrip(key_id, suite, data):
    kem_id, kdf_id, aead_id = suite
    size = 32 if kem_id == KEM_X25519_HKDF_SHA256 else 56
    public_key = data.draw(st.binary(min_size=size, max_size=size))
    config = KeyConfig(
        key_id=key_id,
        kem_id=kem_id,
        kdf_id=kdf_id,
        aead_id=aead_id,
        public_key=public_key,
    )
    assert decode_key_config(encode_key_config(config)) == config
