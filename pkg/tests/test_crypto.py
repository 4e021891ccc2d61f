import hashlib
import struct

import pytest

from partstore.crypto import (
    KEY_SIZE,
    NONCE_SIZE,
    TAG_SIZE,
    Ciphertext,
    FastBackend,
    KeyPurpose,
    ProductionBackend,
    get_backend,
)
from partstore.errors import AuthenticationFailure, DecryptionFailure, InvalidInput

# RFC 7914 section 11: PBKDF2-HMAC-SHA256("passwd", "salt", c=1, dkLen=64)
RFC7914_VECTOR = bytes.fromhex(
    "55ac046e56e3089fec1691c22544b605f94185216dde0465e68b9d57c20dacbc"
    "49ca9cccf179b645991664b39d77ef317c71b845b1e30bd509112041d3a19783"
)


def _hmac_sha256(key, msg):
    # written out from the HMAC definition, not via the hmac module
    if len(key) > 64:
        key = hashlib.sha256(key).digest()
    key = key.ljust(64, b"\0")
    inner = hashlib.sha256(bytes(k ^ 0x36 for k in key) + msg).digest()
    return hashlib.sha256(bytes(k ^ 0x5C for k in key) + inner).digest()


def _pbkdf2(password, salt, iterations, length):
    out = b""
    block = 1
    while len(out) < length:
        u = _hmac_sha256(password, salt + struct.pack(">I", block))
        acc = bytearray(u)
        for _ in range(iterations - 1):
            u = _hmac_sha256(password, u)
            acc = bytearray(a ^ b for a, b in zip(acc, u))
        out += bytes(acc)
        block += 1
    return out[:length]


def test_reference_pbkdf2_matches_rfc_vector():
    assert _pbkdf2(b"passwd", b"salt", 1, 64) == RFC7914_VECTOR


@pytest.mark.parametrize("iterations", [1, 2, 1000])
def test_derive_key_is_pbkdf2_sha256(backend, iterations):
    b = type(backend)(iterations=iterations)
    salt = bytes(range(16))
    assert b.derive_key(b"hunter2", salt, KeyPurpose.STORAGE) == _pbkdf2(b"hunter2", salt, iterations, 32)


def test_distinct_salts_give_distinct_keys(backend):
    s1, s2 = backend.new_salt(), backend.new_salt()
    assert s1 != s2
    a = backend.derive_key(b"pw", s1, KeyPurpose.STORAGE)
    b = backend.derive_key(b"pw", s2, KeyPurpose.AUTH)
    assert a != b and len(a) == len(b) == KEY_SIZE


def test_kdf_rejects_bad_input(backend):
    with pytest.raises(InvalidInput):
        backend.derive_key(b"", bytes(16), KeyPurpose.STORAGE)
    with pytest.raises(InvalidInput):
        backend.derive_key(b"pw", b"short", KeyPurpose.STORAGE)


@pytest.mark.parametrize("plaintext", [b"", b"x", b"k" * 32, bytes(range(256)) * 5])
def test_symmetric_round_trip(backend, plaintext):
    key = backend.random_key()
    ct = backend.sym_encrypt(key, plaintext)
    assert len(ct.nonce) == NONCE_SIZE and len(ct.tag) == TAG_SIZE
    assert backend.sym_decrypt(key, ct) == plaintext
    assert backend.sym_decrypt(key, Ciphertext.from_bytes(ct.to_bytes())) == plaintext


def test_symmetric_wrong_key_and_tamper(backend):
    key, other = backend.random_key(), backend.random_key()
    ct = backend.sym_encrypt(key, b"secret message")
    with pytest.raises(AuthenticationFailure):
        backend.sym_decrypt(other, ct)
    flipped = bytearray(ct.body)
    flipped[0] ^= 1
    with pytest.raises(AuthenticationFailure):
        backend.sym_decrypt(key, Ciphertext(ct.nonce, bytes(flipped), ct.tag))
    with pytest.raises(AuthenticationFailure):
        backend.sym_decrypt(key, Ciphertext(ct.nonce, ct.body, bytes(TAG_SIZE)))


def test_symmetric_key_size_checked(backend):
    with pytest.raises(InvalidInput):
        backend.sym_encrypt(b"short", b"x")


def test_nonces_do_not_repeat(backend):
    key = backend.random_key()
    nonces = {backend.sym_encrypt(key, b"m").nonce for _ in range(50)}
    assert len(nonces) == 50


def test_ciphertext_too_short():
    with pytest.raises(AuthenticationFailure):
        Ciphertext.from_bytes(bytes(NONCE_SIZE + TAG_SIZE - 1))


def test_asymmetric_round_trip_and_wrong_key(backend):
    alice, bob = backend.generate_enc_pair(), backend.generate_enc_pair()
    blob = backend.asym_encrypt(alice.public, b"share bytes" * 10)
    assert backend.asym_decrypt(alice.private, blob) == b"share bytes" * 10
    with pytest.raises(DecryptionFailure):
        backend.asym_decrypt(bob.private, blob)
    # randomized
    assert backend.asym_encrypt(alice.public, b"m") != backend.asym_encrypt(alice.public, b"m")


def test_asymmetric_garbage_rejected(backend):
    pair = backend.generate_enc_pair()
    with pytest.raises(DecryptionFailure):
        backend.asym_decrypt(pair.private, b"\x00\x05abc")


def test_signatures(backend):
    pair, other = backend.generate_sig_pair(), backend.generate_sig_pair()
    sig = backend.sign(pair.private, b"rid-123")
    assert backend.verify(pair.public, b"rid-123", sig)
    assert not backend.verify(pair.public, b"rid-124", sig)
    assert not backend.verify(other.public, b"rid-123", sig)
    assert not backend.verify(pair.public, b"rid-123", b"")
    assert not backend.verify(pair.public, b"rid-123", bytes(len(sig)))


def test_fast_backend_is_seed_deterministic():
    a, b = FastBackend(seed=5), FastBackend(seed=5)
    assert a.random_bytes(40) == b.random_bytes(40)
    assert a.generate_enc_pair() == b.generate_enc_pair()
    assert FastBackend(seed=6).random_bytes(40) != FastBackend(seed=5).random_bytes(40)


def test_get_backend():
    assert isinstance(get_backend("test"), FastBackend)
    assert isinstance(get_backend("production"), ProductionBackend)
    assert get_backend("production").iterations == 100_000
    with pytest.raises(InvalidInput):
        get_backend("rot13")
