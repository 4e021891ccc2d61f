"""Pluggable cryptographic primitives.

Two backends share one interface:

* :class:`ProductionBackend` -- PBKDF2-HMAC-SHA256, AES-256-GCM, RSA-OAEP
  (hybrid with AES-GCM so payload size is unbounded) and ECDSA P-256, all from
  the ``cryptography`` package.
* :class:`FastBackend` -- a deterministic, hash-based stand-in used by the
  Monte-Carlo harness. It keeps every contract the tests check (round trips,
  tamper detection, wrong-key rejection, randomized asymmetric encryption) but
  offers **no security**: anyone holding a public key can decrypt and sign.
"""

from __future__ import annotations

import enum
import functools
import hashlib
import hmac
import os
import random
from dataclasses import dataclass

from .errors import AuthenticationFailure, DecryptionFailure, InvalidInput

KEY_SIZE = 32
NONCE_SIZE = 12
TAG_SIZE = 16
SALT_SIZE = 16

PRODUCTION_ITERATIONS = 100_000
TEST_ITERATIONS = 1_000


class KeyPurpose(enum.Enum):
    STORAGE = "storage"
    AUTH = "auth"


@dataclass(frozen=True)
class Ciphertext:
    """Authenticated symmetric ciphertext: ``nonce || body || tag`` on the wire."""

    nonce: bytes
    body: bytes
    tag: bytes

    def to_bytes(self) -> bytes:
        return self.nonce + self.body + self.tag

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Ciphertext":
        if len(blob) < NONCE_SIZE + TAG_SIZE:
            raise AuthenticationFailure("ciphertext shorter than nonce + tag")
        return cls(blob[:NONCE_SIZE], blob[NONCE_SIZE:-TAG_SIZE], blob[-TAG_SIZE:])

    def __len__(self):
        return NONCE_SIZE + len(self.body) + TAG_SIZE


@dataclass(frozen=True)
class EncKeyPair:
    public: bytes
    private: bytes


@dataclass(frozen=True)
class SigKeyPair:
    public: bytes
    private: bytes


def _check_key(key: bytes) -> None:
    if len(key) != KEY_SIZE:
        raise InvalidInput(f"symmetric key must be {KEY_SIZE} bytes, got {len(key)}")


def _check_kdf_input(password: bytes, salt: bytes) -> None:
    if not password:
        raise InvalidInput("password must be non-empty")
    if len(salt) != SALT_SIZE:
        raise InvalidInput(f"salt must be {SALT_SIZE} bytes, got {len(salt)}")


class CryptoBackend:
    """Interface implemented by both backends."""

    name = "abstract"

    def __init__(self, iterations: int):
        if iterations < 1:
            raise InvalidInput("iteration count must be positive")
        self.iterations = iterations

    # randomness
    def random_bytes(self, n: int) -> bytes:
        raise NotImplementedError

    def random_key(self) -> bytes:
        return self.random_bytes(KEY_SIZE)

    def new_salt(self) -> bytes:
        return self.random_bytes(SALT_SIZE)

    def digest(self, data: bytes) -> bytes:
        return hashlib.sha256(data).digest()

    def derive_key(self, password: bytes, salt: bytes, purpose: KeyPurpose) -> bytes:
        """Stretch ``password`` with ``salt``; ``purpose`` only documents intent."""
        _check_kdf_input(password, salt)
        KeyPurpose(purpose)
        return self._kdf(password, salt)

    def _kdf(self, password: bytes, salt: bytes) -> bytes:
        raise NotImplementedError

    def sym_encrypt(self, key: bytes, plaintext: bytes) -> Ciphertext:
        raise NotImplementedError

    def sym_decrypt(self, key: bytes, ct: Ciphertext) -> bytes:
        raise NotImplementedError

    def generate_enc_pair(self) -> EncKeyPair:
        raise NotImplementedError

    def asym_encrypt(self, public: bytes, plaintext: bytes) -> bytes:
        raise NotImplementedError

    def asym_decrypt(self, private: bytes, blob: bytes) -> bytes:
        raise NotImplementedError

    def generate_sig_pair(self) -> SigKeyPair:
        raise NotImplementedError

    def sign(self, private: bytes, message: bytes) -> bytes:
        raise NotImplementedError

    def verify(self, public: bytes, message: bytes, signature: bytes) -> bool:
        raise NotImplementedError


# ---------------------------------------------------------------------------
# fast deterministic backend


def _keystream(key: bytes, nonce: bytes, n: int) -> bytes:
    out = bytearray()
    counter = 0
    while len(out) < n:
        out += hashlib.blake2b(
            nonce + counter.to_bytes(4, "big"), key=key, digest_size=64, person=b"ps-stream"
        ).digest()
        counter += 1
    return bytes(out[:n])


def _xor(a: bytes, b: bytes) -> bytes:
    return (int.from_bytes(a, "big") ^ int.from_bytes(b, "big")).to_bytes(len(a), "big")


def _mac(key: bytes, data: bytes) -> bytes:
    return hashlib.blake2b(data, key=key, digest_size=TAG_SIZE, person=b"ps-mac").digest()


def _fast_public(private: bytes, label: bytes) -> bytes:
    return hashlib.blake2b(private, digest_size=32, person=label).digest()


class FastBackend(CryptoBackend):
    """Keyed-hash primitives seeded from ``seed``; for simulation and tests only."""

    name = "test"

    def __init__(self, seed=None, iterations: int = TEST_ITERATIONS):
        super().__init__(iterations)
        self._rand = random.Random(seed)
        self._counter = 0

    def random_bytes(self, n: int) -> bytes:
        return self._rand.randbytes(n)

    def _kdf(self, password, salt):
        return hashlib.pbkdf2_hmac("sha256", password, salt, self.iterations, KEY_SIZE)

    def _next_nonce(self) -> bytes:
        self._counter += 1
        return self._counter.to_bytes(NONCE_SIZE, "big")

    def _seal(self, key: bytes, nonce: bytes, plaintext: bytes) -> Ciphertext:
        body = _xor(plaintext, _keystream(key, nonce, len(plaintext))) if plaintext else b""
        return Ciphertext(nonce, body, _mac(key, nonce + body))

    def _open(self, key: bytes, ct: Ciphertext) -> bytes | None:
        if not hmac.compare_digest(_mac(key, ct.nonce + ct.body), ct.tag):
            return None
        return _xor(ct.body, _keystream(key, ct.nonce, len(ct.body))) if ct.body else b""

    def sym_encrypt(self, key, plaintext):
        _check_key(key)
        return self._seal(key, self._next_nonce(), plaintext)

    def sym_decrypt(self, key, ct):
        _check_key(key)
        plaintext = self._open(key, ct)
        if plaintext is None:
            raise AuthenticationFailure("authentication tag mismatch")
        return plaintext

    def generate_enc_pair(self):
        private = self.random_bytes(32)
        return EncKeyPair(_fast_public(private, b"ps-enc"), private)

    def asym_encrypt(self, public, plaintext):
        nonce = self.random_bytes(NONCE_SIZE)
        return self._seal(public, nonce, plaintext).to_bytes()

    def asym_decrypt(self, private, blob):
        try:
            ct = Ciphertext.from_bytes(blob)
        except AuthenticationFailure as exc:
            raise DecryptionFailure(str(exc)) from None
        plaintext = self._open(_fast_public(private, b"ps-enc"), ct)
        if plaintext is None:
            raise DecryptionFailure("ciphertext not addressed to this key pair")
        return plaintext

    def generate_sig_pair(self):
        private = self.random_bytes(32)
        return SigKeyPair(_fast_public(private, b"ps-sig"), private)

    def sign(self, private, message):
        return hashlib.blake2b(
            message, key=_fast_public(private, b"ps-sig"), digest_size=32, person=b"ps-sign"
        ).digest()

    def verify(self, public, message, signature):
        if not isinstance(signature, (bytes, bytearray)) or len(signature) != 32 or len(public) != 32:
            return False
        expected = hashlib.blake2b(message, key=public, digest_size=32, person=b"ps-sign").digest()
        return hmac.compare_digest(expected, bytes(signature))


# ---------------------------------------------------------------------------
# production backend


class ProductionBackend(CryptoBackend):
    """Standard algorithms via ``cryptography``; randomness from ``os.urandom``."""

    name = "production"

    def __init__(self, iterations: int = PRODUCTION_ITERATIONS, rsa_bits: int = 2048):
        super().__init__(iterations)
        self.rsa_bits = rsa_bits

    def random_bytes(self, n):
        return os.urandom(n)

    def _kdf(self, password, salt):
        from cryptography.hazmat.primitives import hashes
        from cryptography.hazmat.primitives.kdf.pbkdf2 import PBKDF2HMAC

        kdf = PBKDF2HMAC(algorithm=hashes.SHA256(), length=KEY_SIZE, salt=salt, iterations=self.iterations)
        return kdf.derive(password)

    def sym_encrypt(self, key, plaintext):
        from cryptography.hazmat.primitives.ciphers.aead import AESGCM

        _check_key(key)
        nonce = os.urandom(NONCE_SIZE)
        sealed = AESGCM(key).encrypt(nonce, plaintext, None)
        return Ciphertext(nonce, sealed[:-TAG_SIZE], sealed[-TAG_SIZE:])

    def sym_decrypt(self, key, ct):
        from cryptography.exceptions import InvalidTag
        from cryptography.hazmat.primitives.ciphers.aead import AESGCM

        _check_key(key)
        try:
            return AESGCM(key).decrypt(ct.nonce, ct.body + ct.tag, None)
        except (InvalidTag, ValueError):
            raise AuthenticationFailure("authentication tag mismatch") from None

    def generate_enc_pair(self):
        from cryptography.hazmat.primitives import serialization
        from cryptography.hazmat.primitives.asymmetric import rsa

        key = rsa.generate_private_key(public_exponent=65537, key_size=self.rsa_bits)
        private = key.private_bytes(
            serialization.Encoding.DER, serialization.PrivateFormat.PKCS8, serialization.NoEncryption()
        )
        public = key.public_key().public_bytes(
            serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
        )
        return EncKeyPair(public, private)

    def asym_encrypt(self, public, plaintext):
        from cryptography.hazmat.primitives.ciphers.aead import AESGCM

        session_key = os.urandom(KEY_SIZE)
        wrapped = _load_public(public).encrypt(session_key, _oaep())
        nonce = os.urandom(NONCE_SIZE)
        return len(wrapped).to_bytes(2, "big") + wrapped + nonce + AESGCM(session_key).encrypt(nonce, plaintext, None)

    def asym_decrypt(self, private, blob):
        from cryptography.exceptions import InvalidTag
        from cryptography.hazmat.primitives.ciphers.aead import AESGCM

        try:
            n = int.from_bytes(blob[:2], "big")
            wrapped, rest = blob[2 : 2 + n], blob[2 + n :]
            session_key = _load_private(private).decrypt(wrapped, _oaep())
            return AESGCM(session_key).decrypt(rest[:NONCE_SIZE], rest[NONCE_SIZE:], None)
        except (InvalidTag, ValueError, IndexError):
            raise DecryptionFailure("ciphertext not addressed to this key pair") from None

    def generate_sig_pair(self):
        from cryptography.hazmat.primitives import serialization
        from cryptography.hazmat.primitives.asymmetric import ec

        key = ec.generate_private_key(ec.SECP256R1())
        private = key.private_bytes(
            serialization.Encoding.DER, serialization.PrivateFormat.PKCS8, serialization.NoEncryption()
        )
        public = key.public_key().public_bytes(
            serialization.Encoding.DER, serialization.PublicFormat.SubjectPublicKeyInfo
        )
        return SigKeyPair(public, private)

    def sign(self, private, message):
        from cryptography.hazmat.primitives import hashes
        from cryptography.hazmat.primitives.asymmetric import ec

        return _load_private(private).sign(message, ec.ECDSA(hashes.SHA256()))

    def verify(self, public, message, signature):
        from cryptography.exceptions import InvalidSignature
        from cryptography.hazmat.primitives import hashes
        from cryptography.hazmat.primitives.asymmetric import ec

        try:
            key = _load_public(public)
            if not isinstance(key, ec.EllipticCurvePublicKey):
                return False
            key.verify(bytes(signature), message, ec.ECDSA(hashes.SHA256()))
        except (InvalidSignature, ValueError, TypeError):
            return False
        return True


def _oaep():
    from cryptography.hazmat.primitives import hashes
    from cryptography.hazmat.primitives.asymmetric import padding

    return padding.OAEP(mgf=padding.MGF1(hashes.SHA256()), algorithm=hashes.SHA256(), label=None)


@functools.lru_cache(maxsize=256)
def _load_public(der: bytes):
    from cryptography.hazmat.primitives import serialization

    return serialization.load_der_public_key(der)


@functools.lru_cache(maxsize=256)
def _load_private(der: bytes):
    from cryptography.hazmat.primitives import serialization

    return serialization.load_der_private_key(der, password=None)


def get_backend(name: str, seed=None, iterations: int | None = None) -> CryptoBackend:
    """Build a backend by CLI name (``test`` or ``production``)."""
    if name == "test":
        return FastBackend(seed, iterations or TEST_ITERATIONS)
    if name == "production":
        return ProductionBackend(iterations or PRODUCTION_ITERATIONS)
    raise InvalidInput(f"unknown crypto backend {name!r}")
