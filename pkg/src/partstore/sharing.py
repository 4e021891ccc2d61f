"""Byte-wise Shamir threshold sharing over GF(256) and threshold-rate arithmetic.

Every byte of the secret gets its own random polynomial of degree ``t - 1``
whose constant term is that byte; share ``i`` (1-based) carries the value of
all polynomials at ``x = i``. Shares are therefore exactly as long as the
secret. The compartmented scheme is built by nesting these calls (see
:mod:`partstore.protocol`).
"""

from __future__ import annotations

import hashlib
import logging
import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import (
    CapacityExceeded,
    DuplicateShareIndex,
    InsufficientShares,
    InvalidInput,
    InvalidRate,
    InvalidSpec,
    SchemeMismatch,
)
from .gf256 import gf_mul  # noqa: F401  (re-exported)

log = logging.getLogger(__name__)

MAX_SHARES = 255
SCHEME_ID_SIZE = 16
NULL_SCHEME = bytes(SCHEME_ID_SIZE)


@dataclass(frozen=True)
class Share:
    x: int
    payload: bytes
    scheme_id: bytes = NULL_SCHEME

    def __post_init__(self):
        if not 1 <= self.x <= MAX_SHARES:
            raise InvalidInput(f"share index must be in 1..255, got {self.x}")
        if len(self.scheme_id) != SCHEME_ID_SIZE:
            raise InvalidInput("scheme_id must be 16 bytes")

    def to_bytes(self) -> bytes:
        """Wire form: ``scheme_id (16) || x (1) || payload``."""
        return self.scheme_id + bytes([self.x]) + self.payload

    @classmethod
    def from_bytes(cls, blob: bytes) -> "Share":
        if len(blob) < SCHEME_ID_SIZE + 2:
            raise InvalidInput("share blob too short")
        return cls(blob[SCHEME_ID_SIZE], bytes(blob[SCHEME_ID_SIZE + 1 :]), bytes(blob[:SCHEME_ID_SIZE]))


@dataclass(frozen=True)
class ThresholdSpec:
    t: int
    n: int

    def __post_init__(self):
        if self.n > MAX_SHARES:
            raise CapacityExceeded(f"at most {MAX_SHARES} shares per scheme, asked for {self.n}")
        if self.t < 1 or self.t > self.n:
            raise InvalidSpec(f"need 1 <= t <= n, got t={self.t}, n={self.n}")


@dataclass(frozen=True)
class ThresholdRates:
    t_target: float
    t_storage: float
    t_storage_part: float


def make_scheme_id(owner: str, kind: str, epoch: int) -> bytes:
    """Bind shares to one (owner, scheme kind, distribution epoch) instance."""
    data = f"{owner}\x00{kind}\x00{epoch}".encode()
    return hashlib.sha256(data).digest()[:SCHEME_ID_SIZE]


def random_bytes(rng, n: int) -> bytes:
    """Draw ``n`` bytes from a numpy Generator, ``random.Random`` or backend."""
    if hasattr(rng, "bytes"):
        return rng.bytes(n)
    if hasattr(rng, "randbytes"):
        return rng.randbytes(n)
    return rng.random_bytes(n)


def split(secret: bytes, spec: ThresholdSpec, rng, scheme_id: bytes = NULL_SCHEME) -> list[Share]:
    if not secret:
        raise InvalidInput("secret must be at least one byte")
    m = len(secret)
    coeffs = np.empty((spec.t, m), dtype=np.uint8)
    coeffs[0] = np.frombuffer(secret, dtype=np.uint8)
    if spec.t > 1:
        coeffs[1:] = np.frombuffer(random_bytes(rng, (spec.t - 1) * m), dtype=np.uint8).reshape(spec.t - 1, m)
    xs = np.arange(1, spec.n + 1, dtype=np.uint8)
    ys = kernels.shamir_eval(coeffs, xs)
    return [Share(i + 1, ys[i].tobytes(), scheme_id) for i in range(spec.n)]


def reconstruct(shares: list[Share], t: int) -> bytes:
    """Interpolate the secret from the first ``t`` of ``shares``."""
    if t < 1:
        raise InvalidSpec("threshold must be at least 1")
    if len(shares) < t:
        raise InsufficientShares(f"need {t} shares, have {len(shares)}")
    xs = [s.x for s in shares]
    if len(set(xs)) != len(xs):
        raise DuplicateShareIndex("two shares carry the same x coordinate")
    if len({s.scheme_id for s in shares}) != 1:
        raise SchemeMismatch("shares originate from different sharing instances")
    if len({len(s.payload) for s in shares}) != 1:
        raise InvalidInput("share payloads differ in length")
    used = shares[:t]
    ys = np.frombuffer(b"".join(s.payload for s in used), dtype=np.uint8).reshape(t, -1)
    return kernels.shamir_interpolate(np.array(xs[:t], dtype=np.uint8), ys).tobytes()


def compute_threshold(rate: float, n: int) -> int:
    """Shares needed out of ``n`` at the given rate: round half up, at least 1, at most n."""
    if not 0 < rate <= 1:
        raise InvalidRate(f"rate must lie in (0, 1], got {rate}")
    if n < 1:
        raise InvalidInput("share count must be at least 1")
    # round(.., 9) strips float noise such as 0.7 * 65 = 45.49999999999999
    return min(n, max(1, math.floor(round(rate * n, 9) + 0.5)))


def split_rates(t_target: float, p: int, q: int) -> ThresholdRates:
    """Split a target rate into storage-level ``q/p`` and the part-level remainder."""
    if not 0 < t_target <= 1:
        raise InvalidRate(f"t_target must lie in (0, 1], got {t_target}")
    if not 1 <= q <= p:
        raise InvalidInput(f"need 1 <= q <= p, got p={p}, q={q}")
    t_storage = q / p
    t_part = t_target / t_storage
    if t_part > 1.0:
        log.info("part-level rate %.4f exceeds 1 for t_target=%s, q/p=%d/%d; capped", t_part, t_target, q, p)
        t_part = 1.0
    return ThresholdRates(t_target, t_storage, round(t_part, 12))
