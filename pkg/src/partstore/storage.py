"""Storage / StoragePart / Chatroom data model, sealing, and peer-list extraction."""

from __future__ import annotations

import base64
import enum
import json
from dataclasses import dataclass, field

from .crypto import KEY_SIZE, NONCE_SIZE, TAG_SIZE, Ciphertext, CryptoBackend, EncKeyPair, SigKeyPair
from .errors import AuthenticationFailure, InvalidInput
from .sharing import Share

MAGIC = b"PSTR"
BLOB_VERSION = 1

# per-item byte costs of the partitioned layout, measured on the JSON+AES reference encoding
LINK_BYTES = 580  # encrypted Storage -> StoragePart link (id, key, hash, share)
PART_BYTES = 610  # encrypted StoragePart without its chats
SHARE_BYTES = 90  # one encrypted held share
DISTRIBUTION_MARK_BYTES = 180  # encrypted last-distribution marker
CHAT_KEY_BYTES = 380  # one encrypted chat key in the unpartitioned baseline


def _b64(data: bytes) -> str:
    return base64.b64encode(data).decode("ascii")


def _unb64(text: str) -> bytes:
    return base64.b64decode(text.encode("ascii"), validate=True)


def canonical_json(obj) -> bytes:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


@dataclass
class Chatroom:
    id: str
    participants: tuple[str, ...]
    key_history: list[bytes]

    def __post_init__(self):
        self.participants = tuple(sorted(set(self.participants)))
        if len(self.participants) < 2:
            raise InvalidInput(f"chatroom {self.id!r} needs at least two participants")
        if not self.key_history:
            raise InvalidInput(f"chatroom {self.id!r} has no key")

    @property
    def latest_key(self) -> bytes:
        return self.key_history[-1]

    def to_dict(self):
        return {"id": self.id, "participants": list(self.participants), "keyHistory": [_b64(k) for k in self.key_history]}

    @classmethod
    def from_dict(cls, d):
        return cls(d["id"], tuple(d["participants"]), [_unb64(k) for k in d["keyHistory"]])


@dataclass
class StoragePart:
    id: str
    chatrooms: list[Chatroom] = field(default_factory=list)
    cts_share: Share | None = None
    predecessor: str | None = None

    def __post_init__(self):
        ids = [c.id for c in self.chatrooms]
        if len(ids) != len(set(ids)):
            raise InvalidInput(f"duplicate chatroom ids in part {self.id!r}")

    def to_dict(self):
        return {
            "id": self.id,
            "chatrooms": [c.to_dict() for c in self.chatrooms],
            "ctsShare": _b64(self.cts_share.to_bytes()) if self.cts_share else None,
            "predecessor": self.predecessor,
        }

    @classmethod
    def from_dict(cls, d):
        share = Share.from_bytes(_unb64(d["ctsShare"])) if d["ctsShare"] else None
        return cls(d["id"], [Chatroom.from_dict(c) for c in d["chatrooms"]], share, d["predecessor"])


@dataclass(frozen=True)
class PeerKeys:
    enc: bytes
    sig: bytes


@dataclass(frozen=True)
class PartLink:
    part_id: str
    part_key: bytes
    part_hash: bytes


@dataclass(frozen=True)
class HeldShare:
    """A share this user keeps on behalf of ``owner``."""

    owner: str
    scheme: str  # "TS" or "CTS"
    part_id: str | None
    threshold: int
    quorum: int | None
    share: bytes
    epoch: int = 0

    def to_dict(self):
        return {
            "owner": self.owner,
            "scheme": self.scheme,
            "partId": self.part_id,
            "threshold": self.threshold,
            "quorum": self.quorum,
            "share": _b64(self.share),
            "epoch": self.epoch,
        }

    @classmethod
    def from_dict(cls, d):
        return cls(d["owner"], d["scheme"], d["partId"], d["threshold"], d["quorum"], _unb64(d["share"]), d["epoch"])


@dataclass
class Storage:
    owner: str
    enc_pair: EncKeyPair
    sig_pair: SigKeyPair
    peer_keys: dict[str, PeerKeys] = field(default_factory=dict)
    part_table: list[PartLink] = field(default_factory=list)
    ts_shares_sent: dict[str, int] = field(default_factory=dict)
    cts_shares_sent: dict[str, int] = field(default_factory=dict)
    last_distribution: int = 0
    held_shares: list[HeldShare] = field(default_factory=list)

    def link(self, part_id: str) -> PartLink:
        for entry in self.part_table:
            if entry.part_id == part_id:
                return entry
        raise KeyError(part_id)

    def to_dict(self):
        return {
            "owner": self.owner,
            "encPair": {"public": _b64(self.enc_pair.public), "private": _b64(self.enc_pair.private)},
            "sigPair": {"public": _b64(self.sig_pair.public), "private": _b64(self.sig_pair.private)},
            "peerKeys": {p: {"enc": _b64(k.enc), "sig": _b64(k.sig)} for p, k in self.peer_keys.items()},
            "partTable": [
                {"partId": e.part_id, "partKey": _b64(e.part_key), "partHash": _b64(e.part_hash)}
                for e in self.part_table
            ],
            "tsSharesSent": dict(self.ts_shares_sent),
            "ctsSharesSent": dict(self.cts_shares_sent),
            "lastDistribution": self.last_distribution,
            "heldShares": [h.to_dict() for h in self.held_shares],
        }

    @classmethod
    def from_dict(cls, d):
        return cls(
            owner=d["owner"],
            enc_pair=EncKeyPair(_unb64(d["encPair"]["public"]), _unb64(d["encPair"]["private"])),
            sig_pair=SigKeyPair(_unb64(d["sigPair"]["public"]), _unb64(d["sigPair"]["private"])),
            peer_keys={p: PeerKeys(_unb64(k["enc"]), _unb64(k["sig"])) for p, k in d["peerKeys"].items()},
            part_table=[PartLink(e["partId"], _unb64(e["partKey"]), _unb64(e["partHash"])) for e in d["partTable"]],
            ts_shares_sent=dict(d["tsSharesSent"]),
            cts_shares_sent=dict(d["ctsSharesSent"]),
            last_distribution=d["lastDistribution"],
            held_shares=[HeldShare.from_dict(h) for h in d["heldShares"]],
        )


# ---------------------------------------------------------------------------
# sealed blobs


class BlobKind(enum.IntEnum):
    STORAGE = 1
    STORAGE_PART = 2


@dataclass(frozen=True)
class SealedBlob:
    kind: BlobKind
    ciphertext: Ciphertext

    def to_bytes(self) -> bytes:
        ct = self.ciphertext
        return (
            MAGIC
            + bytes([int(self.kind), BLOB_VERSION])
            + ct.nonce
            + len(ct.body).to_bytes(4, "big")
            + ct.body
            + ct.tag
        )

    @classmethod
    def from_bytes(cls, blob: bytes) -> "SealedBlob":
        header = len(MAGIC) + 2 + NONCE_SIZE + 4
        if len(blob) < header + TAG_SIZE or blob[:4] != MAGIC:
            raise InvalidInput("not a sealed blob")
        if blob[5] != BLOB_VERSION:
            raise InvalidInput(f"unsupported blob version {blob[5]}")
        kind = BlobKind(blob[4])
        nonce = blob[6 : 6 + NONCE_SIZE]
        length = int.from_bytes(blob[6 + NONCE_SIZE : header], "big")
        if len(blob) != header + length + TAG_SIZE:
            raise InvalidInput("sealed blob length mismatch")
        return cls(kind, Ciphertext(nonce, blob[header : header + length], blob[header + length :]))


def _seal(obj, kind: BlobKind, key: bytes, backend: CryptoBackend) -> SealedBlob:
    return SealedBlob(kind, backend.sym_encrypt(key, canonical_json(obj.to_dict())))


def _open(blob: SealedBlob, kind: BlobKind, key: bytes, backend: CryptoBackend):
    if blob.kind != kind:
        raise InvalidInput(f"expected a {kind.name} blob, got {blob.kind.name}")
    plain = backend.sym_decrypt(key, blob.ciphertext)
    try:
        return json.loads(plain.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):  # pragma: no cover - AEAD makes this unreachable
        raise AuthenticationFailure("sealed blob decrypted to garbage") from None


def seal_storage(storage: Storage, p_s: bytes, backend: CryptoBackend) -> SealedBlob:
    return _seal(storage, BlobKind.STORAGE, p_s, backend)


def open_storage(blob: SealedBlob, p_s: bytes, backend: CryptoBackend) -> Storage:
    return Storage.from_dict(_open(blob, BlobKind.STORAGE, p_s, backend))


def seal_part(part: StoragePart, k_sp: bytes, backend: CryptoBackend) -> SealedBlob:
    return _seal(part, BlobKind.STORAGE_PART, k_sp, backend)


def open_part(blob: SealedBlob, k_sp: bytes, backend: CryptoBackend) -> StoragePart:
    return StoragePart.from_dict(_open(blob, BlobKind.STORAGE_PART, k_sp, backend))


# ---------------------------------------------------------------------------
# recovery keys


@dataclass(frozen=True)
class RecoveryKeys:
    """Wrapping keys and the two ciphertexts of ``P_S`` they protect.

    Only ``k_cts`` and ``k_ts`` ever leave the user's device; the server must
    not also see ``s_cts`` / ``s_ts``, or it could decrypt ``P_S`` alone.
    """

    k_cts: bytes
    k_ts: bytes
    s_cts: Ciphertext
    s_ts: Ciphertext

    def check(self, backend: CryptoBackend) -> bytes:
        """Decrypt both secrets, insist they agree, and return ``P_S``."""
        a = backend.sym_decrypt(self.k_cts, self.s_cts)
        b = backend.sym_decrypt(self.k_ts, self.s_ts)
        if a != b or len(a) != KEY_SIZE:
            raise AuthenticationFailure("S_CTS and S_TS wrap different keys")
        return a


# ---------------------------------------------------------------------------
# partitioning and peer lists


def partition_chatrooms(chatrooms: list[Chatroom], p: int) -> list[list[Chatroom]]:
    """Round-robin over chatrooms sorted by id: chatroom ``j`` goes to part ``j % p``."""
    if p < 1:
        raise InvalidInput("need at least one part")
    ordered = sorted(chatrooms, key=lambda c: c.id)
    return [ordered[k::p] for k in range(p)]


def collect_part_peers(part: StoragePart, owner: str) -> list[str]:
    return sorted({m for c in part.chatrooms for m in c.participants if m != owner})


def collect_part_occurrences(part: StoragePart, owner: str) -> list[tuple[str, str]]:
    """``(peer, chatroom id)`` for every membership, the non-unique shareholder list."""
    return sorted((m, c.id) for c in part.chatrooms for m in c.participants if m != owner)


def collect_peers(owner: str, parts: list[StoragePart]) -> list[str]:
    return sorted({m for part in parts for m in collect_part_peers(part, owner)})


def estimate_overhead(parts: int, unique_peers: int) -> int:
    """Extra bytes of a partitioned storage over the single-blob layout."""
    if parts < 1:
        raise InvalidInput("parts must be at least 1")
    if unique_peers < 0:
        raise InvalidInput("unique_peers must be non-negative")
    return parts * (LINK_BYTES + PART_BYTES) + unique_peers * SHARE_BYTES - DISTRIBUTION_MARK_BYTES


def baseline_chat_key_bytes(n_chats: int) -> int:
    return n_chats * CHAT_KEY_BYTES
