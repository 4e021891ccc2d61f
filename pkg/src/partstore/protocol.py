"""Share distribution and the recovery choreography between user, server and peers.

Distribution (run by the user while the password is still known):

1. draw fresh ``K_CTS`` / ``K_TS`` and encrypt ``P_S`` under each;
2. split ``S_CTS`` q-of-p, embedding one share in every StoragePart;
3. per part, wrap ``k_SP`` under ``K_CTS`` and split the wrapped key among the
   part's peers;
4. split ``S_TS`` among all peers;
5. encrypt every share to its holder and sign it.

Recovery: the server hands a fresh session (``rid``) the two wrapping keys and
the sealed blobs; peers release their shares only once a countersigned
RecoveryConfirmed for that ``rid`` is visible, and log a SystemMessage into
every chatroom they share with the owner. The user rebuilds parts one by one
and the Storage via either route.
"""

from __future__ import annotations

import base64
import enum
import hashlib
import json
from dataclasses import dataclass, field

from .crypto import Ciphertext, CryptoBackend, EncKeyPair, KeyPurpose, SigKeyPair
from .errors import (
    AuthenticationFailure,
    ConfirmationRejected,
    DecryptionFailure,
    InvalidInput,
    InvalidState,
    MissingPeerKey,
    NoPeers,
    NotAPeer,
    OwnershipRejected,
    PartstoreError,
    ReconstructionCorrupt,
    UnknownUser,
)
from .sharing import (
    MAX_SHARES,
    Share,
    ThresholdRates,
    ThresholdSpec,
    compute_threshold,
    make_scheme_id,
    reconstruct,
    split,
)
from .storage import (
    Chatroom,
    HeldShare,
    PartLink,
    PeerKeys,
    RecoveryKeys,
    SealedBlob,
    Storage,
    StoragePart,
    canonical_json,
    collect_part_occurrences,
    collect_part_peers,
    collect_peers,
    open_part,
    open_storage,
    partition_chatrooms,
    seal_part,
    seal_storage,
)

SERVER = "server"
BROADCAST = "*"
TS = "TS"
CTS = "CTS"


class MessageKind(str, enum.Enum):
    INITIALIZE_RECOVERY = "InitializeRecovery"
    RECOVERY_REQUEST = "RecoveryRequest"
    RECOVERY_CONFIRMED = "RecoveryConfirmed"
    SHARE_DELIVERY = "ShareDelivery"
    SYSTEM_MESSAGE = "SystemMessage"
    RECOVERY_FINISHED = "RecoveryFinished"


# body fields carried as base64 on the wire
_BYTES_FIELDS = frozenset({"blob", "userSig", "encPub", "sigPub"})


def _body_to_wire(body: dict) -> dict:
    return {k: base64.b64encode(v).decode("ascii") if k in _BYTES_FIELDS else v for k, v in body.items()}


def _body_from_wire(body: dict) -> dict:
    return {k: base64.b64decode(v) if k in _BYTES_FIELDS else v for k, v in body.items()}


@dataclass(frozen=True)
class ProtocolMessage:
    kind: MessageKind
    rid: str
    sender: str
    recipient: str
    body: dict
    signature: bytes = b""

    def signed_bytes(self) -> bytes:
        return self.kind.value.encode() + b"\x00" + self.rid.encode() + b"\x00" + canonical_json(_body_to_wire(self.body))

    def to_json(self) -> str:
        return json.dumps(
            {
                "kind": self.kind.value,
                "rid": self.rid,
                "sender": self.sender,
                "recipient": self.recipient,
                "body": _body_to_wire(self.body),
                "sig": base64.b64encode(self.signature).decode("ascii"),
            },
            sort_keys=True,
            separators=(",", ":"),
        )

    @classmethod
    def from_json(cls, text: str) -> "ProtocolMessage":
        d = json.loads(text)
        return cls(
            MessageKind(d["kind"]),
            d["rid"],
            d["sender"],
            d["recipient"],
            _body_from_wire(d["body"]),
            base64.b64decode(d["sig"]),
        )

    def describe(self) -> str:
        extra = ""
        if self.kind is MessageKind.SHARE_DELIVERY:
            extra = f" scheme={self.body['scheme']}" + (f" part={self.body['part']}" if self.body.get("part") else "")
        elif self.kind is MessageKind.SYSTEM_MESSAGE:
            extra = f" chat={self.body['chat']}"
        rid = f" rid={self.rid}" if self.rid else ""
        return f"{self.kind.value:<19} {self.sender} -> {self.recipient}{rid}{extra}"


def sign_message(backend: CryptoBackend, private: bytes, kind, rid, sender, recipient, body) -> ProtocolMessage:
    unsigned = ProtocolMessage(MessageKind(kind), rid, sender, recipient, body)
    sig = backend.sign(private, unsigned.signed_bytes())
    return ProtocolMessage(unsigned.kind, rid, sender, recipient, body, sig)


def rid_statement(rid: str) -> bytes:
    """The bytes a recovering user signs to prove a session is theirs."""
    return b"partstore-recovery:" + rid.encode()


# ---------------------------------------------------------------------------
# distribution


@dataclass
class Distribution:
    recovery_keys: RecoveryKeys
    messages: list[ProtocolMessage]
    parts: list[StoragePart]
    sealed_parts: dict[str, bytes]
    ts_threshold: int | None
    part_thresholds: dict[str, int]
    quorum: int


def wrap_part_key(k_sp: bytes, k_cts: bytes, backend: CryptoBackend) -> Ciphertext:
    return backend.sym_encrypt(k_cts, k_sp)


def unwrap_part_key(wrapped: Ciphertext, k_cts: bytes, backend: CryptoBackend) -> bytes:
    return backend.sym_decrypt(k_cts, wrapped)


def _deliver(backend, storage, peer, scheme, part_id, threshold, quorum, share, epoch) -> ProtocolMessage:
    keys = storage.peer_keys.get(peer)
    if keys is None:
        raise MissingPeerKey(peer)
    body = {
        "scheme": scheme,
        "part": part_id,
        "t": threshold,
        "q": quorum,
        "epoch": epoch,
        "blob": backend.asym_encrypt(keys.enc, share.to_bytes()),
    }
    return sign_message(backend, storage.sig_pair.private, MessageKind.SHARE_DELIVERY, "", storage.owner, peer, body)


def distribute_shares(
    storage: Storage,
    parts: list[StoragePart],
    p_s: bytes,
    rates: ThresholdRates,
    unique_peers: bool,
    rng,
    backend: CryptoBackend,
    ts_enabled: bool = True,
) -> Distribution:
    """Create and address every share for one distribution epoch.

    Mutates ``storage`` (epoch, bookkeeping, part table) and ``parts`` (the
    embedded CTS share); returns the messages to send and what the server keeps.
    The flat TS scheme always gives one share per distinct peer; ``unique_peers``
    only governs the part-level schemes.
    """
    owner = storage.owner
    p = len(parts)
    if not 1 <= p <= MAX_SHARES:
        raise InvalidInput(f"need 1..{MAX_SHARES} parts, got {p}")
    peers = collect_peers(owner, parts)
    if not peers:
        raise NoPeers(f"{owner} has no peers to hold shares")
    for peer in peers:
        if peer not in storage.peer_keys:
            raise MissingPeerKey(peer)

    epoch = storage.last_distribution + 1
    k_cts, k_ts = backend.random_key(), backend.random_key()
    keys = RecoveryKeys(k_cts, k_ts, backend.sym_encrypt(k_cts, p_s), backend.sym_encrypt(k_ts, p_s))

    quorum = compute_threshold(rates.t_storage, p)
    storage_shares = split(keys.s_cts.to_bytes(), ThresholdSpec(quorum, p), rng, make_scheme_id(owner, CTS, epoch))

    messages: list[ProtocolMessage] = []
    part_thresholds: dict[str, int] = {}
    ts_sent: dict[str, int] = {}
    cts_sent: dict[str, int] = {}
    sealed_parts: dict[str, bytes] = {}
    new_table: list[PartLink] = []

    for part, cts_share in zip(parts, storage_shares):
        part.cts_share = cts_share
        link = storage.link(part.id)
        holders = collect_part_peers(part, owner) if unique_peers else [peer for peer, _ in collect_part_occurrences(part, owner)]
        if not holders:
            raise NoPeers(f"part {part.id!r} has no peers")
        t_sp = compute_threshold(rates.t_storage_part, len(holders))
        part_thresholds[part.id] = t_sp
        wrapped = wrap_part_key(link.part_key, k_cts, backend).to_bytes()
        shares = split(wrapped, ThresholdSpec(t_sp, len(holders)), rng, make_scheme_id(owner, f"{CTS}/{part.id}", epoch))
        for peer, share in zip(holders, shares):
            messages.append(_deliver(backend, storage, peer, CTS, part.id, t_sp, quorum, share, epoch))
            cts_sent[peer] = cts_sent.get(peer, 0) + 1
        blob = seal_part(part, link.part_key, backend).to_bytes()
        sealed_parts[part.id] = blob
        new_table.append(PartLink(part.id, link.part_key, backend.digest(blob)))

    t_l = None
    if ts_enabled:
        t_l = compute_threshold(rates.t_target, len(peers))
        shares = split(keys.s_ts.to_bytes(), ThresholdSpec(t_l, len(peers)), rng, make_scheme_id(owner, TS, epoch))
        for peer, share in zip(peers, shares):
            messages.append(_deliver(backend, storage, peer, TS, None, t_l, None, share, epoch))
            ts_sent[peer] = 1

    storage.part_table = new_table
    storage.ts_shares_sent = ts_sent
    storage.cts_shares_sent = cts_sent
    storage.last_distribution = epoch
    return Distribution(keys, messages, parts, sealed_parts, t_l, part_thresholds, quorum)


# ---------------------------------------------------------------------------
# server


@dataclass
class Account:
    p_a: bytes
    salt_s: bytes
    salt_a: bytes
    k_cts: bytes | None = None
    k_ts: bytes | None = None
    sealed_storage: bytes | None = None
    sealed_parts: dict[str, bytes] = field(default_factory=dict)


class SessionStatus(str, enum.Enum):
    AWAITING_CONFIRMATION = "AwaitingConfirmation"
    COLLECTING = "Collecting"
    STORAGE_RECOVERED = "StorageRecovered"
    FINISHED = "Finished"
    INVALIDATED = "Invalidated"


@dataclass
class ServerSession:
    rid: str
    owner: str
    required_confirmers: int
    status: SessionStatus = SessionStatus.AWAITING_CONFIRMATION
    fresh_enc: bytes | None = None
    fresh_sig: bytes | None = None
    confirmers: set = field(default_factory=set)


@dataclass
class RecoveryInit:
    rid: str
    salt_s: bytes
    salt_a: bytes
    peers: list[str]
    peer_keys: dict[str, PeerKeys]
    k_cts: bytes
    k_ts: bytes
    sealed_storage: bytes
    sealed_parts: dict[str, bytes]


def _accept_any_proof(user, proof) -> bool:
    return bool(proof)


class Server:
    """The untrusted relay: directory, blob store, plaintext participant lists."""

    def __init__(self, backend: CryptoBackend, ownership_verifier=_accept_any_proof):
        self.backend = backend
        self.verify_ownership = ownership_verifier
        self.directory: dict[str, PeerKeys] = {}
        self.accounts: dict[str, Account] = {}
        self.participants: dict[str, tuple[str, ...]] = {}
        self.sessions: dict[str, ServerSession] = {}
        self.active_rid: dict[str, str] = {}
        self.posted: list[ProtocolMessage] = []
        self._rid_counter = 0

    # registration and storage
    def register_user(self, user: str, enc_public: bytes, sig_public: bytes) -> None:
        self.directory[user] = PeerKeys(enc_public, sig_public)

    def register_account(self, user: str, p_a: bytes, salt_s: bytes, salt_a: bytes) -> None:
        self.accounts[user] = Account(p_a, salt_s, salt_a)

    def authenticate(self, user: str, p_a: bytes) -> bool:
        account = self.accounts.get(user)
        return account is not None and account.p_a == p_a

    def store_chatrooms(self, chatrooms: list[Chatroom]) -> None:
        for c in chatrooms:
            self.participants[c.id] = c.participants

    def upload(self, user, sealed_storage: bytes, sealed_parts: dict[str, bytes], k_cts: bytes, k_ts: bytes) -> None:
        account = self._account(user)
        account.sealed_storage = sealed_storage
        account.sealed_parts = dict(sealed_parts)
        account.k_cts, account.k_ts = k_cts, k_ts

    def peers_of(self, user: str) -> list[str]:
        return sorted({m for members in self.participants.values() if user in members for m in members if m != user})

    def shared_chatrooms(self, a: str, b: str) -> list[str]:
        return sorted(cid for cid, members in self.participants.items() if a in members and b in members)

    def _account(self, user) -> Account:
        try:
            return self.accounts[user]
        except KeyError:
            raise UnknownUser(user) from None

    # recovery
    def begin_recovery(self, user: str, proof, required_confirmers: int = 1) -> str:
        self._account(user)
        if not self.verify_ownership(user, proof):
            raise OwnershipRejected(f"ownership proof for {user!r} rejected")
        old = self.active_rid.get(user)
        if old is not None and self.sessions[old].status not in (SessionStatus.FINISHED,):
            self.sessions[old].status = SessionStatus.INVALIDATED
        self._rid_counter += 1
        rid = hashlib.sha256(f"{user}:{self._rid_counter}:".encode() + self.backend.random_bytes(16)).hexdigest()[:16]
        self.sessions[rid] = ServerSession(rid, user, max(1, required_confirmers))
        self.active_rid[user] = rid
        return rid

    def initialize_recovery(self, msg: ProtocolMessage) -> RecoveryInit:
        session = self.sessions.get(msg.rid)
        if session is None or session.status is SessionStatus.INVALIDATED or session.owner != msg.sender:
            raise InvalidState(f"unknown or stale recovery id {msg.rid!r}")
        if not self.backend.verify(msg.body["sigPub"], msg.signed_bytes(), msg.signature):
            raise InvalidState("InitializeRecovery not signed by the announced key")
        session.fresh_enc = msg.body["encPub"]
        session.fresh_sig = msg.body["sigPub"]
        account = self._account(session.owner)
        peers = self.peers_of(session.owner)
        return RecoveryInit(
            msg.rid,
            account.salt_s,
            account.salt_a,
            peers,
            {p: self.directory[p] for p in peers if p in self.directory},
            account.k_cts,
            account.k_ts,
            account.sealed_storage,
            dict(account.sealed_parts),
        )

    def session(self, rid: str) -> ServerSession | None:
        return self.sessions.get(rid)

    def post_confirmation(self, msg: ProtocolMessage) -> SessionStatus:
        session = self.sessions.get(msg.rid)
        if session is None or session.status is SessionStatus.INVALIDATED:
            raise ConfirmationRejected(f"unknown or stale recovery id {msg.rid!r}")
        keys = self.directory.get(msg.sender)
        if keys is None or not self.backend.verify(keys.sig, msg.signed_bytes(), msg.signature):
            raise ConfirmationRejected("confirmation not signed by its sender")
        if msg.sender not in self.peers_of(session.owner):
            raise NotAPeer(f"{msg.sender!r} is not a peer of {session.owner!r}")
        if not self.backend.verify(session.fresh_sig, rid_statement(msg.rid), msg.body["userSig"]):
            raise ConfirmationRejected("user signature over the recovery id is invalid")
        self.posted.append(msg)
        session.confirmers.add(msg.sender)
        if session.status is SessionStatus.AWAITING_CONFIRMATION and len(session.confirmers) >= session.required_confirmers:
            session.status = SessionStatus.COLLECTING
        return session.status

    def is_confirmed(self, rid: str) -> bool:
        session = self.sessions.get(rid)
        return (
            session is not None
            and session.status in (SessionStatus.COLLECTING, SessionStatus.STORAGE_RECOVERED)
            and len(session.confirmers) >= session.required_confirmers
        )

    def is_closed(self, rid: str) -> bool:
        session = self.sessions.get(rid)
        return session is None or session.status in (SessionStatus.FINISHED, SessionStatus.INVALIDATED)

    def post_system_message(self, msg: ProtocolMessage) -> None:
        self.posted.append(msg)

    def finish(self, rid: str) -> None:
        session = self.sessions.get(rid)
        if session is not None:
            session.status = SessionStatus.FINISHED

    def held_bytes(self) -> list[bytes]:
        """Every byte string in server state; used by server-blindness checks."""
        out: list[bytes] = []
        for keys in self.directory.values():
            out += [keys.enc, keys.sig]
        for acc in self.accounts.values():
            out += [acc.p_a, acc.salt_s, acc.salt_a]
            out += [b for b in (acc.k_cts, acc.k_ts, acc.sealed_storage) if b is not None]
            out += list(acc.sealed_parts.values())
        for s in self.sessions.values():
            out += [b for b in (s.fresh_enc, s.fresh_sig) if b is not None]
        for msg in self.posted:
            out.append(msg.signature)
            out += [v for v in msg.body.values() if isinstance(v, bytes)]
        return out


# ---------------------------------------------------------------------------
# peers


class PeerActor:
    """A peer's device: holds shares for others and answers recovery requests."""

    def __init__(self, user_id: str, backend: CryptoBackend, enc_pair: EncKeyPair, sig_pair: SigKeyPair):
        self.id = user_id
        self.backend = backend
        self.storage = Storage(user_id, enc_pair, sig_pair)
        self.chatrooms: dict[str, Chatroom] = {}
        self.active = True
        self.finished: set[str] = set()
        self.parked: dict[str, ProtocolMessage] = {}
        self.seen_confirmations: set[str] = set()
        self.audit: list[str] = []

    def join(self, chatroom: Chatroom) -> None:
        self.chatrooms[chatroom.id] = chatroom

    def receive(self, msg: ProtocolMessage, server: Server) -> list[ProtocolMessage]:
        if msg.kind is MessageKind.SHARE_DELIVERY and not msg.rid:
            self._store_share(msg, server)
            return []
        if not self.active:
            return []
        if msg.kind is MessageKind.RECOVERY_REQUEST:
            return peer_release_shares(self, msg, server)
        if msg.kind is MessageKind.RECOVERY_FINISHED:
            self.finished.add(msg.rid)
            self.parked.pop(msg.rid, None)
        return []

    def recheck(self, server: Server) -> list[ProtocolMessage]:
        """Periodic look for confirmations of parked requests."""
        if not self.active:
            return []
        out = []
        for rid, request in list(self.parked.items()):
            if server.is_confirmed(rid) or server.is_closed(rid):
                del self.parked[rid]
                out += peer_release_shares(self, request, server)
        return out

    def _store_share(self, msg: ProtocolMessage, server: Server) -> None:
        keys = server.directory.get(msg.sender)
        if keys is None or not self.backend.verify(keys.sig, msg.signed_bytes(), msg.signature):
            self.audit.append(f"rejected share from {msg.sender}: bad signature")
            return
        try:
            blob = self.backend.asym_decrypt(self.storage.enc_pair.private, msg.body["blob"])
        except DecryptionFailure:
            self.audit.append(f"rejected share from {msg.sender}: not decryptable")
            return
        b = msg.body
        held = self.storage.held_shares
        # a newer distribution from the same owner supersedes everything older
        held[:] = [h for h in held if h.owner != msg.sender or h.epoch >= b["epoch"]]
        if any(h.owner == msg.sender and h.epoch > b["epoch"] for h in held):
            return
        held.append(HeldShare(msg.sender, b["scheme"], b["part"], b["t"], b["q"], blob, b["epoch"]))

    def shares_for(self, owner: str) -> list[HeldShare]:
        return [h for h in self.storage.held_shares if h.owner == owner]

    def drop_shares_for(self, owner: str) -> None:
        self.storage.held_shares = [h for h in self.storage.held_shares if h.owner != owner]


def confirm_recovery(confirmer: PeerActor, server: Server, rid: str, user_signed_rid: bytes) -> ProtocolMessage:
    """Out-of-band step: ``confirmer`` checks the user's signature and countersigns."""
    session = server.session(rid)
    if session is None or session.status is SessionStatus.INVALIDATED:
        raise ConfirmationRejected(f"unknown or stale recovery id {rid!r}")
    if not confirmer.backend.verify(session.fresh_sig, rid_statement(rid), user_signed_rid):
        raise ConfirmationRejected("user signature over the recovery id is invalid")
    if confirmer.id not in server.peers_of(session.owner):
        raise NotAPeer(f"{confirmer.id!r} is not a peer of {session.owner!r}")
    msg = sign_message(
        confirmer.backend,
        confirmer.storage.sig_pair.private,
        MessageKind.RECOVERY_CONFIRMED,
        rid,
        confirmer.id,
        SERVER,
        {"owner": session.owner, "userSig": user_signed_rid},
    )
    server.post_confirmation(msg)
    confirmer.seen_confirmations.add(rid)
    return msg


def peer_release_shares(peer: PeerActor, request: ProtocolMessage, server: Server) -> list[ProtocolMessage]:
    rid = request.rid
    session = server.session(rid)
    if session is None or session.fresh_sig is None or request.sender != session.owner:
        peer.audit.append(f"dropped request {rid}: unknown session")
        return []
    if not peer.backend.verify(session.fresh_sig, request.signed_bytes(), request.signature):
        peer.audit.append(f"dropped request {rid}: bad signature")
        return []
    if rid in peer.finished or server.is_closed(rid):
        return []
    if not server.is_confirmed(rid):
        peer.parked[rid] = request
        return []
    peer.seen_confirmations.add(rid)
    owner = session.owner
    held = peer.shares_for(owner)
    if not held:
        return []
    backend = peer.backend
    out = []
    for h in held:
        body = {
            "scheme": h.scheme,
            "part": h.part_id,
            "t": h.threshold,
            "q": h.quorum,
            "epoch": h.epoch,
            "blob": backend.asym_encrypt(session.fresh_enc, h.share),
        }
        out.append(sign_message(backend, peer.storage.sig_pair.private, MessageKind.SHARE_DELIVERY, rid, peer.id, owner, body))
    notice = canonical_json({"owner": owner, "rid": rid, "releasedBy": peer.id})
    for chat_id in server.shared_chatrooms(peer.id, owner):
        chat = peer.chatrooms.get(chat_id)
        if chat is None:
            continue
        body = {"chat": chat_id, "blob": backend.sym_encrypt(chat.latest_key, notice).to_bytes()}
        out.append(sign_message(backend, peer.storage.sig_pair.private, MessageKind.SYSTEM_MESSAGE, rid, peer.id, chat_id, body))
    return out


# ---------------------------------------------------------------------------
# user side


@dataclass
class UserDevice:
    """The user's client while the password is known."""

    backend: CryptoBackend
    password: bytes
    salt_s: bytes
    salt_a: bytes
    storage: Storage
    parts: list[StoragePart]
    p_s: bytes
    p_a: bytes
    recovery_keys: RecoveryKeys | None = None

    @property
    def id(self) -> str:
        return self.storage.owner

    @classmethod
    def create(
        cls,
        user_id: str,
        password: bytes,
        chatrooms: list[Chatroom],
        p: int,
        backend: CryptoBackend,
        peer_keys: dict[str, PeerKeys],
    ) -> "UserDevice":
        salt_s = backend.new_salt()
        salt_a = backend.new_salt()
        while salt_a == salt_s:  # pragma: no cover - 2^-128
            salt_a = backend.new_salt()
        p_s = backend.derive_key(password, salt_s, KeyPurpose.STORAGE)
        p_a = backend.derive_key(password, salt_a, KeyPurpose.AUTH)
        storage = Storage(user_id, backend.generate_enc_pair(), backend.generate_sig_pair(), dict(peer_keys))
        parts = []
        for k, rooms in enumerate(partition_chatrooms(chatrooms, p)):
            part = StoragePart(f"part-{k}", list(rooms))
            parts.append(part)
            storage.part_table.append(PartLink(part.id, backend.random_key(), b""))
        return cls(backend, password, salt_s, salt_a, storage, parts, p_s, p_a)

    def register(self, server: Server) -> None:
        server.register_user(self.id, self.storage.enc_pair.public, self.storage.sig_pair.public)
        server.register_account(self.id, self.p_a, self.salt_s, self.salt_a)
        server.store_chatrooms([c for part in self.parts for c in part.chatrooms])

    def distribute(self, server: Server, rates: ThresholdRates, unique_peers: bool, rng, ts_enabled: bool = True) -> Distribution:
        dist = distribute_shares(self.storage, self.parts, self.p_s, rates, unique_peers, rng, self.backend, ts_enabled)
        self.recovery_keys = dist.recovery_keys
        sealed = seal_storage(self.storage, self.p_s, self.backend).to_bytes()
        server.upload(self.id, sealed, dist.sealed_parts, dist.recovery_keys.k_cts, dist.recovery_keys.k_ts)
        return dist


@dataclass
class RecoverySession:
    rid: str
    owner: str
    backend: CryptoBackend
    fresh_enc_pair: EncKeyPair
    fresh_sig_pair: SigKeyPair
    k_cts: bytes
    k_ts: bytes
    peers: list[str]
    peer_keys: dict[str, PeerKeys]
    sealed_storage: bytes
    sealed_parts: dict[str, bytes]
    status: SessionStatus = SessionStatus.AWAITING_CONFIRMATION
    ts_shares: list[Share] = field(default_factory=list)
    ts_threshold: int | None = None
    part_shares: dict[str, list[Share]] = field(default_factory=dict)
    part_thresholds: dict[str, int] = field(default_factory=dict)
    quorum: int | None = None
    recovered_parts: dict[str, StoragePart] = field(default_factory=dict)
    pending: list[HeldShare] = field(default_factory=list)
    epoch: int = 0
    p_s: bytes | None = None
    storage: Storage | None = None
    routes: dict[str, bytes] = field(default_factory=dict)
    audit: list[str] = field(default_factory=list)

    def signed_rid(self) -> bytes:
        return self.backend.sign(self.fresh_sig_pair.private, rid_statement(self.rid))

    def recovery_requests(self) -> list[ProtocolMessage]:
        return [
            sign_message(self.backend, self.fresh_sig_pair.private, MessageKind.RECOVERY_REQUEST, self.rid, self.owner, p, {"owner": self.owner})
            for p in self.peers
        ]

    def sync(self, server: Server) -> SessionStatus:
        if self.status is SessionStatus.AWAITING_CONFIRMATION and server.is_confirmed(self.rid):
            self.status = SessionStatus.COLLECTING
        return self.status

    @property
    def recovered(self) -> bool:
        return self.status in (SessionStatus.STORAGE_RECOVERED, SessionStatus.FINISHED)


def initiate_recovery(
    server: Server, user: str, ownership_proof, backend: CryptoBackend, required_confirmers: int = 1
) -> tuple[RecoverySession, ProtocolMessage]:
    """Start a fresh session; returns it with the InitializeRecovery message sent."""
    rid = server.begin_recovery(user, ownership_proof, required_confirmers)
    enc_pair, sig_pair = backend.generate_enc_pair(), backend.generate_sig_pair()
    init_msg = sign_message(
        backend,
        sig_pair.private,
        MessageKind.INITIALIZE_RECOVERY,
        rid,
        user,
        SERVER,
        {"encPub": enc_pair.public, "sigPub": sig_pair.public},
    )
    info = server.initialize_recovery(init_msg)
    if info.k_cts is None or info.sealed_storage is None:
        raise InvalidState(f"{user!r} never distributed shares")
    session = RecoverySession(
        rid,
        user,
        backend,
        enc_pair,
        sig_pair,
        info.k_cts,
        info.k_ts,
        info.peers,
        info.peer_keys,
        info.sealed_storage,
        info.sealed_parts,
    )
    return session, init_msg


def ingest_share(session: RecoverySession, delivery: ProtocolMessage, attempt: bool = True) -> RecoverySession:
    """File one delivered share; with ``attempt`` also try to rebuild parts and the Storage."""
    if session.recovered:
        return session
    keys = session.peer_keys.get(delivery.sender)
    if keys is None or not session.backend.verify(keys.sig, delivery.signed_bytes(), delivery.signature):
        session.audit.append(f"rejected share from {delivery.sender}: bad signature")
        return session
    try:
        blob = session.backend.asym_decrypt(session.fresh_enc_pair.private, delivery.body["blob"])
        share = Share.from_bytes(blob)
    except (DecryptionFailure, InvalidInput):
        session.audit.append(f"rejected share from {delivery.sender}: undecryptable")
        return session
    if session.status is SessionStatus.AWAITING_CONFIRMATION:
        session.status = SessionStatus.COLLECTING
    b = delivery.body
    _add_share(session, HeldShare(session.owner, b["scheme"], b["part"], b["t"], b["q"], share.to_bytes(), b["epoch"]))
    if attempt:
        _progress(session)
    return session


def _add_share(session: RecoverySession, held: HeldShare) -> bool:
    """File one share; returns False if it was parked or a duplicate."""
    share = Share.from_bytes(held.share)
    if held.epoch < session.epoch:
        return False
    if held.epoch > session.epoch:
        # stale shares from an older distribution are useless against the current blobs
        session.epoch = held.epoch
        session.ts_shares.clear()
        session.part_shares.clear()
        session.pending = [h for h in session.pending if h.epoch >= held.epoch]
    if held.scheme == TS:
        bucket = session.ts_shares
        session.ts_threshold = held.threshold
    elif held.scheme == CTS:
        if held.part_id not in session.sealed_parts:
            session.pending.append(held)
            return False
        bucket = session.part_shares.setdefault(held.part_id, [])
        session.part_thresholds[held.part_id] = held.threshold
        if held.quorum is not None:
            session.quorum = held.quorum
    else:
        session.audit.append(f"unknown scheme {held.scheme!r}")
        return False
    if any(s.x == share.x and s.scheme_id == share.scheme_id for s in bucket):
        return False
    bucket.append(share)
    return True


def _progress(session: RecoverySession) -> None:
    opened = False
    for part_id in list(session.part_shares):
        if part_id not in session.recovered_parts and try_reconstruct_part(session, part_id) is not None:
            opened = True
    if try_reconstruct_storage(session) is not None:
        opened = True
    if opened and session.pending:
        pending, session.pending = session.pending, []
        for held in pending:
            _add_share(session, held)
        if not session.recovered:
            _progress(session)


def try_reconstruct_part(session: RecoverySession, part_id: str) -> StoragePart | None:
    if part_id in session.recovered_parts:
        return session.recovered_parts[part_id]
    shares = session.part_shares.get(part_id, [])
    t = session.part_thresholds.get(part_id)
    if t is None or len(shares) < t or part_id not in session.sealed_parts:
        return None
    wrapped = reconstruct(shares, t)
    try:
        k_sp = unwrap_part_key(Ciphertext.from_bytes(wrapped), session.k_cts, session.backend)
        part = open_part(SealedBlob.from_bytes(session.sealed_parts[part_id]), k_sp, session.backend)
    except (AuthenticationFailure, InvalidInput) as exc:
        raise ReconstructionCorrupt(f"part {part_id!r}: {exc}") from None
    session.recovered_parts[part_id] = part
    return part


def try_reconstruct_storage(session: RecoverySession) -> bytes | None:
    if session.p_s is not None:
        return session.p_s
    backend = session.backend
    candidates: dict[str, bytes] = {}
    if session.ts_threshold is not None and len(session.ts_shares) >= session.ts_threshold:
        s_ts = reconstruct(session.ts_shares, session.ts_threshold)
        try:
            candidates[TS] = backend.sym_decrypt(session.k_ts, Ciphertext.from_bytes(s_ts))
        except AuthenticationFailure:
            raise ReconstructionCorrupt("S_TS failed to decrypt under K_TS") from None
    embedded = [p.cts_share for p in session.recovered_parts.values() if p.cts_share is not None]
    if session.quorum is not None and len(embedded) >= session.quorum:
        s_cts = reconstruct(embedded, session.quorum)
        try:
            candidates[CTS] = backend.sym_decrypt(session.k_cts, Ciphertext.from_bytes(s_cts))
        except AuthenticationFailure:
            raise ReconstructionCorrupt("S_CTS failed to decrypt under K_CTS") from None
    if not candidates:
        return None
    if len(set(candidates.values())) != 1:
        raise ReconstructionCorrupt("TS and CTS routes disagree on P_S")
    session.routes.update(candidates)
    p_s = next(iter(candidates.values()))
    try:
        storage = open_storage(SealedBlob.from_bytes(session.sealed_storage), p_s, backend)
    except AuthenticationFailure:
        raise ReconstructionCorrupt("recovered P_S does not open the Storage") from None
    for link in storage.part_table:
        if link.part_id in session.recovered_parts or link.part_id not in session.sealed_parts:
            continue
        blob = session.sealed_parts[link.part_id]
        if backend.digest(blob) != link.part_hash:
            session.audit.append(f"part {link.part_id} hash mismatch")
            continue
        session.recovered_parts[link.part_id] = open_part(SealedBlob.from_bytes(blob), link.part_key, backend)
    session.p_s = p_s
    session.storage = storage
    session.status = SessionStatus.STORAGE_RECOVERED
    return p_s


def finish_recovery(
    session: RecoverySession,
    server: Server,
    new_password: bytes | None = None,
    rates: ThresholdRates | None = None,
    unique_peers: bool = False,
    rng=None,
    ts_enabled: bool = True,
) -> tuple[ProtocolMessage, UserDevice | None, Distribution | None]:
    """Broadcast RecoveryFinished; with ``new_password`` also re-key and redistribute."""
    if session.status is not SessionStatus.STORAGE_RECOVERED:
        raise InvalidState(f"cannot finish a session in state {session.status.value}")
    backend = session.backend
    msg = sign_message(
        backend, session.fresh_sig_pair.private, MessageKind.RECOVERY_FINISHED, session.rid, session.owner, BROADCAST, {"owner": session.owner}
    )
    server.finish(session.rid)
    session.status = SessionStatus.FINISHED
    if new_password is None:
        return msg, None, None
    if rates is None or rng is None:
        raise InvalidInput("redistribution needs rates and an rng")
    storage = session.storage
    parts = [session.recovered_parts[link.part_id] for link in storage.part_table]
    device = UserDevice(backend, new_password, backend.new_salt(), backend.new_salt(), storage, parts, b"", b"")
    device.p_s = backend.derive_key(new_password, device.salt_s, KeyPurpose.STORAGE)
    device.p_a = backend.derive_key(new_password, device.salt_a, KeyPurpose.AUTH)
    server.register_account(device.id, device.p_a, device.salt_s, device.salt_a)
    server.register_user(device.id, storage.enc_pair.public, storage.sig_pair.public)
    dist = device.distribute(server, rates, unique_peers, rng, ts_enabled)
    return msg, device, dist


__all__ = [
    "Distribution",
    "MessageKind",
    "PartstoreError",
    "PeerActor",
    "ProtocolMessage",
    "RecoveryInit",
    "RecoverySession",
    "Server",
    "SessionStatus",
    "UserDevice",
    "confirm_recovery",
    "distribute_shares",
    "finish_recovery",
    "ingest_share",
    "initiate_recovery",
    "peer_release_shares",
    "try_reconstruct_part",
    "try_reconstruct_storage",
    "unwrap_part_key",
    "wrap_part_key",
]
