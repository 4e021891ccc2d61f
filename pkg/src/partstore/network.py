"""In-memory FIFO transport that drives the protocol actors to quiescence."""

from __future__ import annotations

from collections import deque

from .protocol import (
    BROADCAST,
    SERVER,
    MessageKind,
    PeerActor,
    ProtocolMessage,
    RecoverySession,
    Server,
    SessionStatus,
    finish_recovery,
    ingest_share,
)


class Network:
    """Deliver messages one at a time; when the queue drains, let peers re-check.

    Delivery stops once a full re-check round produces nothing new.
    """

    def __init__(self, server: Server, trace: bool = False):
        self.server = server
        self.peers: dict[str, PeerActor] = {}
        self.sessions: dict[str, RecoverySession] = {}
        self.queue: deque[ProtocolMessage] = deque()
        self.log: list[ProtocolMessage] | None = [] if trace else None
        self.delivered = 0
        self.auto_finish = True
        self.observers: list = []  # called with each message after delivery

    def add_peer(self, peer: PeerActor) -> None:
        self.peers[peer.id] = peer

    def attach(self, session: RecoverySession) -> None:
        self.sessions[session.owner] = session

    def send(self, *messages: ProtocolMessage) -> None:
        self.queue.extend(messages)

    def send_all(self, messages) -> None:
        self.queue.extend(messages)

    def record(self, msg: ProtocolMessage) -> None:
        if self.log is not None:
            self.log.append(msg)

    def run(self, max_ticks: int = 3) -> int:
        """Process until quiescent; returns how many messages were delivered."""
        start = self.delivered
        idle = 0
        while idle < max_ticks:
            if self.queue:
                idle = 0
                self._deliver(self.queue.popleft())
                continue
            produced = []
            for peer in self.peers.values():
                produced += peer.recheck(self.server)
            if produced:
                self.queue.extend(produced)
            else:
                idle += 1
        return self.delivered - start

    def _deliver(self, msg: ProtocolMessage) -> None:
        self.delivered += 1
        self.record(msg)
        r = msg.recipient
        if r == BROADCAST:
            for peer in self.peers.values():
                if peer.id != msg.sender:
                    self.queue.extend(peer.receive(msg, self.server))
        elif r == SERVER:
            if msg.kind is MessageKind.RECOVERY_CONFIRMED:
                self.server.post_confirmation(msg)
        elif r in self.sessions:
            session = self.sessions[r]
            if msg.kind is MessageKind.SHARE_DELIVERY and msg.rid == session.rid:
                ingest_share(session, msg)
                if self.auto_finish and session.status is SessionStatus.STORAGE_RECOVERED:
                    done, _, _ = finish_recovery(session, self.server)
                    self.queue.append(done)
        elif r in self.peers:
            self.queue.extend(self.peers[r].receive(msg, self.server))
        elif msg.kind is MessageKind.SYSTEM_MESSAGE:
            self.server.post_system_message(msg)
        for observe in self.observers:
            observe(msg)
