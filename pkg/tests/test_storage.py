import json

import pytest

from partstore.crypto import Ciphertext
from partstore.errors import AuthenticationFailure, InvalidInput
from partstore.sharing import Share, make_scheme_id
from partstore.storage import (
    MAGIC,
    BlobKind,
    Chatroom,
    HeldShare,
    PartLink,
    PeerKeys,
    RecoveryKeys,
    SealedBlob,
    Storage,
    StoragePart,
    baseline_chat_key_bytes,
    canonical_json,
    collect_part_occurrences,
    collect_part_peers,
    collect_peers,
    estimate_overhead,
    open_part,
    open_storage,
    partition_chatrooms,
    seal_part,
    seal_storage,
)


def room(cid, *peers, key=b"k" * 32):
    return Chatroom(cid, ("u",) + peers, [key])


@pytest.fixture
def sample(backend):
    part = StoragePart("part-0", [room("c1", "a", "b"), room("c2", "b")], Share(1, b"xyz", make_scheme_id("u", "CTS", 1)))
    storage = Storage(
        "u",
        backend.generate_enc_pair(),
        backend.generate_sig_pair(),
        {"a": PeerKeys(b"ea", b"va"), "b": PeerKeys(b"eb", b"vb")},
        [PartLink("part-0", backend.random_key(), b"h" * 32)],
        {"a": 1, "b": 1},
        {"a": 1, "b": 2},
        3,
        [HeldShare("a", "TS", None, 2, None, b"\x01\x02"), HeldShare("b", "CTS", "part-1", 1, 2, b"\x03")],
    )
    return storage, part


def test_storage_seal_round_trip(backend, sample):
    storage, _ = sample
    key = backend.random_key()
    blob = seal_storage(storage, key, backend).to_bytes()
    assert blob[:4] == MAGIC and blob[4] == BlobKind.STORAGE and blob[5] == 1
    assert open_storage(SealedBlob.from_bytes(blob), key, backend) == storage


def test_part_seal_round_trip(backend, sample):
    _, part = sample
    key = backend.random_key()
    blob = seal_part(part, key, backend)
    assert open_part(SealedBlob.from_bytes(blob.to_bytes()), key, backend) == part


def test_cross_key_rejection(backend, sample):
    storage, part = sample
    k1, k2 = backend.random_key(), backend.random_key()
    with pytest.raises(AuthenticationFailure):
        open_storage(seal_storage(storage, k1, backend), k2, backend)
    with pytest.raises(AuthenticationFailure):
        open_part(seal_part(part, k1, backend), k2, backend)


def test_blob_kind_checked(backend, sample):
    storage, _ = sample
    key = backend.random_key()
    with pytest.raises(InvalidInput):
        open_part(seal_storage(storage, key, backend), key, backend)


def test_blob_tamper_and_framing(backend, sample):
    _, part = sample
    key = backend.random_key()
    blob = bytearray(seal_part(part, key, backend).to_bytes())
    blob[-20] ^= 0x80
    with pytest.raises(AuthenticationFailure):
        open_part(SealedBlob.from_bytes(bytes(blob)), key, backend)
    with pytest.raises(InvalidInput):
        SealedBlob.from_bytes(bytes(blob[:-1]))
    with pytest.raises(InvalidInput):
        SealedBlob.from_bytes(b"XXXX" + bytes(blob[4:]))
    bad_version = bytearray(blob)
    bad_version[5] = 9
    with pytest.raises(InvalidInput):
        SealedBlob.from_bytes(bytes(bad_version))


def test_canonical_json_is_stable(sample):
    storage, _ = sample
    a = canonical_json(storage.to_dict())
    assert a == canonical_json(json.loads(a))
    assert b" " not in a
    keys = list(json.loads(a))
    assert keys == sorted(keys)


def test_chatroom_validation():
    with pytest.raises(InvalidInput):
        Chatroom("c", ("u",), [b"k" * 32])
    with pytest.raises(InvalidInput):
        Chatroom("c", ("u", "a"), [])
    c = Chatroom("c", ("b", "u", "a", "a"), [b"1" * 32, b"2" * 32])
    assert c.participants == ("a", "b", "u")
    assert c.latest_key == b"2" * 32
    with pytest.raises(InvalidInput):
        StoragePart("p", [room("c1", "a"), room("c1", "b")])


def test_partition_round_robin():
    rooms = [room(f"c{i}", "a") for i in (3, 0, 4, 1, 2)]
    parts = partition_chatrooms(rooms, 2)
    assert [[r.id for r in p] for p in parts] == [["c0", "c2", "c4"], ["c1", "c3"]]
    assert [len(p) for p in partition_chatrooms(rooms, 5)] == [1] * 5
    assert partition_chatrooms(rooms, 7)[6] == []
    with pytest.raises(InvalidInput):
        partition_chatrooms(rooms, 0)


def test_peer_lists():
    part = StoragePart("p", [room("c1", "a", "b"), room("c2", "b", "c")])
    assert collect_part_peers(part, "u") == ["a", "b", "c"]
    assert collect_part_occurrences(part, "u") == [("a", "c1"), ("b", "c1"), ("b", "c2"), ("c", "c2")]
    other = StoragePart("q", [room("c3", "d")])
    assert collect_peers("u", [part, other]) == ["a", "b", "c", "d"]


def test_overhead_estimate():
    assert estimate_overhead(4, 70) == 4 * (580 + 610) + 70 * 90 - 180 == 10880
    assert estimate_overhead(1, 0) == 1010
    assert baseline_chat_key_bytes(60) == 22800
    assert estimate_overhead(4, 70) / baseline_chat_key_bytes(60) < 0.5
    with pytest.raises(InvalidInput):
        estimate_overhead(0, 5)
    with pytest.raises(InvalidInput):
        estimate_overhead(1, -1)


def test_recovery_keys_check(backend):
    p_s = backend.random_key()
    k_cts, k_ts = backend.random_key(), backend.random_key()
    keys = RecoveryKeys(k_cts, k_ts, backend.sym_encrypt(k_cts, p_s), backend.sym_encrypt(k_ts, p_s))
    assert keys.check(backend) == p_s
    mixed = RecoveryKeys(k_cts, k_ts, keys.s_cts, backend.sym_encrypt(k_ts, backend.random_key()))
    with pytest.raises(AuthenticationFailure):
        mixed.check(backend)
    assert isinstance(keys.s_cts, Ciphertext)
