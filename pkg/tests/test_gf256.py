import numpy as np
import pytest

from partstore.gf256 import EXP, INV_TABLE, LOG, MUL_TABLE, gf_div, gf_inv, gf_mul

A = np.arange(256)


def _peasant(a, b):
    # independent oracle: shift-and-add multiply reduced by x^8+x^4+x^3+x+1
    p = 0
    for _ in range(8):
        if b & 1:
            p ^= a
        hi = a & 0x80
        a = (a << 1) & 0xFF
        if hi:
            a ^= 0x1B
        b >>= 1
    return p


def test_table_matches_independent_multiply():
    oracle = np.array([[_peasant(a, b) for b in range(256)] for a in range(256)], dtype=np.uint8)
    assert np.array_equal(MUL_TABLE, oracle)


def test_known_products():
    # inverse pair and product from the AES standard
    assert gf_mul(0x53, 0xCA) == 0x01
    assert gf_mul(0x57, 0x83) == 0xC1
    assert gf_mul(0x57, 0x13) == 0xFE


def test_commutative_and_identities():
    assert np.array_equal(MUL_TABLE, MUL_TABLE.T)
    assert np.array_equal(MUL_TABLE[1], A.astype(np.uint8))
    assert not MUL_TABLE[0].any()


def test_associative_exhaustive():
    left = MUL_TABLE[MUL_TABLE[A[:, None, None], A[None, :, None]], A[None, None, :]]
    right = MUL_TABLE[A[:, None, None], MUL_TABLE[A[None, :, None], A[None, None, :]]]
    assert np.array_equal(left, right)


def test_distributive_exhaustive():
    a, b, c = A[:, None, None], A[None, :, None], A[None, None, :]
    assert np.array_equal(MUL_TABLE[a, b ^ c], MUL_TABLE[a, b] ^ MUL_TABLE[a, c])


def test_inverses():
    assert np.all(MUL_TABLE[A[1:], INV_TABLE[1:]] == 1)
    for a in range(1, 256):
        assert gf_mul(a, gf_inv(a)) == 1
        assert gf_div(a, a) == 1
    with pytest.raises(ZeroDivisionError):
        gf_inv(0)


def test_generator_cycles_through_all_units():
    assert sorted(EXP[:255].tolist()) == list(range(1, 256))
    assert all(EXP[LOG[a]] == a for a in range(1, 256))


def test_scalar_and_table_agree():
    rng = np.random.default_rng(0)
    for a, b in rng.integers(0, 256, size=(500, 2)):
        assert gf_mul(int(a), int(b)) == MUL_TABLE[a, b]
