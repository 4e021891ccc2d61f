"""Arithmetic in GF(2^8) with the reduction polynomial x^8+x^4+x^3+x+1 (0x11B)."""

import numpy as np

POLY = 0x11B
GENERATOR = 0x03


def _slow_mul(a: int, b: int) -> int:
    """Carry-less multiply with reduction; used only to build the tables."""
    res = 0
    while b:
        if b & 1:
            res ^= a
        a <<= 1
        if a & 0x100:
            a ^= POLY
        b >>= 1
    return res


def _build_tables():
    exp = np.zeros(512, dtype=np.uint8)
    log = np.zeros(256, dtype=np.int32)
    x = 1
    for i in range(255):
        exp[i] = x
        log[x] = i
        x = _slow_mul(x, GENERATOR)
    exp[255:510] = exp[:255]
    exp[510:] = exp[:2]
    return exp, log


EXP, LOG = _build_tables()
_EXP_LIST = EXP.tolist()
_LOG_LIST = LOG.tolist()

MUL_TABLE = np.zeros((256, 256), dtype=np.uint8)
_nz = np.arange(1, 256)
MUL_TABLE[1:, 1:] = EXP[(LOG[_nz][:, None] + LOG[_nz][None, :]) % 255]
INV_TABLE = np.zeros(256, dtype=np.uint8)
INV_TABLE[1:] = EXP[(255 - LOG[_nz]) % 255]


def gf_mul(a: int, b: int) -> int:
    if not a or not b:
        return 0
    return _EXP_LIST[_LOG_LIST[a] + _LOG_LIST[b]]


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("0 has no inverse in GF(256)")
    return _EXP_LIST[255 - _LOG_LIST[a]]


def gf_div(a: int, b: int) -> int:
    return gf_mul(a, gf_inv(b))
