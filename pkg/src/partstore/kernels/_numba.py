"""numba-compiled versions of the hot kernels; same signatures as ``_numpy``."""

import numpy as np
from numba import njit

from ..gf256 import EXP, LOG, MUL_TABLE

_EXP = EXP.astype(np.int64)
_LOG = LOG.astype(np.int64)


@njit(cache=True)
def _eval(coeffs, xs, mul):
    t, m = coeffs.shape
    n = xs.shape[0]
    out = np.empty((n, m), dtype=np.uint8)
    for i in range(n):
        row = mul[xs[i]]
        for b in range(m):
            out[i, b] = coeffs[t - 1, b]
        for j in range(t - 2, -1, -1):
            for b in range(m):
                out[i, b] = row[out[i, b]] ^ coeffs[j, b]
    return out


@njit(cache=True)
def _interpolate(xs, ys, mul, exp, log):
    k, m = ys.shape
    out = np.zeros(m, dtype=np.uint8)
    for i in range(k):
        lg = 0
        for j in range(k):
            if j != i:
                lg += log[xs[j]] - log[xs[j] ^ xs[i]]
        row = mul[exp[lg % 255]]
        for b in range(m):
            out[b] ^= row[ys[i, b]]
    return out


@njit(cache=True)
def _count(chat_peers, active, p, q, unique, ts_enabled, part_thr, ts_thr):
    n_trials, n_chats, width = chat_peers.shape
    pool = active.shape[1]
    ok = np.zeros(n_trials, dtype=np.int64)
    full = np.zeros(n_trials, dtype=np.bool_)
    seen = np.zeros(pool, dtype=np.int64)
    stamp = 0
    for t in range(n_trials):
        for k in range(p):
            stamp += 1
            n = 0
            got = 0
            for c in range(k, n_chats, p):
                for s in range(width):
                    peer = chat_peers[t, c, s]
                    if peer < 0:
                        break
                    if unique:
                        if seen[peer] == stamp:
                            continue
                        seen[peer] = stamp
                    n += 1
                    if active[t, peer]:
                        got += 1
            if n > 0 and got >= part_thr[n]:
                ok[t] += 1
        full[t] = ok[t] >= q
        if ts_enabled and not full[t]:
            stamp += 1
            n = 0
            got = 0
            for c in range(n_chats):
                for s in range(width):
                    peer = chat_peers[t, c, s]
                    if peer < 0:
                        break
                    if seen[peer] == stamp:
                        continue
                    seen[peer] = stamp
                    n += 1
                    if active[t, peer]:
                        got += 1
            if n > 0 and got >= ts_thr[n]:
                full[t] = True
    return ok, full


def shamir_eval(coeffs, xs):
    return _eval(np.ascontiguousarray(coeffs, dtype=np.uint8), np.asarray(xs, dtype=np.int64), MUL_TABLE)


def shamir_interpolate(xs, ys):
    return _interpolate(np.asarray(xs, dtype=np.int64), np.ascontiguousarray(ys, dtype=np.uint8), MUL_TABLE, _EXP, _LOG)


def count_trials(chat_peers, active, p, q, unique, ts_enabled, part_thr, ts_thr):
    return _count(
        np.ascontiguousarray(chat_peers, dtype=np.int64),
        np.ascontiguousarray(active, dtype=np.bool_),
        int(p),
        int(q),
        bool(unique),
        bool(ts_enabled),
        np.asarray(part_thr, dtype=np.int64),
        np.asarray(ts_thr, dtype=np.int64),
    )
