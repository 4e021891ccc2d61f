"""Vectorized numpy implementations of the hot kernels (no JIT required)."""

import numpy as np

from ..gf256 import EXP, LOG, MUL_TABLE


def shamir_eval(coeffs, xs):
    """Evaluate byte-wise polynomials at every x.

    ``coeffs`` is ``uint8[t, m]`` with row 0 holding the secret bytes;
    returns ``uint8[n, m]``.
    """
    xs = np.asarray(xs, dtype=np.uint8)
    acc = np.broadcast_to(coeffs[-1], (xs.size, coeffs.shape[1])).copy()
    for row in coeffs[-2::-1]:
        acc = MUL_TABLE[acc, xs[:, None]] ^ row
    return acc


def shamir_interpolate(xs, ys):
    """Lagrange interpolation at x=0 over GF(256); ``ys`` is ``uint8[k, m]``."""
    xs = np.asarray(xs, dtype=np.int64)
    k = xs.size
    logx = LOG[xs]
    diff = xs[:, None] ^ xs[None, :]
    np.fill_diagonal(diff, 1)
    # l_i(0) = prod_{j != i} x_j / (x_j - x_i); in characteristic 2 subtraction is xor
    num = logx.sum() - logx
    den = LOG[diff].sum(axis=1)
    basis = EXP[(num - den) % 255]
    terms = MUL_TABLE[basis[:, None], ys]
    if k == 0:
        return np.zeros(ys.shape[1], dtype=np.uint8)
    return np.bitwise_xor.reduce(terms, axis=0).astype(np.uint8)


def count_trials(chat_peers, active, p, q, unique, ts_enabled, part_thr, ts_thr):
    """Recovered-part counts and storage flags for a batch of trials.

    ``chat_peers`` is ``int[T, C, S]`` padded with -1, ``active`` is
    ``bool[T, pool]``; chat ``j`` lives in part ``j % p``. ``part_thr`` and
    ``ts_thr`` map a shareholder count to its threshold.
    """
    n_trials, n_chats, _ = chat_peers.shape
    pool = active.shape[1]
    valid = chat_peers >= 0
    member = np.zeros((n_trials, n_chats, pool + 1), dtype=bool)
    t_idx, c_idx, _ = np.nonzero(valid)
    member[t_idx, c_idx, chat_peers[valid]] = True
    member = member[:, :, :pool]
    act = active[:, None, :]

    ok = np.zeros(n_trials, dtype=np.int64)
    for k in range(p):
        m = member[:, k::p, :]
        if unique:
            held = m.any(axis=1)
            n = held.sum(axis=1)
            got = (held & active).sum(axis=1)
        else:
            n = m.sum(axis=(1, 2))
            got = (m & act).sum(axis=(1, 2))
        ok += (n > 0) & (got >= part_thr[n])
    full = ok >= q
    if ts_enabled:
        held = member.any(axis=1)
        n = held.sum(axis=1)
        got = (held & active).sum(axis=1)
        full |= (n > 0) & (got >= ts_thr[n])
    return ok, full
