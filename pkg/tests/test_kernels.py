import os
import subprocess
import sys

import numpy as np
import pytest

from partstore import kernels
from partstore.kernels import _numpy
from partstore.simulation import ScenarioConfig, draw_batch, threshold_tables

numba_only = pytest.mark.skipif(not kernels.numba_available(), reason="numba not installed")


@numba_only
@pytest.mark.parametrize("t,n,m", [(1, 1, 1), (3, 5, 17), (40, 100, 300), (255, 255, 4)])
def test_eval_parity(t, n, m):
    from partstore.kernels import _numba

    rng = np.random.default_rng(t * n)
    coeffs = rng.integers(0, 256, size=(t, m), dtype=np.uint8)
    xs = np.arange(1, n + 1, dtype=np.uint8)
    assert np.array_equal(_numpy.shamir_eval(coeffs, xs), _numba.shamir_eval(coeffs, xs))


@numba_only
@pytest.mark.parametrize("k,m", [(1, 5), (2, 1), (13, 64), (255, 3)])
def test_interpolate_parity(k, m):
    from partstore.kernels import _numba

    rng = np.random.default_rng(k)
    xs = rng.permutation(np.arange(1, 256))[:k].astype(np.uint8)
    ys = rng.integers(0, 256, size=(k, m), dtype=np.uint8)
    assert np.array_equal(_numpy.shamir_interpolate(xs, ys), _numba.shamir_interpolate(xs, ys))


@numba_only
@pytest.mark.parametrize("p,q,unique,ts", [(1, 1, True, False), (3, 2, False, True), (8, 6, True, True), (12, 12, False, False)])
def test_count_parity(p, q, unique, ts):
    from partstore.kernels import _numba

    cfg = ScenarioConfig(p, q, 0.7, unique, ts, trials=300, master_seed=p)
    chat_peers, active = draw_batch(cfg.population, cfg.master_seed, cfg.rate_inactive, 0, 300)
    part_thr, ts_thr = threshold_tables(cfg)
    a = _numpy.count_trials(chat_peers, active, p, q, unique, ts, part_thr, ts_thr)
    b = _numba.count_trials(chat_peers, active, p, q, unique, ts, part_thr, ts_thr)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_dispatch_round_trip(kernel_backend):
    coeffs = np.array([[7, 9], [1, 2], [200, 3]], dtype=np.uint8)
    ys = kernels.shamir_eval(coeffs, np.array([1, 2, 3], dtype=np.uint8))
    assert kernels.shamir_interpolate(np.array([1, 2, 3], dtype=np.uint8), ys).tolist() == [7, 9]
    assert kernels.BACKEND == kernel_backend


def test_unknown_backend():
    with pytest.raises(ValueError):
        kernels.use_backend("cuda")


def test_env_flag_forces_numpy():
    env = dict(os.environ, PARTSTORE_NUMBA="0")
    out = subprocess.run(
        [sys.executable, "-c", "from partstore import kernels; print(kernels.BACKEND)"],
        env=env, capture_output=True, text=True, check=True,
    )
    assert out.stdout.strip() == "numpy"
