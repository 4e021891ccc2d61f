"""Time the numba kernels against the numpy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5]

Both backends must return identical arrays; the script checks that before
reporting timings.
"""

import argparse
import time

import numpy as np

from partstore import kernels
from partstore.simulation import ScenarioConfig, draw_batch, threshold_tables


def best_of(fn, repeat):
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        times.append(time.perf_counter() - t0)
    return min(times), out


def cases():
    rng = np.random.default_rng(0)
    coeffs = rng.integers(0, 256, size=(40, 4096), dtype=np.uint8)
    xs = np.arange(1, 101, dtype=np.uint8)
    yield "shamir_eval t=40 n=100 m=4096", lambda: kernels.shamir_eval(coeffs, xs)

    ys = rng.integers(0, 256, size=(40, 4096), dtype=np.uint8)
    pts = np.arange(1, 41, dtype=np.uint8)
    yield "shamir_interpolate k=40 m=4096", lambda: kernels.shamir_interpolate(pts, ys)

    for unique in (True, False):
        cfg = ScenarioConfig(8, 8, 0.7, unique, True, trials=2000, master_seed=1)
        chat_peers, active = draw_batch(cfg.population, cfg.master_seed, cfg.rate_inactive, 0, cfg.trials)
        part_thr, ts_thr = threshold_tables(cfg)
        label = f"count_trials 2000 trials p=8 unique={unique}"
        yield label, (lambda c=cfg, cp=chat_peers, a=active, pt=part_thr, tt=ts_thr: kernels.count_trials(cp, a, c.parts, c.q, c.unique_peers, c.ts_enabled, pt, tt))


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    args = parser.parse_args()

    if not kernels.numba_available():
        print("numba not importable; only the numpy backend can run")
        return
    print(f"{'kernel':<42} {'numpy [ms]':>11} {'numba [ms]':>11} {'speedup':>8}")
    for label, fn in cases():
        kernels.use_backend("numpy")
        t_np, out_np = best_of(fn, args.repeat)
        kernels.use_backend("numba")
        fn()  # compile
        t_nb, out_nb = best_of(fn, args.repeat)
        if isinstance(out_np, tuple):
            same = all(np.array_equal(a, b) for a, b in zip(out_np, out_nb))
        else:
            same = np.array_equal(out_np, out_nb)
        assert same, f"backends disagree on {label}"
        print(f"{label:<42} {t_np * 1e3:>11.2f} {t_nb * 1e3:>11.2f} {t_np / t_nb:>7.1f}x")


if __name__ == "__main__":
    main()
