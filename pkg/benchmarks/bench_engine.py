#!/usr/bin/env python3
"""Compiled slot kernel against its pure-Python fallback.

Both paths consume the same pre-drawn randomness, so besides timing them
the script checks that they return identical accumulators.

    python3 benchmarks/bench_engine.py --N 8 --slots 200000
"""
import argparse
import time

import numpy as np

from htslb import build_config, make_policy
from htslb import kernels
from htslb.engine import N_BATCHES, draw_chunk, make_streams
from htslb.policies import compile_policy
from htslb.processes import build_arrival_process, build_service_process


def time_kernel(fn, cfg, kp, draws, repeats):
    a_tot, s, u_disp = draws
    n = a_tot.size
    best = float("inf")
    for _ in range(repeats):
        q = np.zeros(cfg.N, dtype=np.int64)
        obs = np.zeros(n, dtype=np.int64)
        states = np.zeros((1, cfg.N), dtype=np.int64)
        counters = np.zeros(4, dtype=np.int64)
        acc = np.zeros((N_BATCHES, kernels.ACC_WIDTH), dtype=np.int64)
        trace = np.zeros((0, 5), dtype=np.int64)
        start = time.perf_counter()
        fn(q, 0, a_tot, s, u_disp, kp.pos_cdf, kp.w_cdf, kp.mix, 0, n, 1, n, N_BATCHES,
           obs, states, counters, acc, trace, False, cfg.ceiling, False)
        best = min(best, time.perf_counter() - start)
    return best, acc


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--N", type=int, default=8)
    ap.add_argument("--alpha", type=float, default=2.0)
    ap.add_argument("--policy", default="jsq")
    ap.add_argument("--slots", type=int, default=200_000, help="slots per timed call")
    ap.add_argument("--repeats", type=int, default=3)
    args = ap.parse_args()

    cfg = build_config(dict(N=args.N, alpha=args.alpha, warmup=0, horizon=args.slots))
    kp = compile_policy(make_policy(args.policy, d=2 if args.policy == "power_of_d" else None),
                        cfg.N, cfg.mu_list)
    draws = draw_chunk(make_streams(0), build_arrival_process(cfg), build_service_process(cfg),
                       args.slots)

    # compile outside the timed region
    time_kernel(kernels.advance, cfg, kp, tuple(d[:10] for d in draws), 1)
    fast, acc_fast = time_kernel(kernels.advance, cfg, kp, draws, args.repeats)
    slow, acc_slow = time_kernel(kernels.advance.py_func, cfg, kp, draws, 1)

    print(f"N={cfg.N} policy={args.policy} slots={args.slots}")
    print(f"  numba   {fast:9.4f} s  {args.slots / fast:12.0f} slots/s")
    print(f"  python  {slow:9.4f} s  {args.slots / slow:12.0f} slots/s")
    print(f"  speedup {slow / fast:9.1f}x   identical={np.array_equal(acc_fast, acc_slow)}")


if __name__ == "__main__":
    main()
