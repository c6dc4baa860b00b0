#!/usr/bin/env python3
"""Benchmark the compiled kernel against the pure-Python fallback.

Measures the three operations the attack loop lives on (hashing,
insertion, integer estimation) plus an end-to-end attack run on each
backend. Run from the repository root:

    python3 benchmarks/bench_kernels.py [--quick]
"""

import argparse
import importlib
import time

from hllrt._kernel import _pykernel


def load_backends():
    backends = [("pure", _pykernel)]
    try:
        compiled = importlib.import_module("hllrt._kernel._ckernel")
        backends.insert(0, ("compiled", compiled))
    except ImportError:
        print("note: compiled kernel not built, benchmarking pure only")
    return backends


def bench(label, fn, number):
    start = time.perf_counter()
    fn(number)
    elapsed = time.perf_counter() - start
    rate = number / elapsed
    print(f"  {label:<28} {elapsed * 1e9 / number:>9.0f} ns/op  {rate / 1e6:>8.2f} Mop/s")
    return elapsed / number


def bench_backend(name, kernel, scale):
    print(f"\n[{name}]")
    alpha = 0.7213 / (1 + 1.079 / 4096)
    elements = [kernel.stream_element(1, k) for k in range(scale)]

    def run_hash(n):
        h = kernel.hash64
        for e in elements[:n]:
            h(e, 42)

    def run_insert(n):
        core = kernel.RegisterFile(4096, 6, 0, alpha, 2.5)
        insert = core.insert
        for e in elements[:n]:
            insert(e)

    def run_estimate(n):
        core = kernel.RegisterFile(4096, 6, 0, alpha, 2.5)
        core.insert_span(3, 0, 10000)
        estimate = core.estimate
        for _ in range(n):
            estimate()

    def run_span(n):
        core = kernel.RegisterFile(4096, 6, 0, alpha, 2.5)
        core.insert_span(5, 0, n)

    results = {}
    results["hash64"] = bench("hash64", run_hash, scale)
    results["insert"] = bench("insert", run_insert, scale)
    results["estimate"] = bench("estimate", run_estimate, scale)
    results["insert_span"] = bench("insert_span (gen+insert)", run_span, scale)
    return results


def bench_attack(scale_c):
    # The attack loop itself goes through the package API, which picks
    # the backend from HLLRT_PURE at import time, so time it per
    # backend in subprocesses.
    import subprocess
    import sys

    code = (
        "import time\n"
        "from hllrt import HllParams, make_oracle, run_attack, kernel_backend\n"
        "params = HllParams(4096, 6)\n"
        "t0 = time.perf_counter()\n"
        f"run = run_attack(lambda: make_oracle(params), 1, {scale_c})\n"
        "dt = time.perf_counter() - t0\n"
        "print('  attack C=%d on %s: %.2fs (%d-element set)'\n"
        f"      % ({scale_c}, kernel_backend(), dt, len(run.attack_set.elements)))\n"
    )
    print("\n[end-to-end attack]")
    for env_extra in ({}, {"HLLRT_PURE": "1"}):
        import os

        env = dict(os.environ, **env_extra)
        subprocess.run([sys.executable, "-c", code], env=env, check=True)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--quick", action="store_true", help="smaller workloads")
    args = parser.parse_args()
    scale = 50_000 if args.quick else 200_000

    per_backend = {}
    for name, kernel in load_backends():
        per_backend[name] = bench_backend(name, kernel, scale)

    if len(per_backend) == 2:
        print("\n[speedup compiled vs pure]")
        for op in per_backend["pure"]:
            ratio = per_backend["pure"][op] / per_backend["compiled"][op]
            print(f"  {op:<28} {ratio:>6.1f}x")

    bench_attack(10_000 if args.quick else 40_000)


if __name__ == "__main__":
    main()
