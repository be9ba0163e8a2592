"""Timing comparison of the numba and pure-numpy kernel backends.

Run directly:  python benchmarks/bench_kernels.py
The script re-executes itself once per backend (the backend is fixed at
import time by the DCCFR_BACKEND environment variable) and prints a table.
"""

import os
import subprocess
import sys
import time

import numpy as np


def time_fn(fn, *args, repeat=2000, warmup=5):
    for _ in range(warmup):
        fn(*args)
    t0 = time.perf_counter()
    for _ in range(repeat):
        fn(*args)
    return (time.perf_counter() - t0) / repeat * 1e6  # microseconds


def run_benchmarks():
    from dccfr import kernels
    from dccfr.rl import nets

    rng = np.random.default_rng(0)
    results = []

    net = nets.init_mlp((14, 128, 64, 16, 3), rng)
    x1 = rng.normal(size=(1, 14))
    xb = rng.normal(size=(256, 14))
    args1 = (net.theta, net.sizes, net.w_off, net.b_off, net.h_off, x1)
    argsb = (net.theta, net.sizes, net.w_off, net.b_off, net.h_off, xb)
    results.append(("mlp_forward 1x14", time_fn(kernels.mlp_forward, *args1)))
    results.append(("mlp_forward 256x14", time_fn(kernels.mlp_forward, *argsb, repeat=500)))

    y, h = kernels.mlp_forward(*argsb)
    dy = rng.normal(size=y.shape)
    results.append(("mlp_backward 256x14",
                    time_fn(kernels.mlp_backward, net.theta, net.sizes, net.w_off,
                            net.b_off, net.h_off, xb, h, dy, repeat=500)))

    n = 2880
    rewards = rng.normal(size=n)
    values = rng.normal(size=n)
    dones = np.zeros(n)
    dones[-1] = 1.0
    results.append(("gae_scan 2880",
                    time_fn(kernels.gae_scan, rewards, values, 0.0, dones, 0.99, 0.95)))

    z = rng.standard_normal(35_039)
    results.append(("ou_scan 35040", time_fn(kernels.ou_scan, z, 0.1, 0.4, 0.0, repeat=200)))

    return kernels.BACKEND, results


def main():
    if os.environ.get("DCCFR_BACKEND"):
        backend, results = run_benchmarks()
        for name, usec in results:
            print(f"{backend}\t{name}\t{usec:.2f}")
        return

    rows = {}
    for backend in ("numpy", "numba"):
        env = dict(os.environ, DCCFR_BACKEND=backend)
        out = subprocess.run([sys.executable, __file__], env=env,
                             capture_output=True, text=True, check=True).stdout
        for line in out.strip().splitlines():
            b, name, usec = line.split("\t")
            rows.setdefault(name, {})[b] = float(usec)

    width = max(len(n) for n in rows) + 2
    print(f"{'kernel':<{width}}{'numpy (us)':>12}{'numba (us)':>12}{'speedup':>9}")
    for name, r in rows.items():
        speed = r["numpy"] / r["numba"] if r.get("numba") else float("nan")
        print(f"{name:<{width}}{r['numpy']:>12.2f}{r['numba']:>12.2f}{speed:>8.1f}x")


if __name__ == "__main__":
    main()
