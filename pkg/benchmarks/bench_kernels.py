"""Compare the compiled and pure numpy kernels, and time a short sampling run under each.

    python3 benchmarks/bench_kernels.py [--size N] [--repeat R] [--replicas K]

The end-to-end part runs the sampler in two subprocesses, one with
EXACTQ_DISABLE_NUMBA=1, so each backend is picked at import time exactly as a
user would get it.
"""

import argparse
import json
import os
import subprocess
import sys
import timeit

import numpy as np

from exactq import _kernels

# (name, numpy function, compiled function, argument builder)
KERNELS = [
    ("lindley", "lindley_np", "_lindley_nb", lambda x: (x, 0.0)),
    ("suffix_max", "suffix_max_np", "_suffix_max_nb", lambda x: (np.cumsum(x),)),
    ("first_below", "first_below_np", "_first_below_nb", lambda x: (x, 0.0, -1e300)),
    ("descend", "descend_np", "_descend_nb", lambda x: (x, 0.0, -1e300, 1e300)),
]

END_TO_END = """
import json, sys, time
import numpy as np
from exactq import BACKEND, ExactSampler, LatticePareto, AlgorithmParams
d = LatticePareto(7, 3, 0.1)
p = AlgorithmParams(mu=1.0, m=16, alpha=4, gamma=1.7, delta=0.38)
s = ExactSampler(p, d)
rng = np.random.Generator(np.random.Philox(1))
s.sample_m0(rng)
n = int(sys.argv[1])
t = time.perf_counter()
x = [s.sample_m0(rng) for _ in range(n)]
dt = time.perf_counter() - t
print(json.dumps({"backend": BACKEND, "seconds": dt, "per_replica_us": 1e6 * dt / n, "mean": float(np.mean(x))}))
"""


def bench_kernels(size, repeat):
    rng = np.random.default_rng(0)
    x = rng.standard_normal(size) - 0.05
    rows = []
    for name, np_name, nb_name, argf in KERNELS:
        args = argf(x)
        f_np = getattr(_kernels, np_name)
        t_np = min(timeit.repeat(lambda: f_np(*args), number=1, repeat=repeat))
        t_nb = None
        if _kernels.HAVE_NUMBA:
            f_nb = getattr(_kernels, nb_name)
            f_nb(*args)  # compile
            t_nb = min(timeit.repeat(lambda: f_nb(*args), number=1, repeat=repeat))
        rows.append((name, t_np, t_nb))
    return rows


def bench_end_to_end(replicas):
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, EXACTQ_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", END_TO_END, str(replicas)], env=env,
                             capture_output=True, text=True, check=True)
        r = json.loads(res.stdout)
        out[r["backend"]] = r
    return out


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--size", type=int, default=1_000_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--replicas", type=int, default=2000)
    args = ap.parse_args()

    print(f"kernels on {args.size} steps (best of {args.repeat})")
    print(f"{'kernel':<12}{'numpy ms':>12}{'numba ms':>12}{'speedup':>10}")
    for name, t_np, t_nb in bench_kernels(args.size, args.repeat):
        nb = f"{1e3 * t_nb:12.3f}" if t_nb is not None else f"{'-':>12}"
        sp = f"{t_np / t_nb:10.1f}" if t_nb else f"{'-':>10}"
        print(f"{name:<12}{1e3 * t_np:12.3f}{nb}{sp}")

    print(f"\nM_0 sampling, light-tail preset, {args.replicas} replicas")
    for backend, r in bench_end_to_end(args.replicas).items():
        print(f"{backend:<8} {r['per_replica_us']:10.1f} us/replica   mean M_0 {r['mean']:.4f}")


if __name__ == "__main__":
    main()
