"""Compare the numba and numpy kernel backends.

Run with ``python benchmarks/bench_accel.py [--n 1024] [--d 16] [--repeat 50]``.

Part one times each kernel in ``adaptsmc._accel`` through both paths in
the same process (numba timings exclude the first, compiling, call).  Part
two times one adaptive SMC run end to end under each backend, in a
subprocess with ``ADAPTSMC_DISABLE_NUMBA`` set accordingly.
"""

from __future__ import annotations

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from adaptsmc import _accel

END_TO_END = """
import time, adaptsmc as a
path = a.AnnealedPath(a.funnel({d}), a.make_schedule("quadratic", {T}))
a.smc_run(path, a.make_family("lmc"), a.StepsizeAdaptation(), a.RunConfig(N=64, seed=0))  # warm-up
t0 = time.perf_counter()
a.smc_run(path, a.make_family("lmc"), a.StepsizeAdaptation(), a.RunConfig(N={n}, seed=1))
print(a.backend(), time.perf_counter() - t0)
"""


def kernel_cases(n, d, rng):
    logw = rng.normal(size=n)
    w = np.exp(logw - logw.max())
    w /= w.sum()
    x = rng.normal(size=(n, d))
    mean = rng.normal(size=(n, d))
    us = np.sort(rng.uniform(size=n))
    return {
        "logsumexp": (logw,),
        "log_ess": (logw,),
        "systematic_indices": (w, 0.37, n),
        "multinomial_indices": (w, us),
        "gauss_transition_logpdf": (x, mean, 0.3),
        "std_normal_logpdf": (x,),
        "funnel_logpdf": (x,),
        "funnel_grad": (x,),
    }


def bench_kernels(n, d, repeat):
    rng = np.random.default_rng(0)
    print(f"{'kernel':26s} {'numpy [us]':>12s} {'numba [us]':>12s} {'speedup':>8s}")
    for name, args in kernel_cases(n, d, rng).items():
        py = getattr(_accel, name + "_py")
        nb = getattr(_accel, name + "_nb")
        nb(*args)  # compile
        t_py = min(timeit.repeat(lambda: py(*args), number=repeat, repeat=3)) / repeat
        t_nb = min(timeit.repeat(lambda: nb(*args), number=repeat, repeat=3)) / repeat
        print(f"{name:26s} {t_py * 1e6:12.1f} {t_nb * 1e6:12.1f} {t_py / t_nb:8.2f}")


def bench_end_to_end(n, d, T):
    code = END_TO_END.format(n=n, d=d, T=T)
    for flag in ("0", "1"):
        env = dict(os.environ, ADAPTSMC_DISABLE_NUMBA=flag)
        out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        backend, secs = out.stdout.split()
        print(f"end-to-end adaptive SMC-LMC, funnel d={d}, T={T}, N={n}: {backend:6s} {float(secs):.3f} s")


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--n", type=int, default=1024)
    ap.add_argument("--d", type=int, default=16)
    ap.add_argument("--T", type=int, default=64)
    ap.add_argument("--repeat", type=int, default=50)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)
    if not _accel.HAVE_NUMBA:
        sys.exit("numba is not installed; nothing to compare")
    bench_kernels(args.n, args.d, args.repeat)
    if not args.skip_end_to_end:
        bench_end_to_end(args.n, args.d, args.T)


if __name__ == "__main__":
    main()
