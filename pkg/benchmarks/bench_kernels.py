"""Compare the compiled and pure-Python kernel backends.

Usage: python3 benchmarks/bench_kernels.py [--repeat 5]

Times each hot kernel on both backends in-process, then runs an end-to-end
analysis (data matrices + gain + low-order approximation) in subprocesses
with and without ``DDIQC_PURE_PYTHON``.
"""
import argparse
import importlib
import os
import subprocess
import sys
import timeit

import numpy as np

from ddiqc import _pykernels

try:
    _ck = importlib.import_module("ddiqc._ckernels")
except ImportError:
    _ck = None

END_TO_END = """
import time, numpy as np
t0 = time.perf_counter()
from ddiqc import _kernels, optim
from ddiqc.iqc import build_data_matrices
from ddiqc.lti import BasisFilterSpec, Trajectory, simulate
from ddiqc.testsystems import seven_pole_plant
g = seven_pole_plant()
u = np.random.default_rng(0).uniform(-1, 1, (300, 2))
d = build_data_matrices(Trajectory(u, simulate(g, u)), 110, 10)
optim.l2_gain_estimate(d)
optim.loworder_approximation(d, BasisFilterSpec.distinct_poles([0.5, 0.2]))
print(_kernels.BACKEND, time.perf_counter() - t0)
"""


def workloads():
    rng = np.random.default_rng(0)
    n, m, p = 48, 1, 1
    A = rng.standard_normal((n, n))
    A *= 0.9 / max(abs(np.linalg.eigvals(A)))
    B, C, D = rng.standard_normal((n, m)), rng.standard_normal((p, n)), rng.standard_normal((p, m))
    u = rng.standard_normal((5000, m))
    x0 = np.zeros(n)
    w = rng.standard_normal((2400, 2))
    g = rng.standard_normal((110, 6, 2))
    X = rng.standard_normal((2 * 110, 160))
    return {
        "ss_simulate n=48 N=5000": lambda k: k.ss_simulate(A, B, C, D, u, x0),
        "hankel q=2 N=2400 L=1050": lambda k: k.hankel(w, 1050),
        "block_convolve L=110 6x2 160 cols": lambda k: k.block_convolve(g, X, 110),
    }


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-end-to-end", action="store_true")
    args = ap.parse_args(argv)
    backends = {"python": _pykernels}
    if _ck is not None:
        backends["cython"] = _ck
    else:
        print("compiled extension not built; timing the fallback only")
    print(f"{'kernel':38s}" + "".join(f"{b:>12s}" for b in backends) + "     speedup")
    for name, fn in workloads().items():
        times = {}
        for b, mod in backends.items():
            fn(mod)
            times[b] = min(timeit.repeat(lambda: fn(mod), number=1, repeat=args.repeat))
        speed = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{name:38s}" + "".join(f"{t * 1e3:10.2f}ms" for t in times.values())
              + f"  {speed:9.1f}x")
    if not args.skip_end_to_end:
        print("\nend to end (seven-pole data, gain + approximation):")
        for flag in ("0", "1"):
            env = {**os.environ, "DDIQC_PURE_PYTHON": flag}
            out = subprocess.run([sys.executable, "-c", END_TO_END], env=env, check=True,
                                 capture_output=True, text=True).stdout.split()
            print(f"  {out[0]:8s} {float(out[1]):8.2f}s")


if __name__ == "__main__":
    main()
