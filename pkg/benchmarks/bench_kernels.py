"""Compare the compiled and pure-Python kernels.

Usage: python benchmarks/bench_kernels.py [--repeat N] [--size N]

Times the g-and-h inversion and the per-year segment sums on both backends,
then an end-to-end g-and-h annual-loss simulation with the backend chosen
through ``OPLDA_PURE_PYTHON`` in a subprocess.
"""

import argparse
import os
import subprocess
import sys
import timeit

import numpy as np

from oplda import _kernels_py

try:
    from oplda import _kernels as _compiled
except ImportError:
    _compiled = None

GH = (1.0, 0.5, 0.4, 0.15)

END_TO_END = """
import time
from oplda.annual_loss import simulate_annual_losses
from oplda.distributions import Family, SeverityModel
from oplda.kernels import BACKEND
m = SeverityModel(Family.GANDH, {gh})
t = time.perf_counter()
simulate_annual_losses(100.0, m, {years}, seed=1)
x = m.sample(200_000, __import__('numpy').random.default_rng(0))
m.logpdf(x)
print(BACKEND, time.perf_counter() - t)
"""


def best_of(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def run(size, repeat):
    rng = np.random.default_rng(0)
    a, b, g, h = GH
    x = a + b * _kernels_py.gh_transform(rng.standard_normal(size), g, h)
    counts = rng.poisson(100, size // 100)
    values = rng.random(int(counts.sum()))
    backends = {"python": _kernels_py}
    if _compiled is not None:
        backends["cython"] = _compiled
    rows = []
    for name, mod in backends.items():
        rows.append((name, "gh_inverse", best_of(lambda: mod.gh_inverse(x, a, b, g, h), repeat)))
        rows.append((name, "segment_sums", best_of(lambda: mod.segment_sums(values, counts), repeat)))
    return rows


def end_to_end(years):
    out = []
    for pure in ("1", ""):
        env = dict(os.environ)
        env.pop("OPLDA_PURE_PYTHON", None)
        if pure:
            env["OPLDA_PURE_PYTHON"] = pure
        res = subprocess.run([sys.executable, "-c", END_TO_END.format(gh=GH, years=years)],
                             env=env, capture_output=True, text=True, check=True)
        name, secs = res.stdout.split()
        out.append((name, f"gandh simulate {years} years + logpdf", float(secs)))
    return out


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--size", type=int, default=200_000)
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--years", type=int, default=20_000)
    args = ap.parse_args()
    rows = run(args.size, args.repeat) + end_to_end(args.years)
    print(f"{'backend':8s} {'kernel':42s} {'seconds':>10s}")
    for name, kernel, secs in rows:
        print(f"{name:8s} {kernel:42s} {secs:10.4f}")
    timings = {(n, k): s for n, k, s in rows}
    for kernel in sorted({k for _, k, _ in rows}):
        if ("python", kernel) in timings and ("cython", kernel) in timings:
            print(f"speedup {kernel}: {timings['python', kernel] / timings['cython', kernel]:.2f}x")


if __name__ == "__main__":
    main()
