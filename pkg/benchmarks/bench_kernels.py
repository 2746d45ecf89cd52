"""Benchmark the numba-compiled kernels against the pure-numpy fallback.

Runs the latent-response sweep and the truncated-normal sampler in two
subprocesses, one per backend (the backend is chosen at import time from
RANKFACTOR_DISABLE_NUMBA), and prints a comparison table.  Both backends
execute the same function bodies and produce bit-identical draws, so the
table is purely about speed.

Usage:  python benchmarks/bench_kernels.py [--rows 500] [--cols 15] [--sweeps 50]
"""

import argparse
import json
import os
import subprocess
import sys

WORKER = r"""
import json
import time

import numpy as np

from rankfactor import _kernels
from rankfactor.data import MixedOutcomeMatrix, normal_score_init

params = json.loads(__PARAMS__)
rng = np.random.default_rng(0)
n_rows, n_cols, n_sweeps = params["rows"], params["cols"], params["sweeps"]

vals = rng.integers(0, 6, size=(n_rows, n_cols)).astype(float)
y = MixedOutcomeMatrix.from_values(vals)
z = normal_score_init(y, rng)
mu = 0.2 * rng.standard_normal((n_rows, n_cols))
sd = np.ones(n_cols)

# warm-up triggers compilation on the numba backend
state = np.array([1], dtype=np.uint64)
t0 = time.perf_counter()
_kernels.scan_latent_responses(z, y.level_codes, y.n_levels, mu, sd, state)
warmup = time.perf_counter() - t0

t0 = time.perf_counter()
for _ in range(n_sweeps):
    _kernels.scan_latent_responses(z, y.level_codes, y.n_levels, mu, sd, state)
sweep_s = (time.perf_counter() - t0) / n_sweeps

n_tn = 200_000 if _kernels.USING_NUMBA else 20_000
_kernels.truncnorm_sample(-0.5, 0.5, 0.0, 1.0, state, size=8)  # compile
t0 = time.perf_counter()
_kernels.truncnorm_sample(-0.5, 0.5, 0.0, 1.0, state, size=n_tn)
tn_ns = (time.perf_counter() - t0) / n_tn * 1e9

print(json.dumps({
    "backend": "numba" if _kernels.USING_NUMBA else "numpy",
    "warmup_s": warmup,
    "sweep_ms": sweep_s * 1e3,
    "tn_ns": tn_ns,
    "cells_per_s": n_rows * n_cols / sweep_s,
}))
"""


def run_backend(disable_numba, params):
    env = dict(os.environ)
    env["RANKFACTOR_DISABLE_NUMBA"] = "1" if disable_numba else "0"
    body = WORKER.replace("__PARAMS__", repr(json.dumps(params)))
    proc = subprocess.run([sys.executable, "-c", body], env=env,
                          capture_output=True, text=True)
    if proc.returncode != 0:
        raise RuntimeError(proc.stderr)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--rows", type=int, default=500)
    parser.add_argument("--cols", type=int, default=15)
    parser.add_argument("--sweeps", type=int, default=50)
    args = parser.parse_args()
    params = {"rows": args.rows, "cols": args.cols, "sweeps": args.sweeps}

    print(f"latent sweep: {args.rows} x {args.cols}, {args.sweeps} sweeps per backend")
    results = []
    for disable in (False, True):
        label = "numpy fallback" if disable else "numba"
        print(f"  running {label} ...", flush=True)
        results.append(run_backend(disable, params))

    nb, np_ = results
    print()
    print(f"{'backend':<16}{'sweep ms':>12}{'cells/s':>14}{'tn draw ns':>12}")
    print("-" * 54)
    for r in results:
        print(f"{r['backend']:<16}{r['sweep_ms']:>12.3f}{r['cells_per_s']:>14.0f}"
              f"{r['tn_ns']:>12.0f}")
    print("-" * 54)
    print(f"sweep speedup: {np_['sweep_ms'] / nb['sweep_ms']:.1f}x, "
          f"truncated-normal speedup: {np_['tn_ns'] / nb['tn_ns']:.1f}x "
          f"(numba warm-up {nb['warmup_s']:.2f}s, cached after first use)")


if __name__ == "__main__":
    main()
