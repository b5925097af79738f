"""Timing comparison of the numba and pure-numpy kernel backends.

Run without arguments; the script re-executes itself once per backend via
the JOINTAUCTION_BACKEND environment variable (the backend is fixed at
import time) and prints a side-by-side table.

    python3 benchmarks/bench_kernels.py [--samples N] [--bundles N] [--repeat K]
"""

from __future__ import annotations

import argparse
import json
import os
import subprocess
import sys
import time


def measure(samples: int, n_bundles: int, repeat: int) -> dict:
    import numpy as np

    from jointauction import backend, kernels
    from jointauction import distributions as dm
    from jointauction import market as mk

    spec = dm.get_distribution("u01")
    batch = mk.sample_batch(n_bundles, spec, (1.0, 0.8, 0.6, 0.4, 0.2), 0.0, samples, 7)
    cr = np.asarray(dm.virtual_value(spec, batch.vals_r))
    cs = np.asarray(dm.virtual_value(spec, batch.vals_s))
    br, bs = batch.bid_matrices()

    # warm-up (includes jit compilation for the numba backend)
    kernels.exact_winner_thresholds(batch.edge_r, batch.edge_s, cr, cs, 0.0)
    kernels.rvcg_revenue(batch.edge_r, batch.edge_s, br, bs, batch.ctrs)

    t_exact = []
    t_rvcg = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        kernels.exact_winner_thresholds(batch.edge_r, batch.edge_s, cr, cs, 0.0)
        t_exact.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        kernels.rvcg_revenue(batch.edge_r, batch.edge_s, br, bs, batch.ctrs)
        t_rvcg.append(time.perf_counter() - t0)
    return {
        "backend": backend.backend_name(),
        "exact_ms": 1000 * min(t_exact),
        "rvcg_ms": 1000 * min(t_rvcg),
    }


def main() -> int:
    parser = argparse.ArgumentParser()
    parser.add_argument("--samples", type=int, default=100_000)
    parser.add_argument("--bundles", type=int, default=5)
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        print(json.dumps(measure(args.samples, args.bundles, args.repeat)))
        return 0

    results = []
    for backend_name in ("numba", "numpy"):
        env = dict(os.environ, JOINTAUCTION_BACKEND=backend_name)
        cmd = [
            sys.executable,
            os.path.abspath(__file__),
            "--worker",
            "--samples",
            str(args.samples),
            "--bundles",
            str(args.bundles),
            "--repeat",
            str(args.repeat),
        ]
        out = subprocess.run(cmd, env=env, capture_output=True, text=True)
        if out.returncode != 0:
            print(f"{backend_name} backend failed:\n{out.stderr}", file=sys.stderr)
            return 1
        results.append(json.loads(out.stdout.strip().splitlines()[-1]))

    print(f"samples={args.samples} bundles={args.bundles} slots=5 (best of {args.repeat})")
    print(f"{'backend':>8} {'exact (ms)':>12} {'rvcg (ms)':>12}")
    for r in results:
        print(f"{r['backend']:>8} {r['exact_ms']:>12.2f} {r['rvcg_ms']:>12.2f}")
    nb, np_ = results
    print(
        f"speedup (numba vs numpy): exact {np_['exact_ms'] / nb['exact_ms']:.1f}x, "
        f"rvcg {np_['rvcg_ms'] / nb['rvcg_ms']:.1f}x"
    )
    return 0


if __name__ == "__main__":
    sys.exit(main())
