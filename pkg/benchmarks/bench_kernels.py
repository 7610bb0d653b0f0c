#!/usr/bin/env python3
"""Time the compiled kernels against the NumPy fallback.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]

Both backends run on the same inputs; the script also reports the largest
absolute difference between their outputs.
"""

from __future__ import annotations

import argparse
import json
import sys
import time

import numpy as np

from modelrisk import _kernels as K


def _time(fn, repeat):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def nw_case(n_data, n_query, seed=0):
    rng = np.random.default_rng(seed)
    xd = np.sort(rng.standard_normal(n_data))
    wd = np.full(n_data, 1.0 / n_data)
    yd = np.column_stack([np.sin(xd), xd ** 2])
    xq = np.linspace(-2.5, 2.5, n_query)
    return (xq, xd, wd, yd, 0.1)


def foc_case(n_rows, n_inner, pprime, seed=0):
    rng = np.random.default_rng(seed)
    a = rng.standard_normal(n_rows)
    b = rng.standard_normal((n_rows, n_inner))
    w = np.full((n_rows, n_inner), 1.0 / n_inner)
    return (a, b, w, pprime)


CASES = [
    ("nw_smooth n=20000 q=512", lambda: nw_case(20_000, 512), K.nw_smooth),
    ("nw_smooth n=200000 q=2048", lambda: nw_case(200_000, 2048), K.nw_smooth),
    ("solve_foc G=512 m=64 p'=1.5", lambda: foc_case(512, 64, 1.5), K.solve_foc),
    ("solve_foc G=4096 m=64 p'=3", lambda: foc_case(4096, 64, 3.0), K.solve_foc),
]


def run(repeat=5):
    backends = K.available_backends()
    rows = []
    for name, make, fn in CASES:
        args = make()
        times, outs = {}, {}
        for b in backends:
            times[b], outs[b] = _time(lambda: fn(*args, backend=b), repeat)
        row = {"case": name, **{f"{b}_s": times[b] for b in backends}}
        if len(backends) == 2:
            o1, o2 = outs["cython"], outs["python"]
            o1 = o1[0] if isinstance(o1, tuple) else o1
            o2 = o2[0] if isinstance(o2, tuple) else o2
            row["speedup"] = times["python"] / times["cython"]
            row["max_abs_diff"] = float(np.nanmax(np.abs(o1 - o2)))
        rows.append(row)
    return backends, rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", help="write results here")
    args = ap.parse_args(argv)
    backends, rows = run(args.repeat)
    print(f"backends: {', '.join(backends)} (default {K.BACKEND})")
    for r in rows:
        cols = "  ".join(f"{b}={r[f'{b}_s'] * 1e3:8.2f} ms" for b in backends)
        extra = f"  speedup={r['speedup']:5.1f}x  maxdiff={r['max_abs_diff']:.1e}" if "speedup" in r else ""
        print(f"{r['case']:<30} {cols}{extra}")
    if args.json:
        with open(args.json, "w") as fh:
            json.dump(rows, fh, indent=2)
    return 0


if __name__ == "__main__":
    sys.exit(main())
