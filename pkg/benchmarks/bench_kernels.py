"""Time the numba kernels against their pure-numpy fallbacks.

    python3 benchmarks/bench_kernels.py --out bench_out

Writes ``kernels.csv`` and ``kernels.json`` (one row per kernel, size and
backend) and checks that both backends agree before timing them.
"""

import argparse
import csv
import json
import os
import platform
import time

import numpy as np

from sgvos import HAVE_NUMBA, kernels


def best_of(fn, repeats):
    times = []
    for _ in range(repeats):
        start = time.perf_counter()
        fn()
        times.append(time.perf_counter() - start)
    return min(times)


def cases(sizes, seed):
    rng = np.random.default_rng(seed)
    for n in sizes:
        mask = rng.random((n, n)) < 0.02
        yield "sq_edt", n, (mask,), {"numba": kernels.sq_edt_numba, "numpy": kernels.sq_edt_numpy}
    for n in sizes:
        p, guide = rng.random((n, n)), rng.random((n, n))
        args = (p, guide, 4.0, 0.1, 8)
        yield "bilateral", n, args, {"numba": kernels.bilateral_numba, "numpy": kernels.bilateral_numpy}


def run(sizes, repeats, seed):
    rows = []
    for kernel, n, args, impls in cases(sizes, seed):
        if not HAVE_NUMBA:
            impls = {"numpy": impls["numpy"]}
        outputs = {name: fn(*args) for name, fn in impls.items()}  # warm-up and jit compile
        if len(outputs) == 2:
            a, b = outputs["numba"], outputs["numpy"]
            if not np.allclose(a, b, rtol=0, atol=1e-12):
                raise AssertionError(f"{kernel} backends disagree at n={n}")
        for name, fn in impls.items():
            rows.append({"kernel": kernel, "size": n, "backend": name,
                         "seconds": best_of(lambda: fn(*args), repeats)})
    return rows


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", default="bench_out")
    ap.add_argument("--sizes", type=int, nargs="+", default=[32, 64, 128])
    ap.add_argument("--repeats", type=int, default=3)
    ap.add_argument("--seed", type=int, default=0)
    args = ap.parse_args(argv)

    rows = run(args.sizes, args.repeats, args.seed)
    os.makedirs(args.out, exist_ok=True)
    with open(os.path.join(args.out, "kernels.csv"), "w", newline="") as fh:
        writer = csv.DictWriter(fh, ["kernel", "size", "backend", "seconds"], lineterminator="\n")
        writer.writeheader()
        writer.writerows({**r, "seconds": f"{r['seconds']:.6f}"} for r in rows)
    meta = {"numba": HAVE_NUMBA, "python": platform.python_version(), "numpy": np.__version__,
            "seed": args.seed, "repeats": args.repeats}
    with open(os.path.join(args.out, "kernels.json"), "w") as fh:
        json.dump({"meta": meta, "rows": rows}, fh, indent=1)
        fh.write("\n")
    for r in rows:
        print(f"{r['kernel']:<10} {r['size']:>4} {r['backend']:<6} {r['seconds'] * 1e3:10.2f} ms")


if __name__ == "__main__":
    main()
