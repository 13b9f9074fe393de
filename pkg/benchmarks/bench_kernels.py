"""Compare the compiled and NumPy expression kernels.

    python3 benchmarks/bench_kernels.py [--repeat R] [--json]

Times program evaluation over point batches of several sizes, then a few
end-to-end workloads that spend most of their time in the kernels.  Each
figure is the best of ``--repeat`` runs.
"""
import argparse
import json
import timeit

import numpy as np

from flatt import kernels
from flatt.connection import curvature_many, parallel_transport_path, parse_path
from flatt.expr import diff_expr, parse_expr
from flatt.kernels import Program
from flatt.reconstruct import reconstruction_round_trip
from flatt.scenario import bundled
from flatt.tensor import Tensor

EXPRESSIONS = [
    "cos(x2)", "-x1*sin(x2)", "x1*cos(x2)", "exp(x1)*sin(x1*x2) + x2^3",
    "sqrt(1 + x1^2)/cosh(x2) - log(2 + sin(x1))",
    "(x1 - x2)^2*exp(-x1*x2) + tan(0.3*x1)*sinh(x2)",
]
BATCHES = (1, 100, 10_000)


def program():
    exprs = [parse_expr(s, 2) for s in EXPRESSIONS]
    # derivatives make the programs longer, like the connection kernels
    exprs += [diff_expr(e, k) for e in exprs for k in (1, 2)]
    return Program(exprs)


def workloads():
    rot, polar, diag = bundled("rotation"), bundled("polar-jacobian"), bundled("diag-exp")
    pts = polar.chart.samples()
    path = parse_path(["t", "sin(5*t)"], 2)
    B0 = Tensor.vector([0.6, -0.8], (-1.0, float(np.sin(-5.0))))
    return {
        "curvature, 100 points": lambda: curvature_many(polar.connection(), pts),
        "parallel transport, 1000 RK4 steps": lambda: parallel_transport_path(
            diag.connection(), path, -1.0, 1.0, B0, 1000),
        "reconstruction round trip": lambda: reconstruction_round_trip(
            rot.law(), rot.base, reverse_check=False),
    }


def best(fn, repeat):
    number = max(1, int(0.05 / max(timeit.timeit(fn, number=1), 1e-7)))
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--json", action="store_true", help="print machine-readable results")
    args = ap.parse_args()

    backends = kernels.available_backends()
    prog = program()
    rng = np.random.default_rng(0)
    rows = []
    for m in BATCHES:
        pts = rng.uniform(-1, 1, (m, 2))
        times = {}
        for b in backends:
            with kernels.use_backend(b):
                times[b] = best(lambda: prog(pts), args.repeat)
        rows.append((f"{len(prog)} expressions x {m} points", times))
    for label, fn in workloads().items():
        times = {}
        for b in backends:
            with kernels.use_backend(b):
                fn()  # warm caches shared by both backends
                times[b] = best(fn, args.repeat)
        rows.append((label, times))

    if args.json:
        print(json.dumps([{"case": label, "seconds": t} for label, t in rows], indent=2))
        return
    width = max(len(label) for label, _ in rows)
    head = "".join(f"{b:>14}" for b in backends)
    print(f"{'case':<{width}}{head}{'speed-up':>10}")
    for label, times in rows:
        cells = "".join(f"{times[b] * 1e3:>11.3f} ms" for b in backends)
        ratio = times["python"] / times["cython"] if "cython" in times else float("nan")
        print(f"{label:<{width}}{cells}{ratio:>9.1f}x")
    if "cython" not in backends:
        print("compiled kernel not built; only the NumPy fallback was timed")


if __name__ == "__main__":
    main()
