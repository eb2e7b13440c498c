"""Compiled vs numpy kernels: normals, the fused scalar OU block, the p-Laplace flux.

    python3 benchmarks/bench_kernels.py [--repeat 5] [--json out.json]
"""
import argparse
import json
import platform
import timeit

import numpy as np

from mldp._kernels import compiled_kernels, python_kernels


def cases():
    tilt = np.full((200, 1), 0.5)
    u = np.random.default_rng(0).normal(size=1023)
    return [
        ("fill_normals 4096 x 200", 4096 * 200,
         lambda k: k.fill_normals(7, 0, 4096, 200)),
        ("scalar_linear_block 4096 paths, 200 steps", 4096 * 200,
         lambda k: k.scalar_linear_block(7, 0, 4096, 200, 0.005, 0.0, 1.0, np.ones(1), 0.5, tilt)),
        ("plaplace_flux_div 1023 nodes, p=3", 1023,
         lambda k: k.plaplace_flux_div(u, 1 / 1024, 3.0)),
    ]


def best_time(fn, repeat):
    number = 1
    while timeit.timeit(fn, number=number) < 0.2:
        number *= 2
    return min(timeit.repeat(fn, number=number, repeat=repeat)) / number


def main(argv=None):
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--json", default=None, help="also write results to this file")
    args = parser.parse_args(argv)
    backends = [("python", python_kernels)]
    if compiled_kernels is not None:
        backends.insert(0, ("compiled", compiled_kernels))
    else:
        print("compiled extension not built; timing the numpy kernels only")

    rows = []
    print(f"{'kernel':45s} {'backend':9s} {'time':>11s} {'ns/item':>9s}")
    for name, items, call in cases():
        times = {}
        for label, mod in backends:
            t = best_time(lambda: call(mod), args.repeat)
            times[label] = t
            print(f"{name:45s} {label:9s} {t * 1e3:9.3f}ms {t / items * 1e9:9.2f}")
        speedup = times["python"] / times["compiled"] if "compiled" in times else None
        if speedup:
            print(f"{'':45s} {'speedup':9s} {speedup:10.2f}x")
        rows.append({"kernel": name, "items": items, "seconds": times, "speedup": speedup})

    if args.json:
        meta = {"python": platform.python_version(), "numpy": np.__version__, "machine": platform.machine()}
        with open(args.json, "w") as fh:
            json.dump({"meta": meta, "results": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
