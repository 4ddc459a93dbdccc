"""Compare the compiled and numpy kernel backends on realistic inputs.

    python benchmarks/bench_kernels.py [--repeat 5] [--level 4]

Inputs come from a corrugated unit square in E^5: chord lengths are taken
through ``top_velocity`` of a refined map, and simplex distances over all
cell pairs of that map.  Both backends are checked to agree before timing.
"""
import argparse
import timeit

import numpy as np

from polyiso import PLMap, StretchConfig, embed_polyhedron
from polyiso.complex import MetricComplex
from polyiso.kernels import _pykernels

try:
    from polyiso.kernels import _ckernels
except ImportError:
    _ckernels = None


def square_map(level: int) -> PLMap:
    c = MetricComplex.from_coords(np.array([[0.0, 0], [1, 0], [1, 1], [0, 1]]), [(0, 1, 2), (0, 2, 3)])
    f0 = PLMap.chart_embedding(c, 5, 0.5)
    h = embed_polyhedron(c, f0, StretchConfig(eta=0.05, epsilon=0.2, seed=0)).map
    return h if h.level >= level else h.refined(level)


def chord_inputs(f: PLMap, n: int, rng):
    binv, vel = f.top_velocity(0)
    m = binv.shape[1]
    return binv, vel, rng.dirichlet(np.ones(m), n), rng.dirichlet(np.ones(m), n)


def simplex_inputs(f: PLMap, n: int, rng):
    cells = [f.images[list(c)] for c in f.cells]
    i = rng.integers(len(cells), size=n)
    j = rng.integers(len(cells), size=n)
    return np.stack([cells[k] for k in i]), np.stack([cells[k] for k in j])


def bench(name, fn, args, repeat):
    t = min(timeit.repeat(lambda: fn(*args), number=1, repeat=repeat))
    print(f"  {name:<8} {t * 1e3:9.2f} ms")
    return t


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--level", type=int, default=4)
    ap.add_argument("--chords", type=int, default=20000)
    ap.add_argument("--pairs", type=int, default=5000)
    args = ap.parse_args()
    rng = np.random.default_rng(0)
    f = square_map(args.level)
    print(f"square in E^5 at level {f.level}: {len(f.cells)} cells")
    cases = [
        (f"chord_image_lengths ({args.chords} chords)", "chord_image_lengths", chord_inputs(f, args.chords, rng)),
        (f"simplex_distances ({args.pairs} pairs)", "simplex_distances", simplex_inputs(f, args.pairs, rng)),
    ]
    for title, kernel, inputs in cases:
        print(title)
        py = getattr(_pykernels, kernel)
        t_py = bench("numpy", py, inputs, args.repeat)
        if _ckernels is None:
            print("  cython   not built")
            continue
        cy = getattr(_ckernels, kernel)
        err = np.max(np.abs(py(*inputs) - cy(*inputs)), initial=0.0)
        t_cy = bench("cython", cy, inputs, args.repeat)
        print(f"  speedup  {t_py / t_cy:9.1f}x   max |diff| {err:.1e}")


if __name__ == "__main__":
    main()
