"""Independent oracles shared by the unit and acceptance suites."""
import itertools
import math

import numpy as np

from helpers import fan3, point_coords, tetra, unit_square
from polyiso import MetricComplex


def lattice_graph(c, k):
    """Level-k chord graph rebuilt from coordinates: lattice points of every top, cliques per top."""
    n = 2**k
    key_of, pts, tops = {}, [], []
    for t in c.top_simplices:
        V = c.coords[list(t)]
        members = []
        for a in itertools.product(range(n + 1), repeat=len(t)):
            if sum(a) != n:
                continue
            p = np.array(a) @ V / n
            key = tuple(np.round(p, 9))
            if key not in key_of:
                key_of[key] = len(pts)
                pts.append(p)
            members.append(key_of[key])
        tops.append(members)
    return np.array(pts), tops


def brute_force_distance(c, k, x, y):
    """Branch-and-bound over all simple paths between attached points x and y."""
    pts, tops = lattice_graph(c, k)
    px, py = point_coords(c, x), point_coords(c, y)
    n = len(pts)
    X, Y = n, n + 1
    allpts = np.vstack([pts, px, py])
    nbrs = {i: set() for i in range(n + 2)}
    xt = c.tops_containing(c.support(x))
    yt = c.tops_containing(c.support(y))
    for ti, members in enumerate(tops):
        group = list(members) + ([X] if ti in xt else []) + ([Y] if ti in yt else [])
        for u, v in itertools.combinations(group, 2):
            nbrs[u].add(v)
            nbrs[v].add(u)
    w = lambda u, v: float(np.linalg.norm(allpts[u] - allpts[v]))
    best = [math.inf]
    seen = {X}

    def dfs(u, length):
        if length >= best[0]:
            return
        if u == Y:
            best[0] = length
            return
        for v in sorted(nbrs[u], key=lambda v: w(u, v) + w(v, Y)):
            if v not in seen:
                seen.add(v)
                dfs(v, length + w(u, v))
                seen.discard(v)

    dfs(X, 0.0)
    return best[0]


def line_segments():
    return MetricComplex.from_coords(np.array([[0.0], [1.0], [2.5]]), [(0, 1), (1, 2)])


def triangle_loop():
    return MetricComplex.from_coords(np.array([[0, 0], [2, 0], [0.5, 1.5]]), [(0, 1), (1, 2), (0, 2)])


def coord_345():
    return MetricComplex.from_coords(np.array([[0, 0], [3, 0], [3, 4.0]]), [(0, 1, 2)])


ORACLE_COMPLEXES = {
    "segments": line_segments,
    "loop": triangle_loop,
    "345": coord_345,
    "square": unit_square,
    "fan": fan3,
    "tetra": tetra,
}
