"""Shared fixtures-as-functions: small complexes, maps and inverse systems."""
import math

import numpy as np

from polyiso import BaryPoint, InverseSystem, MetricComplex, PLMap


def segment(length=1.0):
    return MetricComplex.from_simplices(2, [(0, 1)], {(0, 1): length})


def glued_segments():
    return MetricComplex.from_coords(np.array([[0.0, 0], [1, 0], [1, 1]]), [(0, 1), (1, 2)])


def triangle(a, b, c):
    """Triangle with |01| = a, |12| = b, |02| = c."""
    return MetricComplex.from_simplices(3, [(0, 1, 2)], {(0, 1): a, (1, 2): b, (0, 2): c})


def unit_square():
    return MetricComplex.from_coords(np.array([[0, 0], [1, 0], [1, 1], [0, 1.0]]), [(0, 1, 2), (0, 2, 3)])


def fan3():
    pts = np.array([[0, 0], [1, 0], [0.6, 0.9], [-0.5, 0.8], [-0.7, -0.4]])
    return MetricComplex.from_coords(pts, [(0, 1, 2), (0, 2, 3), (0, 3, 4)])


def tetra():
    pts = np.array([[0, 0, 0], [1, 0, 0], [0.2, 1.1, 0], [0.3, 0.4, 0.9]])
    return MetricComplex.from_coords(pts, [(0, 1, 2, 3)])


def circle4():
    e = {(0, 1): 1.0, (1, 2): 1.0, (2, 3): 1.0, (0, 3): 1.0}
    return MetricComplex.from_simplices(4, list(e), e)


def circle_square_map(c=None, side=0.5):
    c = c or circle4()
    return PLMap(c, 0, np.array([[0, 0, 0], [side, 0, 0], [side, side, 0], [0, side, 0.0]]))


def clamp_system(M):
    """Intervals [0, 1 + 2**-i] as two edges, bonded by inclusion.

    The right endpoint of stage i+1 lands on the midpoint of the short edge
    of stage i, so every bonding is simplicial and isometric.
    """
    stages = [
        MetricComplex.from_simplices(3, [(0, 1), (1, 2)], {(0, 1): 1.0, (1, 2): 2.0**-i}) for i in range(M + 1)
    ]
    bonds = []
    for i in range(M):
        q = stages[i]
        pts = (q.vertex_point(0), q.vertex_point(1), BaryPoint(1, (0.5, 0.5)))
        bonds.append(PLMap(stages[i + 1], 0, codomain=q, cod_points=pts))
    return InverseSystem(stages, bonds, 1)


def clamp_init(s, scale=0.5):
    c = s.stages[0]
    return PLMap(c, 0, np.array([[0, 0, 0], [scale, 0, 0], [2 * scale, 0, 0.0]]))


def circle_system(M):
    c = circle4()
    return InverseSystem.constant(c, M), circle_square_map(c)


def point_coords(c, p):
    """Ambient coordinates of a point of a coordinate complex."""
    return p.array @ c.coords[list(c.top_simplices[p.simplex])]


def random_points(c, n, rng):
    out = []
    for _ in range(n):
        t = int(rng.integers(len(c.top_simplices)))
        w = rng.dirichlet(np.ones(len(c.top_simplices[t])))
        out.append(BaryPoint(t, tuple(w / w.sum())))
    return out


def chart_distance(c, p, q):
    """Flat distance between two points of one top simplex."""
    w = c.express(q, p.simplex)
    d = p.array - w
    return math.sqrt(max(-0.5 * d @ c.squared_distances(p.simplex) @ d, 0.0))
