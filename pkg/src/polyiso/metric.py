"""Intrinsic (length) distances on complexes and pullback distances of PL maps.

Distances are shortest paths in a graph whose nodes are the level-k
subdivision vertices; inside every original top simplex all node pairs are
joined by their straight chord.  For the intrinsic metric a chord weighs its
flat length; for the metric induced by an ambient map it weighs the exact
image length of the chord (computed through the map's affinity cells).
Both values are upper bounds that decrease as k grows.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import dijkstra

from . import kernels
from .complex import BaryPoint, ComplexError, MetricComplex, refinement, require_valid
from .maps import MapError, PLMap


@dataclass(frozen=True)
class DistanceEstimate:
    value: float
    level: int
    upper_bound: bool = True

    @property
    def finite(self) -> bool:
        return math.isfinite(self.value)


class _ChordMetric:
    """Chord weights inside original top simplices."""

    def __init__(self, c: MetricComplex, f: PLMap | None = None):
        self.c = c
        self.f = f

    def lengths(self, top: int, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        if len(a) == 0:
            return np.zeros(0)
        if self.f is None:
            d = a - b
            q = -0.5 * np.einsum("pi,ij,pj->p", d, self.c.squared_distances(top), d)
            return np.sqrt(np.clip(q, 0.0, None))
        binv, vel = self.f.top_velocity(top)
        return kernels.chord_image_lengths(binv, vel, a, b)


@dataclass
class GeodesicGraph:
    """Level-k chord graph of a complex.

    ``edges`` is an (E, 2) array of node pairs and ``weights`` their chord
    lengths (intrinsic, or image lengths under ``map``).
    """

    complex: MetricComplex
    level: int
    n_nodes: int
    edges: np.ndarray
    weights: np.ndarray
    map: PLMap | None = None
    top_nodes: list = field(default_factory=list, repr=False)
    top_weights: list = field(default_factory=list, repr=False)

    def adjacency(self):
        e = np.zeros(0, np.int64)
        return _min_merge(self.edges, self.weights, e, e, np.zeros(0), self.n_nodes)

    def weight(self, u: int, v: int) -> float:
        key = (min(u, v), max(u, v))
        hit = np.flatnonzero((self.edges[:, 0] == key[0]) & (self.edges[:, 1] == key[1]))
        if len(hit) == 0:
            raise KeyError(key)
        return float(self.weights[hit[0]])

    def node_distances(self, sources=None) -> np.ndarray:
        return dijkstra(self.adjacency(), directed=False, indices=sources)

    def point_distances(self, xs, ys=None) -> np.ndarray:
        """Shortest-path distances between attached points (matrix len(xs) x len(ys))."""
        xs = list(xs)
        ys = xs if ys is None else list(ys)
        pts = xs + ys
        metric = _ChordMetric(self.complex, self.map)
        c = self.complex
        rows, cols, vals = [], [], []
        base = self.n_nodes
        for i, p in enumerate(pts):
            c.check_point(p)
            for t in c.tops_containing(c.support(p)):
                w = c.express(p, t)
                nodes = self.top_nodes[t]
                lens = metric.lengths(t, np.repeat(w[None], len(nodes), 0), self.top_weights[t])
                rows.extend([base + i] * len(nodes))
                cols.extend(nodes.tolist())
                vals.extend(lens.tolist())
        # direct chords between points sharing a top
        for i, j in itertools.combinations(range(len(pts)), 2):
            common = set(c.tops_containing(c.support(pts[i]))) & set(c.tops_containing(c.support(pts[j])))
            for t in sorted(common)[:1]:
                lens = metric.lengths(t, c.express(pts[i], t)[None], c.express(pts[j], t)[None])
                rows.append(base + i)
                cols.append(base + j)
                vals.append(float(lens[0]))
        n = base + len(pts)
        adj = _min_merge(self.edges, self.weights, np.array(rows), np.array(cols), np.array(vals), n)
        square = ys is xs
        src = base + np.arange(len(xs))
        dist = dijkstra(adj, directed=False, indices=src)
        out = dist[:, base + len(xs): base + len(pts)]
        # zero-length attachments are real (coincident points)
        for i, p in enumerate(xs):
            for j, q in enumerate(ys):
                if p == q:
                    out[i, j] = 0.0
        if square:
            # both triangles bound the same distance; keep the tighter one
            out = np.minimum(out, out.T)
        return out


def _min_merge(edges, weights, r, c, v, n):
    """Sparse symmetric adjacency keeping the minimum weight per pair.

    Zero weights are stored as a tiny positive value because sparse graphs
    treat explicit zeros as missing edges.
    """
    if len(r):
        e = np.concatenate([edges, np.stack([np.minimum(r, c), np.maximum(r, c)], 1)])
        w = np.concatenate([weights, v])
    else:
        e, w = edges, weights
    if len(e) == 0:
        return coo_matrix((n, n)).tocsr()
    order = np.lexsort((w, e[:, 1], e[:, 0]))
    e, w = e[order], w[order]
    keep = np.ones(len(e), bool)
    keep[1:] = (e[1:] != e[:-1]).any(axis=1)
    e, w = e[keep], w[keep]
    w = np.where(w > 0, w, 1e-300)
    return coo_matrix((w, (e[:, 0], e[:, 1])), shape=(n, n)).tocsr()


def _build_graph(c: MetricComplex, k: int, f: PLMap | None) -> GeodesicGraph:
    if k < 0:
        raise ValueError("level must be >= 0")
    require_valid(c)
    r = refinement(c, k)
    metric = _ChordMetric(c, f)
    top_nodes, top_weights = [], []
    members: list[list[int]] = [[] for _ in c.top_simplices]
    for u in range(r.complex.n_vertices):
        for t in c.tops_containing(r.support[u]):
            members[t].append(u)
    all_e, all_w = [], []
    for t in range(len(c.top_simplices)):
        nodes = np.array(members[t], dtype=np.int64)
        W = np.array([r.vertex_weights_in(u, t) for u in nodes]).reshape(len(nodes), -1)
        top_nodes.append(nodes)
        top_weights.append(W)
        if len(nodes) < 2:
            continue
        ia, ib = np.triu_indices(len(nodes), 1)
        all_e.append(np.stack([nodes[ia], nodes[ib]], 1))
        all_w.append(metric.lengths(t, W[ia], W[ib]))
    if all_e:
        e = np.concatenate(all_e)
        w = np.concatenate(all_w)
        order = np.lexsort((w, e[:, 1], e[:, 0]))
        e, w = e[order], w[order]
        keep = np.ones(len(e), bool)
        keep[1:] = (e[1:] != e[:-1]).any(axis=1)
        e, w = e[keep], w[keep]
    else:
        e, w = np.zeros((0, 2), np.int64), np.zeros(0)
    return GeodesicGraph(c, k, r.complex.n_vertices, e, w, f, top_nodes, top_weights)


_graph_cache: dict = {}


def geodesic_graph(c: MetricComplex, k: int) -> GeodesicGraph:
    """Chord graph over the level-k subdivision vertices with flat chord weights."""
    key = (id(c), k)
    hit = _graph_cache.get(key)
    if hit is not None and hit.complex is c:
        return hit
    g = _build_graph(c, k, None)
    if len(_graph_cache) > 64:
        _graph_cache.clear()
    _graph_cache[key] = g
    return g


def induced_graph(f: PLMap, k: int) -> GeodesicGraph:
    """Chord graph whose weights are exact image lengths under ambient map ``f``."""
    if not f.is_ambient:
        raise MapError("induced distances need an ambient map")
    return _build_graph(f.domain, k, f)


def intrinsic_distance(c: MetricComplex, x: BaryPoint, y: BaryPoint, k: int) -> DistanceEstimate:
    """Upper bound on the intrinsic distance from x to y at refinement level k.

    Returns +inf when x and y lie in different components.
    """
    if x == y:
        return DistanceEstimate(0.0, k)
    d = geodesic_graph(c, k).point_distances([x], [y])
    return DistanceEstimate(float(d[0, 0]), k)


def induced_distance(f: PLMap, x: BaryPoint, y: BaryPoint, k: int) -> DistanceEstimate:
    """Upper bound on the induced length distance of ``f`` at level k."""
    if x == y:
        return DistanceEstimate(0.0, k)
    d = induced_graph(f, k).point_distances([x], [y])
    return DistanceEstimate(float(d[0, 0]), k)


def path_image_length(f: PLMap, path) -> float:
    """Exact length of the image of a polyline of domain points under ambient ``f``."""
    if not f.is_ambient:
        raise MapError("path_image_length needs an ambient map")
    c = f.domain
    total = 0.0
    path = list(path)
    for p, q in zip(path, path[1:]):
        c.check_point(p)
        c.check_point(q)
        common = c.tops_containing(sorted(set(c.support(p)) | set(c.support(q))))
        if not common:
            raise ComplexError("consecutive polyline points do not share a simplex")
        t = common[0]
        binv, vel = f.top_velocity(t)
        total += float(kernels.chord_image_lengths(binv, vel, c.express(p, t)[None], c.express(q, t)[None])[0])
    return total


__all__ = [
    "DistanceEstimate",
    "GeodesicGraph",
    "geodesic_graph",
    "induced_graph",
    "intrinsic_distance",
    "induced_distance",
    "path_image_length",
]
