"""Finite Euclidean polyhedra as simplicial complexes with flat per-simplex metrics.

A :class:`MetricComplex` is stored intrinsically: top simplices plus edge
lengths.  Coordinates are an optional convenience.  Points are
:class:`BaryPoint` values referring to a top simplex by index.

Subdivision is edgewise (midpoint): each k-simplex is split into 2**k
children following Freudenthal's scheme, with every simplex ordered by
global vertex index so that shared faces are split identically.
"""
from __future__ import annotations

import functools
import itertools
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

# Gram-matrix rank test: degenerate if lambda_min < DEGENERACY_RTOL * lambda_max.
DEGENERACY_RTOL = 1e-10
COORD_RTOL = 1e-9
WEIGHT_TOL = 1e-12


class ComplexError(ValueError):
    """Raised when an operation needs a valid complex and gets an invalid one."""


class DegenerateSimplexError(ComplexError):
    pass


@dataclass(frozen=True)
class BaryPoint:
    """A point of a complex: top simplex index plus barycentric weights."""

    simplex: int
    weights: tuple[float, ...]

    def __post_init__(self):
        w = tuple(float(x) for x in self.weights)
        object.__setattr__(self, "weights", w)
        if any(not math.isfinite(x) for x in w):
            raise ValueError("barycentric weights must be finite")
        if min(w, default=0.0) < -WEIGHT_TOL:
            raise ValueError(f"negative barycentric weight in {w}")
        if abs(sum(w) - 1.0) > WEIGHT_TOL * max(1, len(w)):
            raise ValueError(f"barycentric weights {w} do not sum to 1")

    @property
    def array(self) -> np.ndarray:
        return np.asarray(self.weights, dtype=float)


@dataclass(frozen=True)
class ValidationReport:
    violations: tuple[str, ...] = ()

    @property
    def ok(self) -> bool:
        return not self.violations

    def __bool__(self) -> bool:
        return self.ok


def _faces(simplex):
    for r in range(1, len(simplex) + 1):
        yield from itertools.combinations(simplex, r)


def _edge_key(u: int, v: int) -> tuple[int, int]:
    return (u, v) if u < v else (v, u)


@dataclass(frozen=True, eq=False)
class MetricComplex:
    """Finite simplicial complex whose simplices carry flat metrics.

    ``top_simplices`` are the maximal simplices (sorted vertex tuples, sorted
    lexicographically); every face of a top simplex belongs to the complex.
    ``edge_lengths`` maps sorted vertex pairs to lengths.
    Instances compare and hash by identity so they can key caches.
    """

    n_vertices: int
    top_simplices: tuple[tuple[int, ...], ...]
    edge_lengths: dict[tuple[int, int], float] = field(repr=False)
    coords: np.ndarray | None = field(default=None, repr=False)
    declared_dim: int | None = None

    @classmethod
    def from_simplices(cls, n_vertices, simplices, edge_lengths=None, coords=None, dim=None):
        """Build from any list of simplices (faces allowed) and edge lengths.

        ``edge_lengths`` may be a mapping ``{(i, j): length}`` or an iterable of
        ``(i, j, length)``.  When omitted, lengths are derived from ``coords``.
        """
        simp = {tuple(sorted(int(v) for v in s)) for s in simplices}
        covered = set()
        for s in simp:
            covered.update(_faces(s))
        # isolated vertices appear as top 0-simplices
        for v in range(n_vertices):
            if (v,) not in covered:
                simp.add((v,))
        tops = []
        for s in simp:
            if not any(len(t) > len(s) and set(s) <= set(t) for t in simp):
                tops.append(s)
        tops.sort()
        if coords is not None:
            coords = np.asarray(coords, dtype=float)
            if coords.ndim != 2 or coords.shape[0] != n_vertices:
                raise ComplexError("coords must have one row per vertex")
        lengths: dict[tuple[int, int], float] = {}
        if edge_lengths is None:
            if coords is not None:
                for t in tops:
                    for u, v in itertools.combinations(t, 2):
                        lengths[(u, v)] = float(np.linalg.norm(coords[u] - coords[v]))
            elif any(len(t) > 1 for t in tops):
                raise ComplexError("need edge_lengths or coords")
        elif isinstance(edge_lengths, dict):
            lengths = {_edge_key(int(u), int(v)): float(x) for (u, v), x in edge_lengths.items()}
        else:
            lengths = {_edge_key(int(u), int(v)): float(x) for u, v, x in edge_lengths}
        return cls(int(n_vertices), tuple(tops), lengths, coords, dim)

    @classmethod
    def from_coords(cls, coords, simplices):
        coords = np.asarray(coords, dtype=float)
        return cls.from_simplices(len(coords), simplices, None, coords)

    @property
    def dim(self) -> int:
        return max((len(t) - 1 for t in self.top_simplices), default=0)

    @cached_property
    def simplices(self) -> tuple[tuple[int, ...], ...]:
        out = set()
        for t in self.top_simplices:
            out.update(_faces(t))
        return tuple(sorted(out, key=lambda s: (len(s), s)))

    @cached_property
    def edges(self) -> tuple[tuple[int, int], ...]:
        out = set()
        for t in self.top_simplices:
            out.update(itertools.combinations(t, 2))
        return tuple(sorted(out))

    @cached_property
    def _vertex_tops(self) -> list[list[int]]:
        vt: list[list[int]] = [[] for _ in range(self.n_vertices)]
        for i, t in enumerate(self.top_simplices):
            for v in t:
                vt[v].append(i)
        return vt

    def length(self, u: int, v: int) -> float:
        return self.edge_lengths[_edge_key(u, v)]

    def tops_containing(self, support) -> list[int]:
        """Indices of top simplices containing every vertex in ``support``."""
        support = list(support)
        if not support:
            return list(range(len(self.top_simplices)))
        cand = set(self._vertex_tops[support[0]])
        for v in support[1:]:
            cand &= set(self._vertex_tops[v])
        return sorted(cand)

    def squared_distances(self, top: int) -> np.ndarray:
        """Squared edge-length matrix of a top simplex."""
        return self._sqdist[top]

    @cached_property
    def _sqdist(self) -> list[np.ndarray]:
        out = []
        for t in self.top_simplices:
            m = len(t)
            d2 = np.zeros((m, m))
            for a, b in itertools.combinations(range(m), 2):
                d2[a, b] = d2[b, a] = self.length(t[a], t[b]) ** 2
            out.append(d2)
        return out

    def chart(self, top: int) -> np.ndarray:
        return self._charts[top]

    @cached_property
    def _charts(self) -> list[np.ndarray]:
        return [_chart_from_sqdist(d2) for d2 in self._sqdist]

    def vertex_point(self, v: int) -> BaryPoint:
        t = self._vertex_tops[v][0]
        simplex = self.top_simplices[t]
        return BaryPoint(t, tuple(1.0 if u == v else 0.0 for u in simplex))

    def support(self, p: BaryPoint) -> tuple[int, ...]:
        simplex = self.top_simplices[p.simplex]
        return tuple(v for v, w in zip(simplex, p.weights) if w > WEIGHT_TOL)

    def express(self, p: BaryPoint, top: int) -> np.ndarray | None:
        """Weights of ``p`` over the vertices of ``top``, or None if not contained."""
        if p.simplex == top:
            return p.array
        target = self.top_simplices[top]
        pos = {v: i for i, v in enumerate(target)}
        out = np.zeros(len(target))
        for v, w in zip(self.top_simplices[p.simplex], p.weights):
            if w > WEIGHT_TOL:
                if v not in pos:
                    return None
                out[pos[v]] += w
        s = out.sum()
        return out / s

    def check_point(self, p: BaryPoint) -> None:
        if not 0 <= p.simplex < len(self.top_simplices):
            raise ComplexError(f"simplex id {p.simplex} outside complex")
        if len(p.weights) != len(self.top_simplices[p.simplex]):
            raise ComplexError("weight count does not match simplex vertex count")

    def chord_length(self, top: int, a, b) -> float:
        """Straight-line distance between two weight vectors inside one top simplex."""
        w = np.asarray(a, float) - np.asarray(b, float)
        return math.sqrt(max(-0.5 * w @ self._sqdist[top] @ w, 0.0))

    def diameter_bound(self) -> float:
        return sum(self.edge_lengths.values())


def gram_from_sqdist(d2: np.ndarray) -> np.ndarray:
    """Gram matrix of edge vectors from vertex 0, built from squared lengths."""
    return 0.5 * (d2[0, 1:][:, None] + d2[0, 1:][None, :] - d2[1:, 1:])


def simplex_condition(d2: np.ndarray) -> tuple[str, float, float]:
    """Classify a simplex from its squared-length matrix.

    Returns ``(status, lambda_min, lambda_max)`` with status one of ``"ok"``,
    ``"degenerate"``, ``"unrealizable"``.
    """
    if d2.shape[0] <= 1:
        return "ok", 1.0, 1.0
    g = gram_from_sqdist(d2)
    lam = np.linalg.eigvalsh(g)
    lmin, lmax = float(lam[0]), float(lam[-1])
    if lmax <= 0:
        return "degenerate", lmin, lmax
    if lmin < -DEGENERACY_RTOL * lmax:
        return "unrealizable", lmin, lmax
    if lmin < DEGENERACY_RTOL * lmax:
        return "degenerate", lmin, lmax
    return "ok", lmin, lmax


def _chart_from_sqdist(d2: np.ndarray) -> np.ndarray:
    m = d2.shape[0]
    if m == 1:
        return np.zeros((1, 0))
    status, _, _ = simplex_condition(d2)
    if status != "ok":
        raise DegenerateSimplexError(f"simplex is {status}")
    low = np.linalg.cholesky(gram_from_sqdist(d2))
    return np.vstack([np.zeros((1, m - 1)), low])


def simplex_chart(c: MetricComplex, s) -> np.ndarray:
    """Isometric coordinates of simplex ``s`` in E^dim(s).

    The first vertex sits at the origin and the remaining vertices are placed
    by Gram-Schmidt in vertex-index order (a lower-triangular Cholesky factor),
    so vertex k only uses the first k coordinates with a positive last entry.
    """
    s = tuple(sorted(s))
    m = len(s)
    d2 = np.zeros((m, m))
    for a, b in itertools.combinations(range(m), 2):
        try:
            d2[a, b] = d2[b, a] = c.length(s[a], s[b]) ** 2
        except KeyError:
            raise ComplexError(f"{s} is not a simplex of the complex") from None
    return _chart_from_sqdist(d2)


def validate_complex(c: MetricComplex) -> ValidationReport:
    """List every violated invariant of ``c``; empty iff valid."""
    out: list[str] = []
    n = c.n_vertices
    for t in c.top_simplices:
        if any(not 0 <= v < n for v in t):
            out.append(f"simplex {list(t)} references a vertex outside 0..{n - 1}")
    if out:
        return ValidationReport(tuple(out))
    edges = set(c.edges)
    for e in c.edges:
        if e not in c.edge_lengths:
            out.append(f"missing edge length for edge {list(e)}")
    for e, x in sorted(c.edge_lengths.items()):
        if e not in edges:
            out.append(f"edge length given for non-edge {list(e)}")
        elif not math.isfinite(x) or x <= 0:
            out.append(f"edge {list(e)} has non-positive or non-finite length {x}")
    if out:
        return ValidationReport(tuple(out))
    for s in c.simplices:
        if len(s) == 3:
            a, b, d = c.length(s[0], s[1]), c.length(s[1], s[2]), c.length(s[0], s[2])
            x, y, z = sorted((a, b, d))
            if z > x + y:
                out.append(f"triangle inequality violated on {list(s)}: {z:g} > {x:g} + {y:g}")
    for i, t in enumerate(c.top_simplices):
        status, lmin, lmax = simplex_condition(c.squared_distances(i))
        if status == "degenerate":
            out.append(f"simplex {list(t)} is degenerate (Gram eigenvalues {lmin:.3g}..{lmax:.3g})")
        elif status == "unrealizable":
            out.append(f"simplex {list(t)} is not realizable as a flat Euclidean simplex")
    if c.declared_dim is not None and c.declared_dim != c.dim:
        out.append(f"declared dim {c.declared_dim} differs from maximal simplex dimension {c.dim}")
    if c.coords is not None:
        for (u, v), x in sorted(c.edge_lengths.items()):
            y = float(np.linalg.norm(c.coords[u] - c.coords[v]))
            if abs(x - y) > COORD_RTOL * max(x, y):
                out.append(f"edge {[u, v]} length {x!r} disagrees with coordinates ({y!r})")
    return ValidationReport(tuple(out))


def require_valid(c: MetricComplex) -> None:
    report = validate_complex(c)
    if not report.ok:
        raise ComplexError("invalid complex: " + "; ".join(report.violations))


# ---------------------------------------------------------------------------
# subdivision


@functools.cache
def freudenthal_children(n: int) -> tuple[tuple[tuple[int, int], ...], ...]:
    """Children of the edgewise subdivision of an n-simplex v0..vn.

    Each child is a tuple of vertex labels ``(i, j)`` with ``i <= j``, meaning
    the midpoint of vi and vj (``i == j`` is vi itself).
    """
    if n == 0:
        return (((0, 0),),)

    def label(x):
        w = [2 - x[0]] + [x[k] - x[k + 1] for k in range(n - 1)] + [x[n - 1]]
        idx = [k for k, c in enumerate(w) for _ in range(c)]
        return (idx[0], idx[1])

    def inside(x):
        return all(x[k] >= x[k + 1] for k in range(n - 1)) and x[0] <= 2 and x[-1] >= 0

    children = []
    for base in itertools.product((0, 1), repeat=n):
        for perm in itertools.permutations(range(n)):
            pts = [tuple(base)]
            cur = list(base)
            for k in perm:
                cur[k] += 1
                pts.append(tuple(cur))
            if all(inside(p) for p in pts):
                children.append(tuple(label(p) for p in pts))
    assert len(children) == 2**n
    return tuple(sorted(children))


@dataclass(frozen=True)
class SubdivisionLineage:
    """Where each subdivision vertex sits in the original complex.

    ``parents[v]`` is ``(support, weights)``: the smallest original simplex
    containing vertex v and its barycentric weights there.
    """

    level: int
    parents: tuple[tuple[tuple[int, ...], tuple[float, ...]], ...]


class Refinement:
    """Level-k edgewise subdivision of a complex with its bookkeeping.

    Attributes
    ----------
    base, level, complex : the original complex, k, and the subdivided complex.
    support, weights : per subdivided vertex, original carrier and weights.
    cell_origin : per subdivided top cell, the original top simplex containing it.
    cells_in_top : per original top, array of subdivided cell indices.
    cell_bary : per original top, array (n_cells, m, m); column j holds the
        weights (over the original top's vertices) of the cell's j-th vertex.
    """

    def __init__(self, base, level, complex_, support, weights, cell_origin):
        self.base = base
        self.level = level
        self.complex = complex_
        self.support = support
        self.weights = weights
        self.cell_origin = np.asarray(cell_origin, dtype=np.int64)
        tops = complex_.top_simplices
        self.cells_in_top = []
        self.cell_bary = []
        for t_idx, t in enumerate(base.top_simplices):
            cells = np.flatnonzero(self.cell_origin == t_idx)
            self.cells_in_top.append(cells)
            m = len(t)
            bary = np.zeros((len(cells), m, m))
            pos = {v: i for i, v in enumerate(t)}
            for k, ci in enumerate(cells):
                for j, u in enumerate(tops[ci]):
                    for v, w in zip(support[u], weights[u]):
                        bary[k, pos[v], j] = w
            self.cell_bary.append(bary)

    @cached_property
    def cell_bary_inv(self) -> list[np.ndarray]:
        return [np.linalg.inv(b) if len(b) else b for b in self.cell_bary]

    def lineage(self) -> SubdivisionLineage:
        return SubdivisionLineage(self.level, tuple(zip(self.support, self.weights)))

    def vertex_point(self, u: int) -> BaryPoint:
        """Subdivision vertex ``u`` as a point of the original complex."""
        tops = self.base.tops_containing(self.support[u])
        t = tops[0]
        simplex = self.base.top_simplices[t]
        w = dict(zip(self.support[u], self.weights[u]))
        return BaryPoint(t, tuple(w.get(v, 0.0) for v in simplex))

    def vertex_weights_in(self, u: int, top: int) -> np.ndarray:
        simplex = self.base.top_simplices[top]
        w = dict(zip(self.support[u], self.weights[u]))
        return np.array([w.get(v, 0.0) for v in simplex])

    @cached_property
    def vertex_points(self) -> list[BaryPoint]:
        return [self.vertex_point(u) for u in range(self.complex.n_vertices)]

    def locate(self, p: BaryPoint, tol: float = 1e-12) -> tuple[int, np.ndarray]:
        """Lowest-index subdivided cell containing ``p`` and ``p``'s weights in it."""
        cells, mu = self.locate_many(p.simplex, p.array[None, :], tol)
        return int(cells[0]), mu[0]

    def locate_many(self, top: int, w: np.ndarray, tol: float = 1e-12):
        """Vectorised :meth:`locate` for weight rows ``w`` inside original ``top``."""
        binv = self.cell_bary_inv[top]
        mu = np.einsum("cij,pj->pci", binv, w)
        inside = mu.min(axis=2) >= -tol
        if not inside.any(axis=1).all():
            # fall back to the least-violating cell (round-off at boundaries)
            k = np.argmax(mu.min(axis=2), axis=1)
        else:
            k = np.argmax(inside, axis=1)
        sel = mu[np.arange(len(w)), k]
        sel = np.clip(sel, 0.0, None)
        sel /= sel.sum(axis=1, keepdims=True)
        return self.cells_in_top[top][k], sel


def _refine_once(base: MetricComplex, prev: Refinement) -> Refinement:
    cx = prev.complex
    n_old = cx.n_vertices
    edges = cx.edges
    mid = {e: n_old + i for i, e in enumerate(edges)}
    support = list(prev.support)
    weights = list(prev.weights)
    for u, v in edges:
        w = {}
        for s, x in zip(prev.support[u], prev.weights[u]):
            w[s] = w.get(s, 0.0) + 0.5 * x
        for s, x in zip(prev.support[v], prev.weights[v]):
            w[s] = w.get(s, 0.0) + 0.5 * x
        keys = tuple(sorted(w))
        support.append(keys)
        weights.append(tuple(w[k] for k in keys))

    children = []
    for ci, t in enumerate(cx.top_simplices):
        origin = int(prev.cell_origin[ci])
        for pattern in freudenthal_children(len(t) - 1):
            child = tuple(sorted(t[i] if i == j else mid[(t[i], t[j])] for i, j in pattern))
            children.append((child, origin))
    children.sort()
    tops = tuple(ch for ch, _ in children)
    origin = [o for _, o in children]

    lengths = {}
    for (child, o) in children:
        d2 = base.squared_distances(o)
        simplex = base.top_simplices[o]
        pos = {v: i for i, v in enumerate(simplex)}
        vecs = {}
        for u in child:
            w = np.zeros(len(simplex))
            for s, x in zip(support[u], weights[u]):
                w[pos[s]] = x
            vecs[u] = w
        for u, v in itertools.combinations(child, 2):
            if (u, v) not in lengths:
                diff = vecs[u] - vecs[v]
                lengths[(u, v)] = math.sqrt(max(-0.5 * diff @ d2 @ diff, 0.0))
    coords = None
    if base.coords is not None:
        coords = np.array(
            [sum(x * base.coords[s] for s, x in zip(sp, ws)) for sp, ws in zip(support, weights)]
        ).reshape(len(support), base.coords.shape[1])
    new = MetricComplex(len(support), tops, lengths, coords)
    return Refinement(base, prev.level + 1, new, tuple(support), tuple(weights), origin)


@functools.lru_cache(maxsize=256)
def refinement(c: MetricComplex, level: int) -> Refinement:
    """Cached level-``level`` subdivision of ``c`` (c must be valid)."""
    if level < 0:
        raise ValueError("subdivision level must be >= 0")
    if level == 0:
        support = tuple((v,) for v in range(c.n_vertices))
        weights = tuple((1.0,) for _ in range(c.n_vertices))
        return Refinement(c, 0, c, support, weights, range(len(c.top_simplices)))
    return _refine_once(c, refinement(c, level - 1))


def subdivide(c: MetricComplex, levels: int) -> tuple[MetricComplex, SubdivisionLineage]:
    """Edgewise midpoint subdivision applied ``levels`` times.

    Edge lengths of the result are measured inside the flat chart of the
    original simplex, so the intrinsic metric is unchanged.
    """
    if levels < 0:
        raise ValueError("levels must be >= 0")
    require_valid(c)
    r = refinement(c, levels)
    return r.complex, r.lineage()


def simplex_volume(d2: np.ndarray) -> float:
    m = d2.shape[0]
    if m == 1:
        return 1.0
    g = gram_from_sqdist(d2)
    return math.sqrt(max(np.linalg.det(g), 0.0)) / math.factorial(m - 1)
