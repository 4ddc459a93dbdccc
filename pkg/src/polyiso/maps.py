"""Piecewise-affine maps on subdivided complexes.

A :class:`PLMap` is affine on every cell of the level-``level`` edgewise
subdivision of its domain.  Vertex images are either points of E^N
("ambient" maps) or :class:`~polyiso.complex.BaryPoint` values of a codomain
complex ("codomain-valued" maps, which must send each cell into a single
codomain simplex).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np
from scipy.spatial import cKDTree

from . import kernels
from .complex import BaryPoint, MetricComplex, refinement, simplex_chart

SHORTNESS_SLACK = 1e-9
ALIGN_TOL = 1e-10
DEGENERATE_SV = 1e-12


class MapError(ValueError):
    pass


class ComposeError(MapError):
    """Raised when no refinement within budget aligns the two maps' cells."""


@dataclass(frozen=True, eq=False)
class PLMap:
    domain: MetricComplex
    level: int
    images: np.ndarray | None = None
    codomain: MetricComplex | None = None
    cod_points: tuple[BaryPoint, ...] | None = None

    def __post_init__(self):
        n = self.refinement.complex.n_vertices
        if self.images is not None:
            imgs = np.array(self.images, dtype=float)
            if imgs.ndim != 2 or imgs.shape[0] != n:
                raise MapError(f"expected {n} vertex images, got array of shape {imgs.shape}")
            if not np.isfinite(imgs).all():
                raise MapError("vertex images must be finite")
            imgs.setflags(write=False)
            object.__setattr__(self, "images", imgs)
        elif self.cod_points is not None:
            if self.codomain is None:
                raise MapError("codomain-valued map needs a codomain complex")
            if len(self.cod_points) != n:
                raise MapError(f"expected {n} vertex images, got {len(self.cod_points)}")
            for p in self.cod_points:
                self.codomain.check_point(p)
            object.__setattr__(self, "cod_points", tuple(self.cod_points))
        else:
            raise MapError("PLMap needs ambient images or codomain points")

    @classmethod
    def identity(cls, c: MetricComplex) -> "PLMap":
        return cls(c, 0, codomain=c, cod_points=tuple(c.vertex_point(v) for v in range(c.n_vertices)))

    @classmethod
    def chart_embedding(cls, c: MetricComplex, ambient_dim: int | None = None, scale: float = 1.0):
        """Ambient map from the complex's coordinates (optionally scaled and padded)."""
        coords = c.coords
        if coords is None:
            if len(c.top_simplices) != 1:
                raise MapError("complex has no coordinates")
            coords = np.zeros((c.n_vertices, max(c.dim, 1)))
            top = c.top_simplices[0]
            coords[list(top)] = simplex_chart(c, top)
        x = scale * coords
        if ambient_dim is not None:
            if ambient_dim < x.shape[1]:
                raise MapError("ambient_dim smaller than coordinate dimension")
            x = np.hstack([x, np.zeros((len(x), ambient_dim - x.shape[1]))])
        return cls(c, 0, x)

    @property
    def is_ambient(self) -> bool:
        return self.images is not None

    @property
    def ambient_dim(self) -> int | None:
        return self.images.shape[1] if self.is_ambient else None

    @property
    def refinement(self):
        return refinement(self.domain, self.level)

    @property
    def cells(self) -> tuple[tuple[int, ...], ...]:
        return self.refinement.complex.top_simplices

    # -- per original top: cell lookup data --------------------------------

    @cached_property
    def _velocities(self) -> list[np.ndarray]:
        """Per original top, (C, N, m) maps from top weights to images."""
        if not self.is_ambient:
            raise MapError("velocities need an ambient map")
        r = self.refinement
        cells = self.cells
        out = []
        for t in range(len(self.domain.top_simplices)):
            idx = r.cells_in_top[t]
            if len(idx) == 0:
                out.append(np.zeros((0, self.ambient_dim, len(self.domain.top_simplices[t]))))
                continue
            verts = np.array([cells[ci] for ci in idx])
            Y = np.swapaxes(self.images[verts], 1, 2)
            out.append(Y @ r.cell_bary_inv[t])
        return out

    def top_velocity(self, top: int) -> tuple[np.ndarray, np.ndarray]:
        return self.refinement.cell_bary_inv[top], self._velocities[top]

    def refined(self, level: int) -> "PLMap":
        """The same map described on a finer subdivision."""
        if level < self.level:
            raise MapError("cannot coarsen a map")
        if level == self.level:
            return self
        pts = refinement(self.domain, level).vertex_points
        if self.is_ambient:
            return PLMap(self.domain, level, evaluate_many(self, pts))
        return PLMap(self.domain, level, codomain=self.codomain, cod_points=tuple(evaluate_many(self, pts)))


def _common_top(c: MetricComplex, pts) -> int | None:
    support = set()
    for p in pts:
        support.update(c.support(p))
    tops = c.tops_containing(sorted(support))
    return tops[0] if tops else None


def _combine_points(c: MetricComplex, pts, mu) -> BaryPoint:
    top = _common_top(c, pts)
    if top is None:
        raise MapError("cell images do not lie in a common codomain simplex")
    w = sum(m * c.express(p, top) for m, p in zip(mu, pts))
    w = np.clip(w, 0.0, None)
    return BaryPoint(top, tuple(w / w.sum()))


def evaluate_many(f: PLMap, points):
    """Evaluate ``f`` at many domain points (ambient: (P, N) array)."""
    points = list(points)
    r = f.refinement
    cells = f.cells
    if f.is_ambient:
        out = np.zeros((len(points), f.ambient_dim))
    else:
        out = [None] * len(points)
    by_top: dict[int, list[int]] = {}
    for i, p in enumerate(points):
        f.domain.check_point(p)
        by_top.setdefault(p.simplex, []).append(i)
    for top, idx in by_top.items():
        w = np.array([points[i].weights for i in idx])
        cell_ids, mu = r.locate_many(top, w)
        for i, ci, m in zip(idx, cell_ids, mu):
            verts = cells[ci]
            if f.is_ambient:
                out[i] = m @ f.images[list(verts)]
            else:
                out[i] = _combine_points(f.codomain, [f.cod_points[v] for v in verts], m)
    return out


def evaluate(f: PLMap, x: BaryPoint):
    """Affine interpolation of the vertex images over the lowest-index cell containing x."""
    res = evaluate_many(f, [x])
    return res[0]


# ---------------------------------------------------------------------------
# shortness


@dataclass(frozen=True)
class ShortnessCertificate:
    per_cell_stretch: np.ndarray
    max_stretch: float

    @property
    def short(self) -> bool:
        return self.max_stretch <= 1.0 + SHORTNESS_SLACK


def cell_chart_inverses(c: MetricComplex, level: int) -> list[tuple[np.ndarray, np.ndarray | None]]:
    """Per original top: (cell indices, (C, n, n) inverse chart edge matrices).

    A cell's chart edge matrix has columns p_k - p_0 of its vertices in an
    isometric chart; ``D @ Cinv`` turns image edge vectors into the
    differential in orthonormal coordinates.
    """
    r = refinement(c, level)
    out = []
    for t in range(len(c.top_simplices)):
        idx = r.cells_in_top[t]
        if len(idx) == 0 or len(c.top_simplices[t]) == 1:
            out.append((idx, None))
            continue
        X = np.swapaxes(r.cell_bary[t], 1, 2) @ c.chart(t)
        C = np.swapaxes(X[:, 1:] - X[:, :1], 1, 2)
        out.append((idx, np.linalg.inv(C)))
    return out


def _cell_differentials(f: PLMap) -> list[tuple[np.ndarray, np.ndarray]]:
    """Per original top: (cell indices, (C, N, n) differentials in orthonormal chart coordinates)."""
    cells = f.cells
    out = []
    for t, (idx, Cinv) in enumerate(cell_chart_inverses(f.domain, f.level)):
        if Cinv is None:
            out.append((idx, None))
            continue
        m = len(f.domain.top_simplices[t])
        verts = np.array([cells[ci] for ci in idx])
        if f.is_ambient:
            Y = f.images[verts]
        else:
            Y = np.zeros((len(idx), m, max(f.codomain.dim, 1)))
            for k, vs in enumerate(verts):
                pts = [f.cod_points[v] for v in vs]
                s = _common_top(f.codomain, pts)
                if s is None:
                    raise MapError("cell images do not lie in a common codomain simplex")
                P = np.array([f.codomain.express(p, s) for p in pts]) @ f.codomain.chart(s)
                Y[k, :, : P.shape[1]] = P
        D = np.swapaxes(Y[:, 1:] - Y[:, :1], 1, 2)
        out.append((idx, D @ Cinv))
    return out


def cell_singular_values(f: PLMap) -> tuple[np.ndarray, np.ndarray]:
    """Largest and smallest singular value of the differential on every cell."""
    n = len(f.cells)
    smax = np.zeros(n)
    smin = np.full(n, np.inf)
    for idx, A in _cell_differentials(f):
        if A is None:
            continue
        sv = np.linalg.svd(A, compute_uv=False)
        smax[idx] = sv[:, 0]
        smin[idx] = sv[:, -1]
    return smax, smin


def shortness_certificate(f: PLMap) -> ShortnessCertificate:
    """Per-cell stretch: the top generalized eigenvalue of pullback vs intrinsic Gram form, square-rooted."""
    smax, _ = cell_singular_values(f)
    return ShortnessCertificate(smax, float(smax.max(initial=0.0)))


# ---------------------------------------------------------------------------
# displacement and composition


def sup_displacement(f: PLMap, g: PLMap) -> float:
    """Exact sup over the domain of |f(x) - g(x)|, attained at common-level vertices."""
    if f.domain is not g.domain:
        raise MapError("maps have different domains")
    if not (f.is_ambient and g.is_ambient) or f.ambient_dim != g.ambient_dim:
        raise MapError("sup_displacement needs ambient maps of equal ambient dimension")
    level = max(f.level, g.level)
    a = f.refined(level).images
    b = g.refined(level).images
    if len(a) == 0:
        return 0.0
    return float(np.linalg.norm(a - b, axis=1).max())


def _aligned(g: PLMap, pts) -> bool:
    """True if all codomain points lie in one cell of g."""
    q = g.domain
    top = _common_top(q, pts)
    if top is None:
        return False
    r = g.refinement
    W = np.array([q.express(p, top) for p in pts])
    mu = np.einsum("cij,pj->pci", r.cell_bary_inv[top], W)
    return bool(((mu.min(axis=2) >= -ALIGN_TOL).all(axis=0)).any())


def compose(g: PLMap, f: PLMap, max_extra_levels: int | None = None) -> PLMap:
    """The exact composite g o f, refining f's domain until cells align with g's."""
    if f.is_ambient:
        raise MapError("inner map of a composition must be codomain-valued")
    if f.codomain is not g.domain:
        raise MapError("codomain of the inner map is not the domain of the outer map")
    budget = max_extra_levels if max_extra_levels is not None else g.level + 2
    for level in range(f.level, f.level + budget + 1):
        fr = f.refined(level)
        pts = fr.cod_points
        if all(_aligned(g, [pts[v] for v in cell]) for cell in fr.cells):
            vals = evaluate_many(g, pts)
            if g.is_ambient:
                return PLMap(f.domain, level, np.asarray(vals))
            return PLMap(f.domain, level, codomain=g.codomain, cod_points=tuple(vals))
    raise ComposeError(
        f"cells of the inner map do not align with the outer map's level-{g.level} cells "
        f"after {budget} extra subdivision levels; re-subdivide the inputs so vertex images "
        "fall on the outer map's subdivision vertices"
    )


# ---------------------------------------------------------------------------
# injectivity


@dataclass(frozen=True)
class InjectivityResult:
    ok: bool
    min_separation: float
    witness: tuple[int, int] | None
    degenerate_cells: tuple[int, ...] = ()

    def __bool__(self):
        return self.ok


def _cell_images(f: PLMap):
    cells = f.cells
    return cells, [f.images[list(c)] for c in cells]


def _pair_distances(imgs, pairs) -> np.ndarray:
    out = np.empty(len(pairs))
    if len(pairs) == 0:
        return out
    sizes = np.array([len(imgs[i]) for i in range(len(imgs))])
    pi, pj = pairs[:, 0], pairs[:, 1]
    for a in np.unique(sizes):
        for b in np.unique(sizes):
            sel = np.flatnonzero((sizes[pi] == a) & (sizes[pj] == b))
            if len(sel) == 0:
                continue
            P = np.stack([imgs[i] for i in pi[sel]])
            Q = np.stack([imgs[j] for j in pj[sel]])
            out[sel] = kernels.simplex_distances(P, Q)
    return out


def _non_adjacent(cells, pairs) -> np.ndarray:
    if len(pairs) == 0:
        return pairs
    width = max(len(c) for c in cells)
    V = np.full((len(cells), width), -1)
    for i, c in enumerate(cells):
        V[i, : len(c)] = c
    a, b = V[pairs[:, 0]], V[pairs[:, 1]]
    shared = ((a[:, :, None] == b[:, None, :]) & (a[:, :, None] >= 0)).any(axis=(1, 2))
    return pairs[~shared]


def injectivity_check(f: PLMap, min_sep: float = 0.0) -> InjectivityResult:
    """Exact minimum image distance over non-adjacent cells plus a nondegeneracy check.

    Passes iff every cell's affine map is injective and every pair of cells
    sharing no vertex has image distance > 0 and >= ``min_sep``.
    """
    if not f.is_ambient:
        raise MapError("injectivity_check needs an ambient map")
    cells, imgs = _cell_images(f)
    _, smin = cell_singular_values(f)
    smax_all = max(1.0, float(np.abs(f.images).max(initial=0.0)))
    degenerate = tuple(int(i) for i in np.flatnonzero(smin <= DEGENERATE_SV * smax_all))
    n = len(cells)
    best, witness = np.inf, None
    if n >= 2:
        centers = np.array([im.mean(axis=0) for im in imgs])
        radii = np.array([np.linalg.norm(im - c, axis=1).max() for im, c in zip(imgs, centers)])
        tree = cKDTree(centers)
        k = min(n, 24)
        _, nbr = tree.query(centers, k=k)
        nbr = np.asarray(nbr).reshape(n, k)
        cand = np.stack([np.repeat(np.arange(n), k), nbr.ravel()], axis=1)
        cand = cand[cand[:, 0] < cand[:, 1]]
        cand = _non_adjacent(cells, np.unique(cand, axis=0))
        if len(cand):
            d = _pair_distances(imgs, cand)
            j = int(np.argmin(d))
            best = float(d[j])
            witness = (int(cand[j, 0]), int(cand[j, 1]))
        reach = (best if np.isfinite(best) else np.inf) + 2 * radii.max()
        if np.isfinite(reach):
            pairs = tree.query_pairs(reach, output_type="ndarray")
        else:
            pairs = np.array([(i, j) for i in range(n) for j in range(i + 1, n)], dtype=np.int64)
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if len(pairs):
            pairs = np.sort(pairs, axis=1)
            lb = np.linalg.norm(centers[pairs[:, 0]] - centers[pairs[:, 1]], axis=1) - radii[pairs[:, 0]] - radii[pairs[:, 1]]
            pairs = pairs[lb <= best]
            pairs = _non_adjacent(cells, pairs)
            if len(pairs):
                d = _pair_distances(imgs, pairs)
                j = int(np.argmin(d))
                if d[j] <= best:
                    best = float(d[j])
                    witness = (int(pairs[j, 0]), int(pairs[j, 1]))
    ok = not degenerate and best > 0 and best >= min_sep
    if witness is None and degenerate:
        witness = (degenerate[0], degenerate[0])
    if ok:
        witness = None
    return InjectivityResult(bool(ok), float(best), witness, degenerate)


def check_shortness(f: PLMap, what: str = "map") -> ShortnessCertificate:
    cert = shortness_certificate(f)
    if not cert.short:
        raise MapError(f"{what} is not short (max stretch {cert.max_stretch:.12g})")
    return cert


__all__ = [
    "PLMap",
    "MapError",
    "ComposeError",
    "ShortnessCertificate",
    "InjectivityResult",
    "evaluate",
    "evaluate_many",
    "shortness_certificate",
    "cell_singular_values",
    "cell_chart_inverses",
    "sup_displacement",
    "compose",
    "injectivity_check",
]
