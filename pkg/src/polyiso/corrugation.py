"""Corrugation: push a short PL map towards an intrinsic isometry inside an epsilon tube.

One-dimensional complexes are handled exactly with per-edge sawtooth
polylines.  In higher dimension each round subdivides the domain and solves
a penalised least-squares problem on the vertex images, restoring edge
lengths while keeping every cell short and every vertex inside the round's
displacement budget.  Budgets halve from round to round, so the total
displacement stays below epsilon.
"""
from __future__ import annotations

import logging
import math
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.optimize import minimize

from .complex import BaryPoint, MetricComplex, refinement, require_valid
from .maps import (
    SHORTNESS_SLACK,
    MapError,
    PLMap,
    cell_chart_inverses,
    injectivity_check,
    shortness_certificate,
    sup_displacement,
)
from .metric import geodesic_graph, induced_graph

log = logging.getLogger(__name__)

TIGHT_RTOL = 1e-12
CEIL_RTOL = 1e-14
MAX_LEVEL_1D = 20


class CorrugationError(ValueError):
    pass


@dataclass(frozen=True)
class StretchConfig:
    eta: float
    epsilon: float
    rho: float = 0.5
    max_rounds: int = 12
    seed: int = 0
    max_level: int = 6
    max_iter: int = 3000
    measure_level: int = 3
    samples: int = 50

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be positive")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if not 0 < self.rho < 1:
            raise ValueError("rho must lie in (0, 1)")
        if self.max_rounds < 0:
            raise ValueError("max_rounds must be >= 0")

    def with_epsilon(self, epsilon: float) -> "StretchConfig":
        return StretchConfig(**{**asdict(self), "epsilon": epsilon})


@dataclass(frozen=True)
class DefectReport:
    length_defect: float
    displacement: float
    max_stretch: float
    min_separation: float
    pairs_measured: int
    level: int = 0

    @property
    def isometric(self) -> bool:
        return self.length_defect == 0 and self.max_stretch <= 1 + SHORTNESS_SLACK

    def to_dict(self) -> dict:
        d = asdict(self)
        # no non-adjacent simplices to compare: JSON has no infinity, so use null
        if math.isinf(d["min_separation"]):
            d["min_separation"] = None
        return d


@dataclass
class EmbeddingResult:
    map: PLMap
    report: DefectReport
    success: bool
    message: str = ""
    history: list = field(default_factory=list)

    def __iter__(self):
        yield self.map
        yield self.report


# ---------------------------------------------------------------------------
# measurement


def _random_points(c: MetricComplex, count: int, rng) -> list[BaryPoint]:
    tops = [i for i, t in enumerate(c.top_simplices) if len(t) > 1] or list(range(len(c.top_simplices)))
    out = []
    for _ in range(count):
        t = tops[int(rng.integers(len(tops)))]
        w = rng.dirichlet(np.ones(len(c.top_simplices[t])))
        out.append(BaryPoint(t, tuple(w / w.sum())))
    return out


def measure_defect(f: PLMap, reference: PLMap, cfg: StretchConfig) -> DefectReport:
    """Defect diagnostics on all subdivision edges plus a seeded random pair sample.

    Edge pairs use the edge length as the intrinsic value (an upper bound)
    and the exact image length |f(u) - f(v)| as the induced value.
    """
    c = f.domain
    cx = f.refinement.complex
    defect = 0.0
    pairs = 0
    if cx.edges:
        e = np.array(cx.edges)
        target = np.array([cx.edge_lengths[tuple(x)] for x in cx.edges])
        got = np.linalg.norm(f.images[e[:, 0]] - f.images[e[:, 1]], axis=1)
        defect = float(np.max(target - got, initial=0.0))
        pairs += len(e)
    if cfg.samples and any(len(t) > 1 for t in c.top_simplices):
        rng = np.random.default_rng([cfg.seed, 7919])
        xs = _random_points(c, cfg.samples, rng)
        ys = _random_points(c, cfg.samples, rng)
        k = cfg.measure_level
        d_int = np.diag(geodesic_graph(c, k).point_distances(xs, ys))
        d_ind = np.diag(induced_graph(f, k).point_distances(xs, ys))
        fin = np.isfinite(d_int)
        if fin.any():
            defect = max(defect, float(np.max(d_int[fin] - d_ind[fin])))
        pairs += len(xs)
    inj = injectivity_check(f)
    return DefectReport(
        length_defect=max(defect, 0.0),
        displacement=sup_displacement(f, reference),
        max_stretch=shortness_certificate(f).max_stretch,
        min_separation=inj.min_separation if inj.ok else 0.0,
        pairs_measured=pairs,
        level=f.level,
    )


# ---------------------------------------------------------------------------
# dimension one


def sawtooth_teeth(target_len: float, chord_len: float, eps: float) -> tuple[int, float]:
    """Tooth count m and amplitude a turning a chord of length l' into a zigzag of length l."""
    if eps <= 0:
        raise ValueError("eps must be positive")
    if chord_len > target_len * (1 + SHORTNESS_SLACK):
        raise CorrugationError(f"edge image {chord_len!r} longer than target {target_len!r}: map not short")
    if target_len - chord_len <= TIGHT_RTOL * target_len:
        return 0, 0.0
    rise = math.sqrt(target_len**2 - chord_len**2)
    # a few ulps of slack so rounded inputs like l = sqrt(2) do not gain an extra tooth
    m = max(1, math.ceil(rise / (2 * eps) * (1 - CEIL_RTOL)))
    return m, min(rise / (2 * m), eps)


def sawtooth_1d(target_len, p, q, normal, eps) -> np.ndarray:
    """Zigzag polyline from p to q of total length ``target_len``.

    Vertices sit at equal spacing along [p, q]; the odd ones are offset by
    +a, -a, +a, ... along ``normal``.  With m teeth there are 2m pieces, each
    of length sqrt((l'/2m)^2 + a^2), so the total is sqrt(l'^2 + 4 m^2 a^2) = l.
    """
    p = np.asarray(p, float)
    q = np.asarray(q, float)
    normal = np.asarray(normal, float)
    chord = q - p
    ell = float(np.linalg.norm(chord))
    if abs(np.linalg.norm(normal) - 1) > 1e-9:
        raise ValueError("normal must be a unit vector")
    # q - p carries rounding of order |p| * ulp, which dominates for short chords
    slack = 1e-9 * ell + 1e-12 * max(np.abs(p).max(initial=0.0), np.abs(q).max(initial=0.0))
    if ell > 0 and abs(normal @ chord) > slack:
        raise ValueError("normal must be orthogonal to q - p")
    m, a = sawtooth_teeth(float(target_len), ell, float(eps))
    if m == 0:
        return np.stack([p, q])
    return _zigzag(p, q, normal, a, 2 * m)


def _zigzag(p, q, normal, a, pieces):
    t = np.arange(pieces + 1) / pieces
    pts = p[None] + t[:, None] * (q - p)[None]
    j = np.arange(pieces + 1)
    sign = np.where(j % 2 == 1, np.where((j // 2) % 2 == 0, 1.0, -1.0), 0.0)
    return pts + (a * sign)[:, None] * normal[None]


def _complement(vectors: np.ndarray, n: int) -> np.ndarray:
    """Orthonormal basis (columns) of the complement of span(vectors) in R^n."""
    if len(vectors) == 0:
        return np.eye(n)
    u, s, _ = np.linalg.svd(np.asarray(vectors).T, full_matrices=True)
    rank = int((s > 1e-12 * max(s.max(initial=0), 1e-300)).sum())
    return u[:, rank:]


def _deterministic_normal(d: np.ndarray, global_perp: np.ndarray, slot: int) -> np.ndarray:
    n = len(d)
    if global_perp.shape[1]:
        return global_perp[:, slot % global_perp.shape[1]]
    dn = d / np.linalg.norm(d) if np.linalg.norm(d) > 0 else np.zeros(n)
    for k in range(n):
        e = np.zeros(n)
        e[k] = 1.0
        v = e - (e @ dn) * dn
        if np.linalg.norm(v) > 1e-6:
            return v / np.linalg.norm(v)
    raise CorrugationError("no normal direction available")


def _random_normal(d: np.ndarray, rng) -> np.ndarray:
    dn = d / np.linalg.norm(d) if np.linalg.norm(d) > 0 else np.zeros(len(d))
    while True:
        v = rng.normal(size=len(d))
        v -= (v @ dn) * dn
        if np.linalg.norm(v) > 1e-6:
            return v / np.linalg.norm(v)


def _embed_1d(c: MetricComplex, f0: PLMap, cfg: StretchConfig) -> EmbeddingResult:
    cx0 = f0.refinement.complex
    edges = [t for t in cx0.top_simplices if len(t) == 2]
    N = f0.ambient_dim
    Y = f0.images
    chords = {e: Y[e[1]] - Y[e[0]] for e in edges}
    targets = {e: cx0.length(*e) for e in edges}
    for e in edges:
        ell = float(np.linalg.norm(chords[e]))
        if ell > targets[e] * (1 + SHORTNESS_SLACK):
            raise CorrugationError(f"initial map is not short on edge {list(e)}")
    dirs = np.array([d for d in chords.values() if np.linalg.norm(d) > 0]).reshape(-1, N)
    global_perp = _complement(dirs, N)
    rng = np.random.default_rng([cfg.seed, 1])
    history = []
    budget = 0.9 * cfg.epsilon
    best = None
    for attempt in range(8):
        eps_e = budget * 0.5**attempt
        teeth = {e: sawtooth_teeth(targets[e], float(np.linalg.norm(chords[e])), eps_e)[0] for e in edges}
        mmax = max(teeth.values(), default=0)
        extra = 0 if mmax == 0 else math.ceil(math.log2(2 * mmax))
        level = f0.level + extra
        if level > MAX_LEVEL_1D:
            rep = measure_defect(f0, f0, cfg)
            return EmbeddingResult(
                f0, rep, False,
                f"epsilon {cfg.epsilon:g} too small: sawtooth needs {mmax} teeth per edge "
                f"(subdivision level {level} > {MAX_LEVEL_1D})",
                history,
            )
        pieces = 2**extra
        if attempt == 0:
            normals = {e: _deterministic_normal(chords[e], global_perp, i) for i, e in enumerate(edges)}
        else:
            normals = {e: _random_normal(chords[e], rng) for e in edges}
        r = refinement(c, level)
        r0 = f0.refinement
        images = np.zeros((r.complex.n_vertices, N))
        pts = r.vertex_points
        for top in range(len(c.top_simplices)):
            idx = [i for i, p in enumerate(pts) if p.simplex == top]
            if not idx:
                continue
            w = np.array([pts[i].weights for i in idx])
            cells, mu = r0.locate_many(top, w)
            for i, ci, m in zip(idx, cells, mu):
                cell = cx0.top_simplices[ci]
                base = m @ Y[list(cell)]
                if len(cell) == 2 and extra:
                    ell = float(np.linalg.norm(chords[cell]))
                    nteeth = pieces // 2
                    if targets[cell] - ell > TIGHT_RTOL * targets[cell]:
                        a = math.sqrt(targets[cell] ** 2 - ell**2) / (2 * nteeth)
                        j = int(round(m[1] * pieces))
                        if j % 2 == 1:
                            base = base + (a if (j // 2) % 2 == 0 else -a) * normals[cell]
                images[i] = base
        g = PLMap(c, level, images)
        rep = measure_defect(g, f0, cfg)
        history.append({"attempt": attempt, "level": level, "eps_edge": eps_e, "report": rep.to_dict()})
        best = (g, rep)
        if rep.min_separation > 0 and rep.displacement < cfg.epsilon:
            ok = rep.length_defect <= cfg.eta
            return EmbeddingResult(g, rep, ok, "" if ok else "length defect above eta", history)
        log.info("sawtooth attempt %d not injective; retrying", attempt)
    g, rep = best
    return EmbeddingResult(g, rep, False, "injectivity unresolved after jitter retries", history)


# ---------------------------------------------------------------------------
# higher dimension


@dataclass(frozen=True)
class RoundInfo:
    round: int
    level: int
    eps_round: float
    blend: float
    iterations: int
    energy_start: float
    energy_end: float
    short: bool
    displacement: float


class _Problem:
    """Energy and gradient of one stretching round on level-L vertex images."""

    def __init__(self, f: PLMap, level: int, eps_r: float, margin: float):
        c = f.domain
        self.F = f.refined(level).images.copy()
        cx = refinement(c, level).complex
        e = np.array(cx.edges, dtype=np.int64).reshape(-1, 2)
        self.edges = e
        self.targets = np.array([cx.edge_lengths[tuple(x)] for x in cx.edges])
        self.groups = []
        cells = cx.top_simplices
        for idx, Cinv in cell_chart_inverses(c, level):
            if Cinv is None or len(idx) == 0:
                continue
            self.groups.append((np.array([cells[i] for i in idx]), Cinv))
        self.cap = (1 - margin) ** 2
        self.radius = 0.9 * eps_r
        self.mu_stretch = 10.0
        self.mu_disp = 1e3

    def energy(self, x):
        X = x.reshape(self.F.shape)
        e, T = self.edges, self.targets
        d = X[e[:, 0]] - X[e[:, 1]]
        ln = np.linalg.norm(d, axis=1)
        res = (T - ln) / T
        val = float(res @ res)
        g = np.zeros_like(X)
        coef = (-2 * res / T / np.maximum(ln, 1e-300))[:, None] * d
        np.add.at(g, e[:, 0], coef)
        np.add.at(g, e[:, 1], -coef)
        for verts, Cinv in self.groups:
            D = np.swapaxes(X[verts[:, 1:]] - X[verts[:, :1]], 1, 2)
            A = D @ Cinv
            w, V = np.linalg.eigh(np.swapaxes(A, 1, 2) @ A)
            lam, v = w[:, -1], V[:, :, -1]
            ex = np.maximum(lam - self.cap, 0.0)
            val += self.mu_stretch * float(ex @ ex)
            Av = np.einsum("cnk,ck->cn", A, v)
            cv = np.einsum("ckj,cj->ck", Cinv, v)
            fac = (2 * self.mu_stretch * ex)[:, None] * 2 * Av
            total = np.zeros_like(fac)
            for k in range(verts.shape[1] - 1):
                gk = fac * cv[:, k : k + 1]
                np.add.at(g, verts[:, k + 1], gk)
                total += gk
            np.add.at(g, verts[:, 0], -total)
        dd = X - self.F
        q = np.einsum("ij,ij->i", dd, dd)
        ex2 = np.maximum(q - self.radius**2, 0.0)
        val += self.mu_disp * float(ex2 @ ex2)
        g += (4 * self.mu_disp * ex2)[:, None] * dd
        return val, g.ravel()

    def jitter(self, rng, scale):
        X = self.F
        n, N = X.shape
        nbrs = [[] for _ in range(n)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        out = np.zeros_like(X)
        z = rng.normal(size=X.shape)
        for i in range(n):
            span = X[nbrs[i]] - X[i] if nbrs[i] else np.zeros((0, N))
            perp = _complement(span, N)
            out[i] = perp @ (perp.T @ z[i])
        peak = np.linalg.norm(out, axis=1).max(initial=0.0)
        return out * (scale / peak) if peak > 0 else out


def _edge_defect(f: PLMap) -> float:
    cx = f.refinement.complex
    if not cx.edges:
        return 0.0
    e = np.array(cx.edges)
    t = np.array([cx.edge_lengths[tuple(x)] for x in cx.edges])
    got = np.linalg.norm(f.images[e[:, 0]] - f.images[e[:, 1]], axis=1)
    return float(np.max(np.abs(t - got) / t))


def _blend(F: np.ndarray, X: np.ndarray, make, cap: float, radius: float) -> tuple[float, PLMap]:
    """Largest t in [0, 1] with F + t(X - F) short (stretch <= cap) and within radius."""

    def ok(t):
        g = make(F + t * (X - F))
        disp = float(np.linalg.norm(g.images - F, axis=1).max(initial=0.0))
        return shortness_certificate(g).max_stretch <= cap and disp < radius, g

    good, g = ok(1.0)
    if good:
        return 1.0, g
    lo, hi = 0.0, 1.0
    g_lo = make(F)
    for _ in range(40):
        mid = 0.5 * (lo + hi)
        good, g = ok(mid)
        if good:
            lo, g_lo = mid, g
        else:
            hi = mid
    return lo, g_lo


def stretch_round(f: PLMap, cfg: StretchConfig, round_index: int = 1, extra_levels: int = 0):
    """One stretching round; returns ``(g, RoundInfo)``.

    The domain is subdivided at least one level and further until the mesh
    size is at most twice the round budget ``epsilon * 2**-round_index``.
    """
    if not f.is_ambient:
        raise MapError("stretch_round needs an ambient map")
    cert = shortness_certificate(f)
    if not cert.short:
        raise CorrugationError(f"input map not short (max stretch {cert.max_stretch:.12g})")
    eps_r = cfg.epsilon * 0.5**round_index
    if _edge_defect(f) <= TIGHT_RTOL:
        return f, RoundInfo(round_index, f.level, eps_r, 0.0, 0, 0.0, 0.0, True, 0.0)
    c = f.domain
    h0 = max(c.edge_lengths.values())
    level = f.level + 1
    while h0 / 2**level > 2 * eps_r and level < cfg.max_level:
        level += 1
    level = max(f.level, min(level + extra_levels, max(cfg.max_level, f.level)))
    margin = min(0.01, 0.25 * cfg.eta / max(c.diameter_bound(), 1e-300))
    prob = _Problem(f, level, eps_r, margin)
    rng = np.random.default_rng([cfg.seed, round_index])
    x0 = (prob.F + prob.jitter(rng, 0.01 * eps_r)).ravel()
    e0, _ = prob.energy(x0)
    res = minimize(prob.energy, x0, jac=True, method="L-BFGS-B",
                   options={"maxiter": cfg.max_iter, "maxcor": 20})
    X = res.x.reshape(prob.F.shape)
    cap = max(1.0, cert.max_stretch)

    def make(imgs):
        return PLMap(c, level, imgs)

    t, g = _blend(prob.F, X, make, cap, eps_r)
    disp = float(np.linalg.norm(g.images - prob.F, axis=1).max(initial=0.0))
    short = shortness_certificate(g).max_stretch <= 1 + SHORTNESS_SLACK
    info = RoundInfo(round_index, level, eps_r, t, int(res.nit), float(e0), float(res.fun), short, disp)
    return g, info


def _restore_injectivity(g: PLMap, budget: float, cfg: StretchConfig, attempt: int) -> PLMap:
    rng = np.random.default_rng([cfg.seed, 104729, attempt])
    z = rng.normal(size=g.images.shape)
    z *= budget / np.linalg.norm(z, axis=1).max()
    cap = max(1.0, shortness_certificate(g).max_stretch)
    _, out = _blend(g.images, g.images + z, lambda im: PLMap(g.domain, g.level, im), cap, budget * 1.0000001)
    return out


def embed_polyhedron(c: MetricComplex, f0: PLMap, cfg: StretchConfig) -> EmbeddingResult:
    """Approximate intrinsic isometric embedding epsilon-close to the short map f0."""
    require_valid(c)
    if f0.domain is not c:
        raise MapError("initial map is not defined on this complex")
    if not f0.is_ambient:
        raise MapError("initial map must be ambient-valued")
    if f0.ambient_dim < 2 * c.dim + 1:
        raise CorrugationError(f"ambient dimension {f0.ambient_dim} below 2*dim+1 = {2 * c.dim + 1}")
    cert = shortness_certificate(f0)
    if not cert.short:
        raise CorrugationError(f"initial map not short (max stretch {cert.max_stretch:.12g})")
    if c.dim <= 1:
        return _embed_1d(c, f0, cfg)

    rep = measure_defect(f0, f0, cfg)
    history = [{"round": 0, "accepted": True, "report": rep.to_dict()}]
    if rep.length_defect <= cfg.eta and rep.min_separation > 0:
        return EmbeddingResult(f0, rep, True, "", history)
    f, best = f0, rep
    extra = 0
    spent = 0.0
    for rnd in range(1, cfg.max_rounds + 1):
        g, info = stretch_round(f, cfg, rnd, extra)
        spent += info.eps_round
        new = measure_defect(g, f0, cfg)
        accepted = info.short and new.length_defect <= best.length_defect
        contracted = new.length_defect <= cfg.rho * best.length_defect
        history.append({"round": rnd, "accepted": accepted, "contracted": contracted,
                        "info": asdict(info), "report": new.to_dict()})
        log.info("round %d level %d defect %.4g accepted=%s", rnd, info.level, new.length_defect, accepted)
        if accepted:
            f, best = g, new
        if not contracted:
            extra += 1
        if best.length_defect <= cfg.eta:
            break
    if best.length_defect <= cfg.eta and best.min_separation <= 0:
        remaining = cfg.epsilon - spent
        for attempt in range(3):
            g = _restore_injectivity(f, 0.01 * remaining, cfg, attempt)
            new = measure_defect(g, f0, cfg)
            history.append({"round": "jitter", "attempt": attempt, "report": new.to_dict()})
            if new.min_separation > 0 and new.length_defect <= cfg.eta:
                f, best = g, new
                break
    if best.length_defect > cfg.eta:
        return EmbeddingResult(f, best, False, f"length defect {best.length_defect:.4g} above eta after {cfg.max_rounds} rounds", history)
    if best.min_separation <= 0:
        return EmbeddingResult(f, best, False, "injectivity unresolved after jitter retries", history)
    return EmbeddingResult(f, best, True, "", history)


__all__ = [
    "StretchConfig",
    "DefectReport",
    "EmbeddingResult",
    "RoundInfo",
    "CorrugationError",
    "measure_defect",
    "sawtooth_teeth",
    "sawtooth_1d",
    "stretch_round",
    "embed_polyhedron",
]
