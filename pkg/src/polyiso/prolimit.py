"""Staged embedding of a truncated inverse system of polyhedra.

A system is a finite tower P_0 <- P_1 <- ... <- P_M of complexes joined by
short simplicial bonding maps.  Points of the limit are represented by
threads, i.e. points of the deepest stage together with their projections.
The driver embeds every stage in turn, each one a small perturbation of the
previous embedding pulled back along the bonding map, and keeps the
perturbation budgets small enough that well separated thread pairs stay
apart in the final map.
"""
from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .complex import BaryPoint, MetricComplex, ValidationReport, validate_complex
from .corrugation import EmbeddingResult, StretchConfig, embed_polyhedron
from .maps import PLMap, compose, evaluate, evaluate_many, shortness_certificate, sup_displacement
from .metric import DistanceEstimate, geodesic_graph, induced_graph

log = logging.getLogger(__name__)

EPS_FACTOR = 0.225
SEPARATION_TOL = 1e-12
THREAD_TOL = 1e-12
MONOTONE_RTOL = 1e-9


class InverseSystemError(ValueError):
    """Malformed inverse system."""


class SeparationExhausted(RuntimeError):
    pass


class DeltaError(RuntimeError):
    def __init__(self, msg, witness=None):
        super().__init__(msg)
        self.witness = witness


class StageFailure(RuntimeError):
    def __init__(self, stage: int, msg: str, result: EmbeddingResult | None = None):
        super().__init__(f"stage {stage}: {msg}")
        self.stage = stage
        self.result = result


@dataclass(frozen=True)
class Thread:
    """A point of the limit: a deepest-stage point and its projections ``coordinates[i]``."""

    deep_point: BaryPoint
    coordinates: tuple

    def stage(self, i: int) -> BaryPoint:
        return self.coordinates[i]

    def to_json(self):
        return [self.deep_point.simplex, list(self.deep_point.weights)]


@dataclass(eq=False)
class InverseSystem:
    """Stages P_0..P_M and bondings; ``bondings[i]`` maps P_{i+1} into P_i."""

    stages: tuple
    bondings: tuple
    rank: int
    _composites: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.stages = tuple(self.stages)
        self.bondings = tuple(self.bondings)
        if not self.stages:
            raise InverseSystemError("an inverse system needs at least one stage")
        if len(self.bondings) != len(self.stages) - 1:
            raise InverseSystemError(f"{len(self.stages)} stages need {len(self.stages) - 1} bondings, got {len(self.bondings)}")
        for i, b in enumerate(self.bondings):
            if b.is_ambient:
                raise InverseSystemError(f"bonding {i + 1}->{i} must be complex-valued")
            if b.domain is not self.stages[i + 1] or b.codomain is not self.stages[i]:
                raise InverseSystemError(f"bonding {i + 1}->{i} does not connect stages {i + 1} and {i}")

    @classmethod
    def constant(cls, c: MetricComplex, depth: int, rank: int | None = None) -> "InverseSystem":
        ident = PLMap.identity(c)
        return cls((c,) * (depth + 1), (ident,) * depth, c.dim if rank is None else rank)

    @property
    def truncation(self) -> int:
        return len(self.stages) - 1

    @property
    def deepest(self) -> MetricComplex:
        return self.stages[-1]

    def composite(self, j: int, i: int) -> PLMap:
        """phi_{j,i}: P_j -> P_i (identity for j == i)."""
        if not 0 <= i <= j <= self.truncation:
            raise IndexError((j, i))
        key = (j, i)
        if key not in self._composites:
            if j == i:
                out = PLMap.identity(self.stages[i])
            elif j == i + 1:
                out = self.bondings[i]
            else:
                out = compose(self.bondings[i], self.composite(j, i + 1), max_extra_levels=self.bondings[i].level + 4)
            self._composites[key] = out
        return self._composites[key]

    def thread(self, deep_point: BaryPoint) -> Thread:
        self.deepest.check_point(deep_point)
        coords = [deep_point]
        for i in range(self.truncation - 1, -1, -1):
            coords.append(evaluate(self.bondings[i], coords[-1]))
        return Thread(deep_point, tuple(reversed(coords)))

    def threads(self, points) -> list[Thread]:
        return [self.thread(p) for p in points]


@dataclass
class Schedule:
    epsilons: list
    deltas: dict = field(default_factory=dict)
    sep_stages: dict = field(default_factory=dict)
    o_sets: dict = field(default_factory=dict)
    binding_deltas: list = field(default_factory=list)
    deferred: dict = field(default_factory=dict)

    def tail(self, i: int) -> float:
        """Sum of epsilons with index > i."""
        return float(sum(self.epsilons[i + 1:]))

    def to_dict(self) -> dict:
        return {
            "epsilons": list(self.epsilons),
            "binding_deltas": list(self.binding_deltas),
            "deltas": {str(k): v for k, v in sorted(self.deltas.items())},
            "sep_stages": {str(k): v for k, v in sorted(self.sep_stages.items())},
            "deferred": {str(k): v for k, v in sorted(self.deferred.items())},
            "o_sets": {
                str(k): [[a.to_json(), b.to_json()] for a, b in v] for k, v in sorted(self.o_sets.items())
            },
        }


# ---------------------------------------------------------------------------
# basic quantities


def _same_point(c: MetricComplex, p: BaryPoint, q: BaryPoint, tol: float = THREAD_TOL) -> bool:
    w = c.express(q, p.simplex)
    return w is not None and float(np.max(np.abs(w - p.array))) <= tol


def _sample_points(c: MetricComplex, count: int, rng) -> list[BaryPoint]:
    out = []
    for _ in range(count):
        t = int(rng.integers(len(c.top_simplices)))
        w = rng.dirichlet(np.ones(len(c.top_simplices[t])))
        out.append(BaryPoint(t, tuple(w / w.sum())))
    return out


def _stage_distance_matrix(s: InverseSystem, threads, stage: int, k: int) -> np.ndarray:
    pts = [t.stage(stage) for t in threads]
    return geodesic_graph(s.stages[stage], k).point_distances(pts)


def validate_system(s: InverseSystem, samples: int = 8, seed: int = 0, level: int = 2) -> ValidationReport:
    """Shortness, rank bound, composite consistency and monotone stage distances."""
    out = []
    for i, c in enumerate(s.stages):
        rep = validate_complex(c)
        out.extend(f"stage {i}: {v}" for v in rep.violations)
        if c.dim > s.rank:
            out.append(f"stage {i}: dimension {c.dim} exceeds rank {s.rank}")
    if out:
        return ValidationReport(tuple(out))
    for i, b in enumerate(s.bondings):
        cert = shortness_certificate(b)
        if not cert.short:
            out.append(f"bonding {i + 1}->{i} not short: max stretch {cert.max_stretch:.12g}")
    if out:
        return ValidationReport(tuple(out))
    rng = np.random.default_rng([seed, 31])
    deep = [s.deepest.vertex_point(v) for v in range(s.deepest.n_vertices)]
    deep += _sample_points(s.deepest, samples, rng)
    threads = s.threads(deep)
    M = s.truncation
    for j in range(2, M + 1):
        for i in range(j - 1):
            try:
                phi = s.composite(j, i)
            except Exception as exc:
                out.append(f"composite {j}->{i} undefined: {exc}")
                continue
            pts = [t.stage(j) for t in threads]
            for t, img in zip(threads, evaluate_many(phi, pts)):
                if not _same_point(s.stages[i], t.stage(i), img, 1e-9):
                    out.append(f"composite {j}->{i} disagrees with the bonding chain at {t.deep_point}")
                    break
    prev = None
    for i in range(M + 1):
        d = _stage_distance_matrix(s, threads, i, level)
        if prev is not None:
            fin = np.isfinite(prev)
            bad = fin & (d < prev - MONOTONE_RTOL * np.maximum(1.0, prev))
            if bad.any():
                a, b = np.argwhere(bad)[0]
                out.append(f"stage distance decreases from stage {i - 1} to {i} for sample pair ({a}, {b})")
        prev = d
    return ValidationReport(tuple(out))


@dataclass(frozen=True)
class LimitDistance(DistanceEstimate):
    stage: int = 0
    evidence: tuple = ()
    monotone: bool = True


def limit_distance(s: InverseSystem, t: Thread, u: Thread, k: int) -> LimitDistance:
    """Deepest-stage distance with the per-stage sequence attached as evidence."""
    seq = []
    for i in range(s.truncation + 1):
        if t.stage(i) == u.stage(i):
            seq.append(0.0)
        else:
            seq.append(float(geodesic_graph(s.stages[i], k).point_distances([t.stage(i)], [u.stage(i)])[0, 0]))
    mono = all(b >= a - MONOTONE_RTOL * max(1.0, a) for a, b in zip(seq, seq[1:]))
    return LimitDistance(seq[-1], k, True, s.truncation, tuple(seq), mono)


def _pairwise_limit(s: InverseSystem, threads, k: int) -> np.ndarray:
    return _stage_distance_matrix(s, threads, s.truncation, k)


def separated_pairs(s: InverseSystem, i: int, samples: int, seed, k: int = 2) -> list[tuple[Thread, Thread]]:
    """Thread pairs at limit distance >= 2**-i among deepest-stage vertices plus seeded samples."""
    rng = np.random.default_rng([int(seed), 17, int(i)])
    c = s.deepest
    deep = [c.vertex_point(v) for v in range(c.n_vertices)] + _sample_points(c, samples, rng)
    threads = s.threads(deep)
    d = _pairwise_limit(s, threads, k)
    thr = 2.0**-i
    return [(threads[a], threads[b]) for a, b in itertools.combinations(range(len(threads)), 2) if d[a, b] >= thr]


def separation_stage(s: InverseSystem, pairs, min_stage: int) -> int:
    """Smallest stage > min_stage where every pair projects to distinct points."""
    if not pairs:
        raise ValueError("separation_stage needs at least one pair")
    for j in range(max(min_stage + 1, 0), s.truncation + 1):
        g = geodesic_graph(s.stages[j], 0)
        d = np.array([
            0.0 if a.stage(j) == b.stage(j) else g.point_distances([a.stage(j)], [b.stage(j)])[0, 0]
            for a, b in pairs
        ])
        if (d > SEPARATION_TOL).all():
            return j
    raise SeparationExhausted(
        f"no stage in {min_stage + 1}..{s.truncation} separates all {len(pairs)} pairs; "
        "the truncation is too shallow to certify separation"
    )


def delta(s: InverseSystem, h: PLMap, pairs, stage: int | None = None) -> float:
    """Minimum image separation of the projected pairs under ambient map ``h`` on P_stage."""
    if stage is None:
        stage = next(i for i, c in enumerate(s.stages) if c is h.domain)
    if not pairs:
        return math.inf
    xs = evaluate_many(h, [a.stage(stage) for a, _ in pairs])
    ys = evaluate_many(h, [b.stage(stage) for _, b in pairs])
    d = np.linalg.norm(np.asarray(xs) - np.asarray(ys), axis=1)
    j = int(np.argmin(d))
    if not d[j] > 0:
        a, b = pairs[j]
        raise DeltaError(f"stage-{stage} map identifies the projected pair {a.to_json()} / {b.to_json()}",
                         witness=(a, b))
    return float(d[j])


def next_epsilon(delta_i: float, eps_prev: float) -> float:
    if not delta_i > 0 or not eps_prev > 0:
        raise ValueError("delta and previous epsilon must be positive")
    return EPS_FACTOR * min(delta_i, eps_prev)


# ---------------------------------------------------------------------------
# driver


@dataclass
class LimitRun:
    maps: list
    composites: list
    schedule: Schedule
    report: dict
    results: list = field(default_factory=list, repr=False)

    @property
    def ok(self) -> bool:
        return bool(self.report.get("ok"))


def _check(name, ok, **vals):
    return {"check": name, "ok": bool(ok), **vals}


def run_limit_embedding(
    s: InverseSystem,
    f0: PLMap,
    eps0: float,
    cfg: StretchConfig,
    samples: int = 8,
    level: int = 3,
    metric_gap: float | None = None,
) -> LimitRun:
    """Embed every stage and certify the budget schedule on the deepest stage.

    ``f_0`` is the stage-0 embedding of the short map ``f0`` within ``eps0``;
    every later ``f_t`` embeds ``f_{t-1}`` pulled back along the bonding.
    """
    if f0.domain is not s.stages[0]:
        raise InverseSystemError("initial map is not defined on stage 0")
    if not f0.is_ambient or f0.ambient_dim < 2 * s.rank + 1:
        raise InverseSystemError(f"initial map must be ambient-valued in dimension >= {2 * s.rank + 1}")
    if not eps0 > 0:
        raise ValueError("eps0 must be positive")
    M = s.truncation
    seed = cfg.seed
    sched = Schedule([float(eps0)], binding_deltas=[None])
    maps, results = [], []
    stages = []
    pending: list[int] = []
    last_sep = -1

    def build(t: int, start: PLMap, eps: float):
        res = embed_polyhedron(s.stages[t], start, cfg.with_epsilon(eps))
        results.append(res)
        if not res.success:
            raise StageFailure(t, res.message or "embedding failed", res)
        maps.append(res.map)
        stages.append({
            "stage": t,
            "epsilon": eps,
            "level": res.map.level,
            "defect": res.report.to_dict(),
            "start_displacement": sup_displacement(res.map, start),
        })

    build(0, f0, eps0)
    for t in range(M + 1):
        if t < M:
            i = t
            pairs = separated_pairs(s, i, samples, seed, k=level)
            sched.o_sets[i] = pairs
            if pairs:
                ip = separation_stage(s, pairs, last_sep)
                last_sep = ip
                sched.sep_stages[i] = ip
                sched.deferred[i] = ip > t
                pending.append(i)
        fresh = []
        for i in [p for p in pending if sched.sep_stages[p] <= t]:
            ip = sched.sep_stages[i]
            sched.deltas[i] = delta(s, maps[ip], sched.o_sets[i], ip)
            fresh.append(sched.deltas[i])
            pending.remove(i)
        if t == M:
            break
        eps_prev = sched.epsilons[-1]
        bind = min(fresh) if fresh else None
        eps = next_epsilon(bind if bind is not None else eps_prev, eps_prev)
        sched.epsilons.append(eps)
        sched.binding_deltas.append(bind)
        log.info("stage %d: epsilon %.6g (binding delta %s)", t + 1, eps, bind)
        start = compose(maps[t], s.bondings[t], max_extra_levels=maps[t].level + 2)
        build(t + 1, start, eps)
    if pending:
        raise SeparationExhausted(f"separation stages {[sched.sep_stages[p] for p in pending]} beyond truncation {M}")

    # composites h_t = f_t o psi_t, as maps on the deepest stage
    hs = [compose(maps[t], s.composite(M, t), max_extra_levels=maps[t].level + 4) for t in range(M + 1)]

    checks = []
    eps = sched.epsilons
    for j in range(1, M + 1):
        bd = sched.binding_deltas[j]
        bound = 0.25 * min(eps[j - 1], bd if bd is not None else math.inf)
        checks.append(_check("schedule_law", eps[j] < bound, index=j, epsilon=eps[j], bound=bound))
    for t in range(M):
        step = sup_displacement(hs[t + 1], hs[t])
        stages[t + 1]["step_displacement"] = step
        checks.append(_check("step_bound", step < eps[t + 1], index=t + 1, displacement=step, epsilon=eps[t + 1]))
        tail = sched.tail(t)
        checks.append(_check("summability", tail <= 4.0 / 3.0 * eps[t + 1] * (1 + 1e-12),
                             index=t, tail=tail, bound=4.0 / 3.0 * eps[t + 1]))
    for i, pairs in sorted(sched.o_sets.items()):
        if not pairs:
            continue
        ip = sched.sep_stages[i]
        dl = sched.deltas[i]
        xs = evaluate_many(hs[M], [a.deep_point for a, _ in pairs])
        ys = evaluate_many(hs[M], [b.deep_point for _, b in pairs])
        sep = float(np.min(np.linalg.norm(np.asarray(xs) - np.asarray(ys), axis=1)))
        lower = dl - 2 * sched.tail(ip)
        checks.append(_check("persistence", sep >= lower and lower >= dl / 3, index=i, sep_stage=ip,
                             delta=dl, lower_bound=lower, final_separation=sep, pairs=len(pairs)))

    gap = 2.0**-M if metric_gap is None else float(metric_gap)
    rng = np.random.default_rng([seed, 23])
    cM = s.deepest
    deep = [cM.vertex_point(v) for v in range(cM.n_vertices)] + _sample_points(cM, samples, rng)
    d_lim = _pairwise_limit(s, s.threads(deep), level)
    d_ind = induced_graph(maps[M], level).point_distances(deep)
    iu = np.triu_indices(len(deep), 1)
    fin = np.isfinite(d_lim[iu])
    fid = float(np.max(np.abs(d_lim[iu][fin] - d_ind[iu][fin]), initial=0.0))
    checks.append(_check("fidelity", fid <= cfg.eta + gap, defect=fid, eta=cfg.eta, metric_gap=gap,
                         pairs=int(fin.sum()), level=level))

    report = {
        "truncation": M,
        "rank": s.rank,
        "stages": stages,
        "schedule": sched.to_dict(),
        "checks": checks,
        "ok": all(c["ok"] for c in checks),
    }
    return LimitRun(maps, hs, sched, report, results)


__all__ = [
    "InverseSystem",
    "Thread",
    "Schedule",
    "LimitDistance",
    "LimitRun",
    "SeparationExhausted",
    "DeltaError",
    "StageFailure",
    "validate_system",
    "limit_distance",
    "separated_pairs",
    "separation_stage",
    "delta",
    "next_epsilon",
    "run_limit_embedding",
]
