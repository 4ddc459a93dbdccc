"""Pure numpy implementations of the geometric kernels.

Semantics match ``_ckernels.pyx`` exactly; see :mod:`polyiso.kernels`.
"""
import itertools

import numpy as np

CLIP_TOL = 1e-12
MIN_PIECE = 1e-14
_CHUNK = 256


def _clip_intervals(binv, vel, a, b):
    d = b - a
    mu0 = np.einsum("cij,ej->eci", binv, a)
    dmu = np.einsum("cij,ej->eci", binv, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        bound = (-CLIP_TOL - mu0) / dmu
    flat = np.abs(dmu) <= 1e-300
    lo = np.where(dmu > 0, bound, -np.inf).max(axis=2)
    hi = np.where(dmu < 0, bound, np.inf).min(axis=2)
    lo = np.maximum(lo, 0.0)
    hi = np.minimum(hi, 1.0)
    blocked = (flat & (mu0 < -CLIP_TOL)).any(axis=2)
    valid = (hi - lo > MIN_PIECE) & ~blocked
    speed = np.linalg.norm(np.einsum("cnj,ej->ecn", vel, d), axis=2)
    return lo, hi, speed, valid


def chord_image_lengths(binv, vel, a, b):
    """Exact image length of straight chords under a piecewise-affine map.

    binv : (C, m, m) inverse cell-barycentric matrices
    vel : (C, N, m) per-cell linear maps from barycentric weights to images
    a, b : (E, m) chord endpoints as barycentric weights of the host simplex

    The chord parameter range covered by each cell is an interval; the union
    of intervals is cut at every endpoint and each elementary piece is charged
    once, at the speed of the lowest-index cell covering it.
    """
    binv = np.ascontiguousarray(binv, dtype=float)
    vel = np.ascontiguousarray(vel, dtype=float)
    a = np.ascontiguousarray(a, dtype=float)
    b = np.ascontiguousarray(b, dtype=float)
    out = np.zeros(len(a))
    for s in range(0, len(a), _CHUNK):
        lo, hi, speed, valid = _clip_intervals(binv, vel, a[s:s + _CHUNK], b[s:s + _CHUNK])
        k = int(valid.sum(axis=1).max(initial=0))
        if k == 0:
            continue
        # compress valid cells to the front, keeping index order
        order = np.argsort(~valid, axis=1, kind="stable")[:, :k]
        lo = np.take_along_axis(lo, order, 1)
        hi = np.take_along_axis(hi, order, 1)
        speed = np.take_along_axis(speed, order, 1)
        ok = np.take_along_axis(valid, order, 1)
        bp = np.sort(np.concatenate([np.where(ok, lo, 1.0), np.where(ok, hi, 1.0)], axis=1), axis=1)
        seg = np.diff(bp, axis=1)
        mid = 0.5 * (bp[:, 1:] + bp[:, :-1])
        cover = (lo[:, None, :] <= mid[:, :, None]) & (mid[:, :, None] <= hi[:, None, :]) & ok[:, None, :]
        first = np.argmax(cover, axis=2)
        sp = np.take_along_axis(speed, first, 1)
        out[s:s + _CHUNK] = np.where(cover.any(axis=2), seg * sp, 0.0).sum(axis=1)
    return out


def _subsets(n):
    for r in range(1, n + 1):
        yield from itertools.combinations(range(n), r)


def simplex_distances(P, Q):
    """Exact Euclidean distance between simplex pairs ``conv(P[k])``, ``conv(Q[k])``.

    P : (K, p, N), Q : (K, q, N).  Enumerates face pairs and solves each
    unconstrained least-squares problem on the affine hulls; the minimum over
    feasible candidates is the convex distance.
    """
    P = np.asarray(P, dtype=float)
    Q = np.asarray(Q, dtype=float)
    K = P.shape[0]
    best = np.full(K, np.inf)
    if K == 0:
        return best
    for S in _subsets(P.shape[1]):
        for T in _subsets(Q.shape[1]):
            r0 = P[:, S[0]] - Q[:, T[0]]
            cols = [P[:, i] - P[:, S[0]] for i in S[1:]] + [Q[:, T[0]] - Q[:, j] for j in T[1:]]
            if not cols:
                best = np.minimum(best, np.linalg.norm(r0, axis=1))
                continue
            J = np.stack(cols, axis=2)
            JtJ = np.einsum("kni,knj->kij", J, J)
            rhs = -np.einsum("kni,kn->ki", J, r0)
            m = JtJ.shape[1]
            # degenerate face pairs are skipped; their minima show up on a smaller face
            scale = np.trace(JtJ, axis1=1, axis2=2)
            singular = np.linalg.eigvalsh(JtJ)[:, 0] <= 1e-13 * scale / m
            safe = np.where(singular[:, None, None], np.eye(m), JtJ)
            u = np.linalg.solve(safe, rhs[..., None])[..., 0]
            ns = len(S) - 1
            ua, ub = u[:, :ns], u[:, ns:]
            feas = (
                ~singular
                & (u >= -CLIP_TOL).all(axis=1)
                & (ua.sum(axis=1) <= 1 + CLIP_TOL)
                & (ub.sum(axis=1) <= 1 + CLIP_TOL)
            )
            dist = np.linalg.norm(r0 + np.einsum("kni,ki->kn", J, u), axis=1)
            best = np.where(feas, np.minimum(best, dist), best)
    return best
