# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled geometric kernels; same contracts as ``_pykernels``."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, INFINITY
from libc.stdlib cimport malloc, free

cnp.import_array()

cdef double CLIP_TOL = 1e-12
cdef double MIN_PIECE = 1e-14


def chord_image_lengths(binv, vel, a, b):
    cdef double[:, :, ::1] B = np.ascontiguousarray(binv, dtype=np.float64)
    cdef double[:, :, ::1] V = np.ascontiguousarray(vel, dtype=np.float64)
    cdef double[:, ::1] A = np.ascontiguousarray(a, dtype=np.float64)
    cdef double[:, ::1] Bp = np.ascontiguousarray(b, dtype=np.float64)
    cdef Py_ssize_t E = A.shape[0], C = B.shape[0], m = B.shape[1], N = V.shape[1]
    out = np.zeros(E)
    cdef double[::1] res = out
    cdef double *lo = <double *> malloc(max(C, 1) * sizeof(double))
    cdef double *hi = <double *> malloc(max(C, 1) * sizeof(double))
    cdef double *sp = <double *> malloc(max(C, 1) * sizeof(double))
    cdef double *d = <double *> malloc(m * sizeof(double))
    cdef double *bp = <double *> malloc(max(2 * C, 1) * sizeof(double))
    cdef Py_ssize_t e, c, i, j, n, k, kk, nv
    cdef double mu0, dmu, t, l, h, s, acc, total, mid
    cdef int blocked
    try:
        for e in range(E):
            for j in range(m):
                d[j] = Bp[e, j] - A[e, j]
            nv = 0
            for c in range(C):
                l = 0.0
                h = 1.0
                blocked = 0
                for i in range(m):
                    mu0 = 0.0
                    dmu = 0.0
                    for j in range(m):
                        mu0 += B[c, i, j] * A[e, j]
                        dmu += B[c, i, j] * d[j]
                    if dmu > 1e-300:
                        t = (-CLIP_TOL - mu0) / dmu
                        if t > l:
                            l = t
                    elif dmu < -1e-300:
                        t = (-CLIP_TOL - mu0) / dmu
                        if t < h:
                            h = t
                    elif mu0 < -CLIP_TOL:
                        blocked = 1
                        break
                if blocked or h - l <= MIN_PIECE:
                    continue
                s = 0.0
                for n in range(N):
                    acc = 0.0
                    for j in range(m):
                        acc += V[c, n, j] * d[j]
                    s += acc * acc
                lo[nv] = l
                hi[nv] = h
                sp[nv] = sqrt(s)
                nv += 1
            # sorted endpoints; each elementary piece charged once
            for k in range(nv):
                bp[2 * k] = lo[k]
                bp[2 * k + 1] = hi[k]
            for k in range(1, 2 * nv):
                t = bp[k]
                kk = k - 1
                while kk >= 0 and bp[kk] > t:
                    bp[kk + 1] = bp[kk]
                    kk -= 1
                bp[kk + 1] = t
            total = 0.0
            for k in range(2 * nv - 1):
                mid = 0.5 * (bp[k] + bp[k + 1])
                for kk in range(nv):
                    if lo[kk] <= mid and mid <= hi[kk]:
                        total += (bp[k + 1] - bp[k]) * sp[kk]
                        break
            res[e] = total
    finally:
        free(lo)
        free(hi)
        free(sp)
        free(d)
        free(bp)
    return out


cdef int _solve(double *M, double *r, int m) nogil:
    """Gaussian elimination with partial pivoting, in place; 0 if singular."""
    cdef int i, j, k, piv
    cdef double mx, tmp, f, scale = 0.0
    for i in range(m):
        scale += fabs(M[i * m + i])
    if scale == 0.0:
        return 0
    for k in range(m):
        piv = k
        mx = fabs(M[k * m + k])
        for i in range(k + 1, m):
            if fabs(M[i * m + k]) > mx:
                mx = fabs(M[i * m + k])
                piv = i
        if mx <= 1e-13 * scale / m:
            return 0
        if piv != k:
            for j in range(m):
                tmp = M[k * m + j]
                M[k * m + j] = M[piv * m + j]
                M[piv * m + j] = tmp
            tmp = r[k]
            r[k] = r[piv]
            r[piv] = tmp
        for i in range(k + 1, m):
            f = M[i * m + k] / M[k * m + k]
            for j in range(k, m):
                M[i * m + j] -= f * M[k * m + j]
            r[i] -= f * r[k]
    for k in range(m - 1, -1, -1):
        tmp = r[k]
        for j in range(k + 1, m):
            tmp -= M[k * m + j] * r[j]
        r[k] = tmp / M[k * m + k]
    return 1


def simplex_distances(P, Q):
    cdef double[:, :, ::1] Pv = np.ascontiguousarray(P, dtype=np.float64)
    cdef double[:, :, ::1] Qv = np.ascontiguousarray(Q, dtype=np.float64)
    cdef Py_ssize_t K = Pv.shape[0], p = Pv.shape[1], q = Qv.shape[1], N = Pv.shape[2]
    out = np.full(K, np.inf)
    cdef double[::1] res = out
    cdef int mmax = p + q - 2
    cdef double *J = <double *> malloc(max(N * mmax, 1) * sizeof(double))
    cdef double *M = <double *> malloc(max(mmax * mmax, 1) * sizeof(double))
    cdef double *r = <double *> malloc(max(mmax, 1) * sizeof(double))
    cdef double *r0 = <double *> malloc(N * sizeof(double))
    cdef int Smask, Tmask, s0, t0, m, ns, nt, i, j, n
    cdef int sidx[32]
    cdef int tidx[32]
    cdef Py_ssize_t k
    cdef double best, acc, sa, sb, dist
    cdef int feas
    try:
        for k in range(K):
            best = INFINITY
            for Smask in range(1, 1 << p):
                ns = 0
                for i in range(p):
                    if Smask & (1 << i):
                        sidx[ns] = i
                        ns += 1
                for Tmask in range(1, 1 << q):
                    nt = 0
                    for i in range(q):
                        if Tmask & (1 << i):
                            tidx[nt] = i
                            nt += 1
                    s0 = sidx[0]
                    t0 = tidx[0]
                    m = ns - 1 + nt - 1
                    for n in range(N):
                        r0[n] = Pv[k, s0, n] - Qv[k, t0, n]
                        for i in range(1, ns):
                            J[n * mmax + i - 1] = Pv[k, sidx[i], n] - Pv[k, s0, n]
                        for i in range(1, nt):
                            J[n * mmax + ns - 1 + i - 1] = Qv[k, t0, n] - Qv[k, tidx[i], n]
                    if m > 0:
                        for i in range(m):
                            acc = 0.0
                            for n in range(N):
                                acc += J[n * mmax + i] * r0[n]
                            r[i] = -acc
                            for j in range(m):
                                acc = 0.0
                                for n in range(N):
                                    acc += J[n * mmax + i] * J[n * mmax + j]
                                M[i * m + j] = acc
                        if not _solve(M, r, m):
                            continue
                        feas = 1
                        sa = 0.0
                        sb = 0.0
                        for i in range(m):
                            if r[i] < -CLIP_TOL:
                                feas = 0
                            if i < ns - 1:
                                sa += r[i]
                            else:
                                sb += r[i]
                        if not feas or sa > 1 + CLIP_TOL or sb > 1 + CLIP_TOL:
                            continue
                    dist = 0.0
                    for n in range(N):
                        acc = r0[n]
                        for i in range(m):
                            acc += J[n * mmax + i] * r[i]
                        dist += acc * acc
                    dist = sqrt(dist)
                    if dist < best:
                        best = dist
            res[k] = best
    finally:
        free(J)
        free(M)
        free(r)
        free(r0)
    return out
