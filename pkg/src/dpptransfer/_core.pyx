# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops. Semantics mirror ``_fallback`` exactly."""
import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs

cnp.import_array()


def jacobi_eigh(double[:, ::1] A_in, double tol=1e-12, int max_sweeps=100):
    """Cyclic (row-by-row) Jacobi on a symmetric matrix.

    Returns ``(eigenvalues, eigenvectors, sweeps, off_norm)``; unsorted.
    """
    cdef Py_ssize_t n = A_in.shape[0]
    cdef cnp.ndarray[cnp.float64_t, ndim=2] A_arr = np.array(A_in, dtype=np.float64, copy=True)
    cdef cnp.ndarray[cnp.float64_t, ndim=2] V_arr = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] A = A_arr
    cdef double[:, ::1] V = V_arr
    cdef Py_ssize_t p, q, k
    cdef int sweep = 0
    cdef double off, apq, theta, t, c, s, akp, akq, fro = 0.0
    for p in range(n):
        for q in range(n):
            fro += A[p, q] * A[p, q]
    cdef double thresh = tol * (1.0 if fro < 1.0 else sqrt(fro))
    with nogil:
        while True:
            off = 0.0
            for p in range(n):
                for q in range(p + 1, n):
                    off += 2.0 * A[p, q] * A[p, q]
            off = sqrt(off)
            if off < thresh or sweep >= max_sweeps:
                break
            sweep += 1
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = A[p, q]
                    if fabs(apq) < 1e-300:
                        continue
                    theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                    if theta >= 0:
                        t = 1.0 / (theta + sqrt(1.0 + theta * theta))
                    else:
                        t = -1.0 / (-theta + sqrt(1.0 + theta * theta))
                    c = 1.0 / sqrt(1.0 + t * t)
                    s = t * c
                    for k in range(n):
                        akp = A[k, p]
                        akq = A[k, q]
                        A[k, p] = c * akp - s * akq
                        A[k, q] = s * akp + c * akq
                    for k in range(n):
                        akp = A[p, k]
                        akq = A[q, k]
                        A[p, k] = c * akp - s * akq
                        A[q, k] = s * akp + c * akq
                    A[p, q] = 0.0
                    A[q, p] = 0.0
                    for k in range(n):
                        akp = V[k, p]
                        akq = V[k, q]
                        V[k, p] = c * akp - s * akq
                        V[k, q] = s * akp + c * akq
    return np.diag(A_arr).copy(), V_arr, sweep, off


def sample_batch(double[:, ::1] V, double[::1] lam, double[:, ::1] u_sel, double[:, ::1] u_site):
    """Spectral two-phase sampler, one configuration per row of ``u_sel``.

    Phase one keeps eigenvector ``k`` when ``u_sel[d, k] < lam[k]``; phase
    two picks sites sequentially by inverse CDF on ``u_site[d, t]`` with
    Gram-Schmidt downdating (two passes) of the site weights.
    Returns ``(sites, sizes)`` with ``sites`` padded by -1.
    """
    cdef Py_ssize_t n = V.shape[0], r = V.shape[1], S = u_sel.shape[0]
    cdef cnp.ndarray[cnp.int32_t, ndim=2] sites_arr = np.full((S, r), -1, dtype=np.int32)
    cdef cnp.ndarray[cnp.int32_t, ndim=1] sizes_arr = np.zeros(S, dtype=np.int32)
    cdef int[:, ::1] sites = sites_arr
    cdef int[::1] sizes = sizes_arr
    cdef double[::1] p = np.zeros(n)
    cdef double[:, ::1] W = np.zeros((r, r))
    cdef double[::1] v = np.zeros(r)
    cdef long[::1] sel = np.zeros(r, dtype=np.int64)
    cdef Py_ssize_t d, k, m, t, s, j, i, chosen, last_pos, a, b, tmp
    cdef double total, target, acc, dot, nrm, proj, x
    cdef int pass_
    with nogil:
        for d in range(S):
            m = 0
            for k in range(r):
                if u_sel[d, k] < lam[k]:
                    sel[m] = k
                    m += 1
            for s in range(n):
                acc = 0.0
                for j in range(m):
                    x = V[s, sel[j]]
                    acc = acc + x * x
                p[s] = acc
            for t in range(m):
                total = 0.0
                for s in range(n):
                    total = total + p[s]
                target = u_site[d, t] * total
                acc = 0.0
                chosen = -1
                last_pos = -1
                for s in range(n):
                    if p[s] > 0:
                        last_pos = s
                        acc = acc + p[s]
                        if acc > target:
                            chosen = s
                            break
                if chosen < 0:
                    chosen = last_pos
                if chosen < 0:
                    break
                sites[d, t] = <int>chosen
                for j in range(m):
                    v[j] = V[chosen, sel[j]]
                for pass_ in range(2):
                    for i in range(t):
                        dot = 0.0
                        for j in range(m):
                            dot = dot + v[j] * W[i, j]
                        for j in range(m):
                            v[j] = v[j] - dot * W[i, j]
                nrm = 0.0
                for j in range(m):
                    nrm = nrm + v[j] * v[j]
                nrm = sqrt(nrm)
                if nrm <= 0:
                    break
                for j in range(m):
                    W[t, j] = v[j] / nrm
                for s in range(n):
                    proj = 0.0
                    for j in range(m):
                        proj = proj + V[s, sel[j]] * W[t, j]
                    x = p[s] - proj * proj
                    p[s] = x if x > 0 else 0.0
                p[chosen] = 0.0
                sizes[d] = <int>(t + 1)
            # insertion sort of the chosen sites
            for a in range(1, sizes[d]):
                tmp = sites[d, a]
                b = a - 1
                while b >= 0 and sites[d, b] > tmp:
                    sites[d, b + 1] = sites[d, b]
                    b -= 1
                sites[d, b + 1] = <int>tmp
    return sites_arr, sizes_arr


cdef double _lu_det(double* M, Py_ssize_t k) nogil:
    cdef Py_ssize_t i, j, col, piv
    cdef double det = 1.0, best, f, tmp
    for col in range(k):
        piv = col
        best = fabs(M[col * k + col])
        for i in range(col + 1, k):
            if fabs(M[i * k + col]) > best:
                best = fabs(M[i * k + col])
                piv = i
        if best == 0.0:
            return 0.0
        if piv != col:
            for j in range(k):
                tmp = M[col * k + j]
                M[col * k + j] = M[piv * k + j]
                M[piv * k + j] = tmp
            det = -det
        det *= M[col * k + col]
        for i in range(col + 1, k):
            f = M[i * k + col] / M[col * k + col]
            for j in range(col + 1, k):
                M[i * k + j] -= f * M[col * k + j]
    return det


def subset_determinants(double[:, ::1] L):
    """``det(L[Y, Y])`` for every subset ``Y``; subset ``Y`` is bitmask index."""
    cdef Py_ssize_t n = L.shape[0]
    if n > 24:
        raise ValueError("too many sites for exhaustive enumeration")
    cdef Py_ssize_t total = 1 << n
    cdef cnp.ndarray[cnp.float64_t, ndim=1] out_arr = np.empty(total, dtype=np.float64)
    cdef double[::1] out = out_arr
    cdef double[::1] buf = np.empty(n * n)
    cdef long[::1] idx = np.empty(n, dtype=np.int64)
    cdef Py_ssize_t mask, k, i, j
    with nogil:
        for mask in range(total):
            k = 0
            for i in range(n):
                if (mask >> i) & 1:
                    idx[k] = i
                    k += 1
            for i in range(k):
                for j in range(k):
                    buf[i * k + j] = L[idx[i], idx[j]]
            out[mask] = _lu_det(&buf[0], k) if k > 0 else 1.0
    return out_arr
