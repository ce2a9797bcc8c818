"""Pure numpy versions of the compiled kernels in ``_core.pyx``.

Same inputs, same outputs; the sampler is vectorized over draws instead of
looping one configuration at a time.
"""
import numpy as np


def jacobi_eigh(A, tol=1e-12, max_sweeps=100):
    A = np.array(A, dtype=float, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    fro = float(np.sum(A * A))
    thresh = tol * max(1.0, np.sqrt(fro))
    sweep = 0
    iu = np.triu_indices(n, 1)
    while True:
        off = float(np.sqrt(2.0 * np.sum(A[iu] ** 2)))
        if off < thresh or sweep >= max_sweeps:
            break
        sweep += 1
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < 1e-300:
                    continue
                theta = (A[q, q] - A[p, p]) / (2.0 * apq)
                if theta >= 0:
                    t = 1.0 / (theta + np.sqrt(1.0 + theta * theta))
                else:
                    t = -1.0 / (-theta + np.sqrt(1.0 + theta * theta))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                colp = A[:, p].copy()
                colq = A[:, q]
                A[:, p] = c * colp - s * colq
                A[:, q] = s * colp + c * colq
                rowp = A[p, :].copy()
                rowq = A[q, :]
                A[p, :] = c * rowp - s * rowq
                A[q, :] = s * rowp + c * rowq
                A[p, q] = 0.0
                A[q, p] = 0.0
                vp = V[:, p].copy()
                vq = V[:, q]
                V[:, p] = c * vp - s * vq
                V[:, q] = s * vp + c * vq
    return np.diag(A).copy(), V, sweep, off


def sample_batch(V, lam, u_sel, u_site):
    V = np.asarray(V, dtype=float)
    n, r = V.shape
    S = u_sel.shape[0]
    sites = np.full((S, r), -1, dtype=np.int32)
    sizes = np.zeros(S, dtype=np.int32)
    if S == 0 or r == 0:
        return sites, sizes
    mask = u_sel < lam[None, :]
    k = mask.sum(axis=1)
    Vm = V[None, :, :] * mask[:, None, :]
    p = np.einsum("snr,snr->sn", Vm, Vm)
    W = np.zeros((S, r, r))
    rows = np.arange(S)
    for t in range(int(k.max(initial=0))):
        active = t < k
        if not active.any():
            break
        a_rows = rows[active]
        pa = p[a_rows]
        cum = np.cumsum(pa, axis=1)
        target = u_site[a_rows, t] * cum[:, -1]
        chosen = np.argmax(cum > target[:, None], axis=1)
        hit = (cum > target[:, None]).any(axis=1)
        if not hit.all():
            # roundoff: fall back to the last site with positive weight
            pos = pa > 0
            last = n - 1 - np.argmax(pos[:, ::-1], axis=1)
            chosen = np.where(hit, chosen, last)
        sites[a_rows, t] = chosen
        v = Vm[a_rows, chosen, :]
        Wa = W[a_rows, :t, :]
        for _ in range(2):
            v = v - np.einsum("st,str->sr", np.einsum("sr,str->st", v, Wa), Wa)
        nrm = np.sqrt(np.einsum("sr,sr->s", v, v))
        w = v / np.where(nrm > 0, nrm, 1.0)[:, None]
        W[a_rows, t, :] = w
        proj = np.einsum("snr,sr->sn", Vm[a_rows], w)
        pa = pa - proj * proj
        pa[np.arange(len(a_rows)), chosen] = 0.0
        p[a_rows] = np.maximum(pa, 0.0)
        sizes[a_rows] = t + 1
    big = np.iinfo(np.int32).max
    sites = np.sort(np.where(sites < 0, big, sites), axis=1)
    sites[sites == big] = -1
    return sites, sizes


def subset_determinants(L):
    L = np.asarray(L, dtype=float)
    n = L.shape[0]
    total = 1 << n
    out = np.empty(total)
    out[0] = 1.0
    masks = np.arange(total)
    bits = (masks[:, None] >> np.arange(n)) & 1
    sizes = bits.sum(axis=1)
    for k in range(1, n + 1):
        sel = masks[sizes == k]
        idx = np.nonzero(bits[sel])[1].reshape(len(sel), k)
        out[sel] = np.linalg.det(L[idx[:, :, None], idx[:, None, :]])
    return out
