"""Pure NumPy implementations of the hot kernels.

Every function here has a twin with the same signature in ``_core.pyx``.
Results agree with the compiled versions to rounding; within one backend
they are bit-reproducible.
"""
from __future__ import annotations

import numpy as np

BACKEND = "python"

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = 0x9E3779B9
_W1 = 0xBB67AE85
_MASK = np.uint64(0xFFFFFFFF)
_S32 = np.uint64(32)
_TWO_PI = 2.0 * np.pi


def philox4x32(counters, key):
    """Philox4x32-10 block function applied row-wise to ``counters`` (K, 4)."""
    ctr = np.asarray(counters, dtype=np.uint64) & _MASK
    c0, c1, c2, c3 = (ctr[:, i].copy() for i in range(4))
    k0 = int(key[0]) & 0xFFFFFFFF
    k1 = int(key[1]) & 0xFFFFFFFF
    for _ in range(10):
        p0 = _M0 * c0
        p1 = _M1 * c2
        hi0, lo0 = p0 >> _S32, p0 & _MASK
        hi1, lo1 = p1 >> _S32, p1 & _MASK
        c0, c1, c2, c3 = hi1 ^ c1 ^ np.uint64(k0), lo1, hi0 ^ c3 ^ np.uint64(k1), lo0
        k0 = (k0 + _W0) & 0xFFFFFFFF
        k1 = (k1 + _W1) & 0xFFFFFFFF
    return np.stack([c0, c1, c2, c3], axis=1).astype(np.uint32)


def _blocks(seed, streams, step, nblocks, domain):
    streams = np.asarray(streams, dtype=np.uint64)
    n = streams.shape[0]
    ctr = np.empty((n * nblocks, 4), dtype=np.uint64)
    blk = np.tile(np.arange(nblocks, dtype=np.uint64), n)
    st = np.repeat(streams, nblocks)
    ctr[:, 0] = np.uint64(int(step) & 0xFFFFFFFF)
    ctr[:, 1] = (np.uint64(int(domain) & 0xFF) << np.uint64(24)) | (blk & np.uint64(0xFFFFFF))
    ctr[:, 2] = st & _MASK
    ctr[:, 3] = st >> _S32
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    out = philox4x32(ctr, (seed & 0xFFFFFFFF, seed >> 32)).astype(np.uint64)
    # two 53-bit uniforms in (0, 1) per block
    w0 = (out[:, 0] << _S32) | out[:, 1]
    w1 = (out[:, 2] << _S32) | out[:, 3]
    u0 = ((w0 >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    u1 = ((w1 >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return u0.reshape(n, nblocks), u1.reshape(n, nblocks)


def uniforms(seed, streams, step, count, domain):
    """``count`` uniforms in (0, 1) per stream, shape (len(streams), count)."""
    nblocks = (count + 1) // 2
    u0, u1 = _blocks(seed, streams, step, nblocks, domain)
    out = np.empty((u0.shape[0], 2 * nblocks))
    out[:, 0::2] = u0
    out[:, 1::2] = u1
    return out[:, :count]


def normals(seed, streams, step, count, domain):
    """``count`` standard normals per stream via Box-Muller, shape (len(streams), count)."""
    nblocks = (count + 1) // 2
    u0, u1 = _blocks(seed, streams, step, nblocks, domain)
    rad = np.sqrt(-2.0 * np.log(u0))
    theta = _TWO_PI * u1
    out = np.empty((u0.shape[0], 2 * nblocks))
    out[:, 0::2] = rad * np.cos(theta)
    out[:, 1::2] = rad * np.sin(theta)
    return out[:, :count]


def _bump_terms(q, xs, n):
    u = n * (q - xs)
    u2 = u * u
    out = np.zeros_like(u2)
    inside = u2 < 1.0
    out[inside] = np.exp(-1.0 / (1.0 - u2[inside]))
    return out


def _fold(terms):
    # sequential left fold; np.sum would use pairwise summation
    if terms.size == 0:
        return 0.0
    return float(np.cumsum(terms)[-1])


def kde_sorted(xs, queries, n, norm):
    """Windowed 1-D bump-kernel KDE over an ascending cloud ``xs``."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    h = (1.0 / n) * (1.0 + 1e-12)
    lo = np.searchsorted(xs, queries - h, side="left")
    hi = np.searchsorted(xs, queries + h, side="right")
    scale = norm * n / xs.shape[0]
    out = np.empty(queries.shape[0])
    for k in range(queries.shape[0]):
        out[k] = scale * _fold(_bump_terms(queries[k], xs[lo[k]:hi[k]], n))
    return out


def kde_naive(xs, queries, n, norm):
    """Same sum as :func:`kde_sorted` without the window, term by term over all of ``xs``."""
    xs = np.ascontiguousarray(xs, dtype=np.float64)
    queries = np.ascontiguousarray(queries, dtype=np.float64)
    scale = norm * n / xs.shape[0]
    out = np.empty(queries.shape[0])
    for k in range(queries.shape[0]):
        out[k] = scale * _fold(_bump_terms(queries[k], xs, n))
    return out


def wasserstein_1d_cost(x, wx, y, wy, p):
    """Quantile-coupling cost sum |x - y|^p for ascending supports."""
    fx = np.cumsum(wx)
    fy = np.cumsum(wy)
    levels = np.union1d(fx, fy)
    top = min(fx[-1], fy[-1])
    levels = levels[levels < top]
    levels = np.append(levels, top)
    widths = np.diff(levels, prepend=0.0)
    mids = levels - 0.5 * widths
    ix = np.minimum(np.searchsorted(fx, mids, side="right"), x.shape[0] - 1)
    iy = np.minimum(np.searchsorted(fy, mids, side="right"), y.shape[0] - 1)
    return float(np.sum(widths * np.abs(x[ix] - y[iy]) ** p))


def thomas(lower, diag, upper, rhs):
    """Solve a tridiagonal system; ``lower[0]`` and ``upper[-1]`` are ignored."""
    from scipy.linalg import solve_banded

    ab = np.empty((3, diag.shape[0]))
    ab[0, 1:] = upper[:-1]
    ab[0, 0] = 0.0
    ab[1] = diag
    ab[2, :-1] = lower[1:]
    ab[2, -1] = 0.0
    return solve_banded((1, 1), ab, rhs, check_finite=False)


def _northwest(a, b):
    m, n = a.shape[0], b.shape[0]
    ra, rb = a.copy(), b.copy()
    bi, bj, bf = [], [], []
    i = j = 0
    while True:
        q = min(ra[i], rb[j])
        bi.append(i)
        bj.append(j)
        bf.append(q)
        ra[i] -= q
        rb[j] -= q
        if i == m - 1 and j == n - 1:
            break
        if i == m - 1:
            j += 1
        elif j == n - 1:
            i += 1
        elif ra[i] <= rb[j]:
            i += 1
        else:
            j += 1
    return bi, bj, bf


def network_simplex(a, b, cost, tol=1e-11, max_iter=None):
    """Transportation simplex on the bipartite spanning-tree basis.

    Starts from the north-west corner solution and pivots on the most
    negative reduced cost until none is below ``-tol * max(1, max|cost|)``.
    Returns ``(plan, iterations)``.
    """
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    cost = np.asarray(cost, dtype=np.float64)
    m, n = cost.shape
    bi, bj, bf = _northwest(a, b)
    thresh = -tol * max(1.0, float(np.max(np.abs(cost))) if cost.size else 1.0)
    if max_iter is None:
        max_iter = 50 * (m + n) * (m + n) + 1000
    nodes = m + n
    it = 0
    while it < max_iter:
        adj = [[] for _ in range(nodes)]
        for e in range(len(bi)):
            adj[bi[e]].append((m + bj[e], e))
            adj[m + bj[e]].append((bi[e], e))
        pot = np.zeros(nodes)
        seen = np.zeros(nodes, dtype=bool)
        seen[0] = True
        stack = [0]
        while stack:
            v = stack.pop()
            for w, e in adj[v]:
                if not seen[w]:
                    seen[w] = True
                    pot[w] = cost[bi[e], bj[e]] - pot[v]
                    stack.append(w)
        red = cost - pot[:m, None] - pot[None, m:]
        flat = int(np.argmin(red))
        if red.flat[flat] >= thresh:
            break
        ei, ej = divmod(flat, n)
        # tree path from row ei to column ej
        parent = {ei: (-1, -1)}
        queue = [ei]
        target = m + ej
        head = 0
        while head < len(queue):
            v = queue[head]
            head += 1
            if v == target:
                break
            for w, e in adj[v]:
                if w not in parent:
                    parent[w] = (v, e)
                    queue.append(w)
        path = []
        v = target
        while v != ei:
            pv, e = parent[v]
            path.append(e)
            v = pv
        minus = path[0::2]
        plus = path[1::2]
        theta = min(bf[e] for e in minus)
        leave = next(e for e in minus if bf[e] == theta)
        for e in minus:
            bf[e] = max(bf[e] - theta, 0.0)
        for e in plus:
            bf[e] += theta
        bi[leave], bj[leave], bf[leave] = ei, ej, theta
        it += 1
    else:
        raise RuntimeError("network simplex did not converge")
    plan = np.zeros((m, n))
    for e in range(len(bi)):
        plan[bi[e], bj[e]] += bf[e]
    return plan, it
