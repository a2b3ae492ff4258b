# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot kernels; see ``_pykernels`` for the reference semantics."""
import numpy as np

cimport numpy as cnp
from libc.math cimport cos, exp, fabs, log, pow, sin, sqrt
from libc.stdint cimport uint32_t, uint64_t

cnp.import_array()

BACKEND = "cython"

cdef uint64_t M0 = 0xD2511F53
cdef uint64_t M1 = 0xCD9E8D57
cdef uint32_t W0 = 0x9E3779B9
cdef uint32_t W1 = 0xBB67AE85
cdef double TWO_PI = 6.283185307179586


cdef inline void _philox(uint32_t* c, uint32_t k0, uint32_t k1) noexcept nogil:
    cdef uint64_t p0, p1
    cdef uint32_t c0 = c[0], c1 = c[1], c2 = c[2], c3 = c[3]
    cdef int r
    for r in range(10):
        p0 = M0 * <uint64_t>c0
        p1 = M1 * <uint64_t>c2
        c0 = <uint32_t>(p1 >> 32) ^ c1 ^ k0
        c1 = <uint32_t>p1
        c2 = <uint32_t>(p0 >> 32) ^ c3 ^ k1
        c3 = <uint32_t>p0
        k0 = k0 + W0
        k1 = k1 + W1
    c[0] = c0
    c[1] = c1
    c[2] = c2
    c[3] = c3


def philox4x32(counters, key):
    cdef cnp.ndarray[cnp.uint32_t, ndim=2] ctr = np.ascontiguousarray(
        np.asarray(counters, dtype=np.uint64) & 0xFFFFFFFF, dtype=np.uint32).copy()
    cdef uint32_t k0 = <uint32_t>(int(key[0]) & 0xFFFFFFFF)
    cdef uint32_t k1 = <uint32_t>(int(key[1]) & 0xFFFFFFFF)
    cdef Py_ssize_t i, K = ctr.shape[0]
    cdef uint32_t[:, ::1] cv = ctr
    with nogil:
        for i in range(K):
            _philox(&cv[i, 0], k0, k1)
    return ctr


cdef inline double _u53(uint32_t hi, uint32_t lo) noexcept nogil:
    cdef uint64_t w = (<uint64_t>hi << 32) | <uint64_t>lo
    return (<double>(w >> 11) + 0.5) * 1.1102230246251565e-16


cdef void _fill(uint64_t seed, uint64_t[::1] streams, uint32_t step, int count,
                int domain, bint gaussian, double[:, ::1] out) noexcept nogil:
    cdef Py_ssize_t i, b
    cdef int nblocks = (count + 1) // 2
    cdef uint32_t c[4]
    cdef uint32_t k0 = <uint32_t>seed
    cdef uint32_t k1 = <uint32_t>(seed >> 32)
    cdef double u0, u1, rad
    for i in range(streams.shape[0]):
        for b in range(nblocks):
            c[0] = step
            c[1] = (<uint32_t>(domain & 0xFF) << 24) | (<uint32_t>b & 0xFFFFFF)
            c[2] = <uint32_t>streams[i]
            c[3] = <uint32_t>(streams[i] >> 32)
            _philox(c, k0, k1)
            u0 = _u53(c[0], c[1])
            u1 = _u53(c[2], c[3])
            if gaussian:
                rad = sqrt(-2.0 * log(u0))
                out[i, 2 * b] = rad * cos(TWO_PI * u1)
                if 2 * b + 1 < count:
                    out[i, 2 * b + 1] = rad * sin(TWO_PI * u1)
            else:
                out[i, 2 * b] = u0
                if 2 * b + 1 < count:
                    out[i, 2 * b + 1] = u1


def uniforms(seed, streams, step, count, domain):
    cdef uint64_t[::1] st = np.ascontiguousarray(streams, dtype=np.uint64)
    out = np.empty((st.shape[0], count))
    _fill(<uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF), st, <uint32_t>(int(step) & 0xFFFFFFFF),
          count, domain, False, out)
    return out


def normals(seed, streams, step, count, domain):
    cdef uint64_t[::1] st = np.ascontiguousarray(streams, dtype=np.uint64)
    out = np.empty((st.shape[0], count))
    _fill(<uint64_t>(int(seed) & 0xFFFFFFFFFFFFFFFF), st, <uint32_t>(int(step) & 0xFFFFFFFF),
          count, domain, True, out)
    return out


cdef inline double _bump(double q, double x, double n) noexcept nogil:
    cdef double u = n * (q - x)
    cdef double u2 = u * u
    if u2 < 1.0:
        return exp(-1.0 / (1.0 - u2))
    return 0.0


cdef Py_ssize_t _lower(const double[::1] xs, double v) noexcept nogil:
    # first index with xs[i] >= v
    cdef Py_ssize_t lo = 0, hi = xs.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if xs[mid] < v:
            lo = mid + 1
        else:
            hi = mid
    return lo


cdef Py_ssize_t _upper(const double[::1] xs, double v) noexcept nogil:
    # first index with xs[i] > v
    cdef Py_ssize_t lo = 0, hi = xs.shape[0], mid
    while lo < hi:
        mid = (lo + hi) >> 1
        if xs[mid] <= v:
            lo = mid + 1
        else:
            hi = mid
    return lo


def kde_sorted(xs, queries, n, norm):
    cdef const double[::1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[::1] q = np.ascontiguousarray(queries, dtype=np.float64)
    cdef double nn = <double>n
    cdef double h = (1.0 / nn) * (1.0 + 1e-12)
    cdef double scale = <double>norm * nn / x.shape[0]
    out = np.empty(q.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t k, j, lo, hi
    cdef double s
    with nogil:
        for k in range(q.shape[0]):
            lo = _lower(x, q[k] - h)
            hi = _upper(x, q[k] + h)
            s = 0.0
            for j in range(lo, hi):
                s = s + _bump(q[k], x[j], nn)
            o[k] = scale * s
    return out


def kde_naive(xs, queries, n, norm):
    cdef const double[::1] x = np.ascontiguousarray(xs, dtype=np.float64)
    cdef const double[::1] q = np.ascontiguousarray(queries, dtype=np.float64)
    cdef double nn = <double>n
    cdef double scale = <double>norm * nn / x.shape[0]
    out = np.empty(q.shape[0])
    cdef double[::1] o = out
    cdef Py_ssize_t k, j
    cdef double s
    with nogil:
        for k in range(q.shape[0]):
            s = 0.0
            for j in range(x.shape[0]):
                s = s + _bump(q[k], x[j], nn)
            o[k] = scale * s
    return out


def wasserstein_1d_cost(x, wx, y, wy, p):
    cdef const double[::1] xv = np.ascontiguousarray(x, dtype=np.float64)
    cdef const double[::1] yv = np.ascontiguousarray(y, dtype=np.float64)
    cdef const double[::1] a = np.ascontiguousarray(wx, dtype=np.float64)
    cdef const double[::1] b = np.ascontiguousarray(wy, dtype=np.float64)
    cdef double pp = p
    cdef Py_ssize_t i = 0, j = 0, m = xv.shape[0], n = yv.shape[0]
    cdef double ra = a[0], rb = b[0], q, total = 0.0
    with nogil:
        while i < m and j < n:
            q = ra if ra < rb else rb
            total += q * pow(fabs(xv[i] - yv[j]), pp)
            ra -= q
            rb -= q
            if ra <= rb:
                i += 1
                if i < m:
                    ra = a[i]
                if rb == 0.0:
                    j += 1
                    if j < n:
                        rb = b[j]
            else:
                j += 1
                if j < n:
                    rb = b[j]
    return total


def thomas(lower, diag, upper, rhs):
    cdef const double[::1] lo = np.ascontiguousarray(lower, dtype=np.float64)
    cdef const double[::1] d = np.ascontiguousarray(diag, dtype=np.float64)
    cdef const double[::1] up = np.ascontiguousarray(upper, dtype=np.float64)
    cdef const double[::1] r = np.ascontiguousarray(rhs, dtype=np.float64)
    cdef Py_ssize_t k, n = d.shape[0]
    cp_arr = np.empty(n)
    x_arr = np.empty(n)
    cdef double[::1] cp = cp_arr
    cdef double[::1] x = x_arr
    cdef double den
    with nogil:
        cp[0] = up[0] / d[0]
        x[0] = r[0] / d[0]
        for k in range(1, n):
            den = d[k] - lo[k] * cp[k - 1]
            cp[k] = up[k] / den if k < n - 1 else 0.0
            x[k] = (r[k] - lo[k] * x[k - 1]) / den
        for k in range(n - 2, -1, -1):
            x[k] = x[k] - cp[k] * x[k + 1]
    return x_arr


def network_simplex(a, b, cost, tol=1e-11, max_iter=None):
    cdef const double[::1] av = np.ascontiguousarray(a, dtype=np.float64)
    cdef const double[::1] bv = np.ascontiguousarray(b, dtype=np.float64)
    cdef const double[:, ::1] C = np.ascontiguousarray(cost, dtype=np.float64)
    cdef Py_ssize_t m = C.shape[0], n = C.shape[1]
    cdef Py_ssize_t nodes = m + n, nb = m + n - 1
    cdef long long cap = 50 * (m + n) * (m + n) + 1000 if max_iter is None else max_iter

    bi_a = np.empty(nb, dtype=np.intp)
    bj_a = np.empty(nb, dtype=np.intp)
    bf_a = np.empty(nb)
    ra_a = np.array(av, dtype=np.float64)
    rb_a = np.array(bv, dtype=np.float64)
    deg_a = np.empty(nodes + 1, dtype=np.intp)
    fill_a = np.empty(nodes, dtype=np.intp)
    nbr_a = np.empty(2 * nb, dtype=np.intp)
    eid_a = np.empty(2 * nb, dtype=np.intp)
    pot_a = np.empty(nodes)
    seen_a = np.empty(nodes, dtype=np.intp)
    stack_a = np.empty(nodes, dtype=np.intp)
    par_a = np.empty(nodes, dtype=np.intp)
    pare_a = np.empty(nodes, dtype=np.intp)
    path_a = np.empty(nodes, dtype=np.intp)

    cdef Py_ssize_t[::1] bi = bi_a, bj = bj_a, deg = deg_a, fill = fill_a
    cdef Py_ssize_t[::1] nbr = nbr_a, eid = eid_a, seen = seen_a, stack = stack_a
    cdef Py_ssize_t[::1] par = par_a, pare = pare_a, path = path_a
    cdef double[::1] bf = bf_a, ra = ra_a, rb = rb_a, pot = pot_a
    cdef Py_ssize_t i = 0, j = 0, e, k, v, w, top, head, tail, plen, ei, ej, leave
    cdef double q, cmax = 1.0, thresh, best, red, theta
    cdef long long it = 0
    cdef bint done = False
    cdef double tl = tol

    with nogil:
        for i in range(m):
            for j in range(n):
                if fabs(C[i, j]) > cmax:
                    cmax = fabs(C[i, j])
        thresh = -tl * cmax

        # north-west corner start
        i = 0
        j = 0
        e = 0
        while True:
            q = ra[i] if ra[i] < rb[j] else rb[j]
            bi[e] = i
            bj[e] = j
            bf[e] = q
            e += 1
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

        while it < cap:
            # adjacency of the basis tree, CSR layout
            for v in range(nodes + 1):
                deg[v] = 0
            for e in range(nb):
                deg[bi[e] + 1] += 1
                deg[m + bj[e] + 1] += 1
            for v in range(nodes):
                deg[v + 1] += deg[v]
                fill[v] = deg[v]
            for e in range(nb):
                nbr[fill[bi[e]]] = m + bj[e]
                eid[fill[bi[e]]] = e
                fill[bi[e]] += 1
                nbr[fill[m + bj[e]]] = bi[e]
                eid[fill[m + bj[e]]] = e
                fill[m + bj[e]] += 1

            # potentials u_i + v_j = c_ij on basic cells
            for v in range(nodes):
                seen[v] = 0
            pot[0] = 0.0
            seen[0] = 1
            top = 0
            stack[top] = 0
            top += 1
            while top > 0:
                top -= 1
                v = stack[top]
                for k in range(deg[v], deg[v + 1]):
                    w = nbr[k]
                    if not seen[w]:
                        seen[w] = 1
                        e = eid[k]
                        pot[w] = C[bi[e], bj[e]] - pot[v]
                        stack[top] = w
                        top += 1

            best = 0.0
            ei = -1
            ej = -1
            for i in range(m):
                for j in range(n):
                    red = C[i, j] - pot[i] - pot[m + j]
                    if ei < 0 or red < best:
                        best = red
                        ei = i
                        ej = j
            if best >= thresh:
                done = True
                break

            # BFS from row ei to column ej through the tree
            for v in range(nodes):
                par[v] = -1
            par[ei] = ei
            head = 0
            tail = 0
            stack[tail] = ei
            tail += 1
            while head < tail:
                v = stack[head]
                head += 1
                if v == m + ej:
                    break
                for k in range(deg[v], deg[v + 1]):
                    w = nbr[k]
                    if par[w] < 0:
                        par[w] = v
                        pare[w] = eid[k]
                        stack[tail] = w
                        tail += 1
            plen = 0
            v = m + ej
            while v != ei:
                path[plen] = pare[v]
                plen += 1
                v = par[v]

            theta = bf[path[0]]
            leave = path[0]
            for k in range(0, plen, 2):
                if bf[path[k]] < theta:
                    theta = bf[path[k]]
                    leave = path[k]
            for k in range(plen):
                e = path[k]
                if k % 2 == 0:
                    bf[e] = bf[e] - theta
                    if bf[e] < 0.0:
                        bf[e] = 0.0
                else:
                    bf[e] = bf[e] + theta
            bi[leave] = ei
            bj[leave] = ej
            bf[leave] = theta
            it += 1

    if not done:
        raise RuntimeError("network simplex did not converge")
    plan = np.zeros((m, n))
    for e in range(nb):
        plan[bi_a[e], bj_a[e]] += bf_a[e]
    return plan, int(it)
