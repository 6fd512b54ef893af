# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled tree kernels.

Every function here has a bit-for-bit twin in ``_pykernels``; the two
must stay in lockstep (same RNG stream, same float expression order,
same node numbering).
"""

import numpy as np

from libc.stdlib cimport malloc, free
from libc.stdint cimport uint64_t, int64_t
from libc.math cimport INFINITY, isinf, log2


ctypedef struct ValLab:
    double v
    Py_ssize_t y


cdef inline void _swap(ValLab* a, Py_ssize_t i, Py_ssize_t j) noexcept nogil:
    cdef ValLab t = a[i]
    a[i] = a[j]
    a[j] = t


cdef inline double _median3(ValLab* a, Py_ssize_t n) noexcept nogil:
    cdef double x = a[0].v
    cdef double y = a[n // 2].v
    cdef double z = a[n - 1].v
    if x < y:
        if y < z:
            return y
        elif x < z:
            return z
        return x
    if x < z:
        return x
    elif y < z:
        return z
    return y


cdef void _introsort(ValLab* a, Py_ssize_t n, int maxd) noexcept nogil:
    # three-way partition quicksort with insertion sort for short runs and
    # heapsort once the recursion budget is spent
    cdef double pivot
    cdef Py_ssize_t i, l, r, j
    cdef ValLab key
    while n > 1:
        if n <= 16:
            for i in range(1, n):
                key = a[i]
                j = i - 1
                while j >= 0 and a[j].v > key.v:
                    a[j + 1] = a[j]
                    j -= 1
                a[j + 1] = key
            return
        if maxd <= 0:
            _heapsort(a, n)
            return
        maxd -= 1
        pivot = _median3(a, n)
        i = 0
        l = 0
        r = n
        while i < r:
            if a[i].v < pivot:
                _swap(a, i, l)
                i += 1
                l += 1
            elif a[i].v > pivot:
                r -= 1
                _swap(a, i, r)
            else:
                i += 1
        _introsort(a, l, maxd)
        a += r
        n -= r


cdef inline void _sift_down(ValLab* a, Py_ssize_t start, Py_ssize_t end) noexcept nogil:
    cdef Py_ssize_t child, maxind, root = start
    while True:
        child = root * 2 + 1
        maxind = root
        if child < end and a[maxind].v < a[child].v:
            maxind = child
        if child + 1 < end and a[maxind].v < a[child + 1].v:
            maxind = child + 1
        if maxind == root:
            break
        _swap(a, root, maxind)
        root = maxind


cdef void _heapsort(ValLab* a, Py_ssize_t n) noexcept nogil:
    cdef Py_ssize_t start = (n - 2) // 2
    cdef Py_ssize_t end = n
    while True:
        _sift_down(a, start, end)
        if start == 0:
            break
        start -= 1
    end = n - 1
    while end > 0:
        _swap(a, 0, end)
        _sift_down(a, 0, end)
        end -= 1


cdef inline uint64_t _splitmix64(uint64_t* state) noexcept nogil:
    state[0] = state[0] + <uint64_t>0x9E3779B97F4A7C15ULL
    cdef uint64_t z = state[0]
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9ULL
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EBULL
    return z ^ (z >> 31)


def build_tree(const double[:, ::1] X, const Py_ssize_t[::1] y,
               const Py_ssize_t[::1] sample_idx, Py_ssize_t n_classes,
               Py_ssize_t min_samples_leaf, Py_ssize_t max_features,
               uint64_t seed):
    """Grow an unpruned Gini CART tree on ``X[sample_idx]``."""
    cdef Py_ssize_t m = sample_idx.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t K = n_classes
    cdef Py_ssize_t cap = 2 * m + 1

    feature_a = np.full(cap, -1, dtype=np.int64)
    threshold_a = np.zeros(cap, dtype=np.float64)
    left_a = np.full(cap, -1, dtype=np.int64)
    right_a = np.full(cap, -1, dtype=np.int64)
    counts_a = np.zeros((cap, K), dtype=np.int64)
    nsamp_a = np.zeros(cap, dtype=np.int64)
    risk_a = np.zeros(cap, dtype=np.float64)
    idx_a = np.array(sample_idx, dtype=np.intp, copy=True)
    tmp_a = np.empty(max(m, 1), dtype=np.intp)

    cdef int64_t[::1] feature = feature_a
    cdef double[::1] threshold = threshold_a
    cdef int64_t[::1] left = left_a
    cdef int64_t[::1] right = right_a
    cdef int64_t[:, ::1] counts = counts_a
    cdef int64_t[::1] nsamp = nsamp_a
    cdef double[::1] risk = risk_a
    cdef Py_ssize_t[::1] idx = idx_a
    cdef Py_ssize_t[::1] tmp = tmp_a

    cdef ValLab* buf = <ValLab*>malloc(max(m, 1) * sizeof(ValLab))
    cdef int64_t* cL = <int64_t*>malloc(K * sizeof(int64_t))
    cdef int64_t* cR = <int64_t*>malloc(K * sizeof(int64_t))
    cdef Py_ssize_t* perm = <Py_ssize_t*>malloc(max(d, 1) * sizeof(Py_ssize_t))
    cdef Py_ssize_t* stack = <Py_ssize_t*>malloc(3 * cap * sizeof(Py_ssize_t))
    if buf == NULL or cL == NULL or cR == NULL or perm == NULL or stack == NULL:
        free(buf); free(cL); free(cR); free(perm); free(stack)
        raise MemoryError()

    cdef uint64_t state = seed
    cdef Py_ssize_t n_nodes = 0
    cdef Py_ssize_t sp = 0
    cdef Py_ssize_t node, start, end, n, i, j, k, p, f, c, s, visited, swap
    cdef Py_ssize_t best_f, best_p, n_left, lo, hi
    cdef int64_t sq, sqL, sqR, cmax
    cdef double vmin, vmax, v, score, best_score, thr, best_thr
    cdef uint64_t r

    with nogil:
        # root
        n_nodes = _make_node(0, 0, m, idx, y, counts, nsamp, risk, K)
        stack[0] = 0
        stack[1] = 0
        stack[2] = m
        sp = 1
        while sp > 0:
            sp -= 1
            node = stack[3 * sp]
            start = stack[3 * sp + 1]
            end = stack[3 * sp + 2]
            n = end - start

            cmax = 0
            sq = 0
            for c in range(K):
                if counts[node, c] > cmax:
                    cmax = counts[node, c]
                sq = sq + counts[node, c] * counts[node, c]
            if n < 2 * min_samples_leaf or cmax == n:
                continue

            best_f = -1
            best_p = -1
            best_score = -INFINITY
            best_thr = 0.0
            for i in range(d):
                perm[i] = i
            visited = 0
            for i in range(d):
                if visited >= max_features:
                    break
                r = _splitmix64(&state)
                j = i + <Py_ssize_t>(r % <uint64_t>(d - i))
                swap = perm[i]
                perm[i] = perm[j]
                perm[j] = swap
                f = perm[i]

                vmin = INFINITY
                vmax = -INFINITY
                for k in range(n):
                    s = idx[start + k]
                    v = X[s, f]
                    buf[k].v = v
                    buf[k].y = y[s]
                    if v < vmin:
                        vmin = v
                    if v > vmax:
                        vmax = v
                if vmin == vmax:
                    continue
                visited += 1
                _introsort(buf, n, 2 * <int>log2(<double>n))

                for c in range(K):
                    cL[c] = 0
                    cR[c] = counts[node, c]
                sqL = 0
                sqR = sq
                for p in range(1, n):
                    c = buf[p - 1].y
                    sqL = sqL + 2 * cL[c] + 1
                    cL[c] += 1
                    sqR = sqR - 2 * cR[c] + 1
                    cR[c] -= 1
                    if p < min_samples_leaf or n - p < min_samples_leaf:
                        continue
                    if not (buf[p - 1].v < buf[p].v):
                        continue
                    score = (<double>sqL) / (<double>p) + (<double>sqR) / (<double>(n - p))
                    if score > best_score or (score == best_score and f < best_f):
                        thr = buf[p - 1].v / 2.0 + buf[p].v / 2.0
                        if thr == buf[p].v or isinf(thr):
                            thr = buf[p - 1].v
                        best_score = score
                        best_f = f
                        best_p = p
                        best_thr = thr

            if best_f < 0:
                continue

            # stable partition of idx[start:end]
            lo = 0
            for k in range(n):
                s = idx[start + k]
                if X[s, best_f] <= best_thr:
                    tmp[lo] = s
                    lo += 1
            n_left = lo
            for k in range(n):
                s = idx[start + k]
                if not (X[s, best_f] <= best_thr):
                    tmp[lo] = s
                    lo += 1
            for k in range(n):
                idx[start + k] = tmp[k]

            feature[node] = best_f
            threshold[node] = best_thr
            left[node] = n_nodes
            n_nodes = _make_node(n_nodes, start, start + n_left, idx, y, counts, nsamp, risk, K)
            right[node] = n_nodes
            n_nodes = _make_node(n_nodes, start + n_left, end, idx, y, counts, nsamp, risk, K)

            stack[3 * sp] = right[node]
            stack[3 * sp + 1] = start + n_left
            stack[3 * sp + 2] = end
            sp += 1
            stack[3 * sp] = left[node]
            stack[3 * sp + 1] = start
            stack[3 * sp + 2] = start + n_left
            sp += 1

    free(buf); free(cL); free(cR); free(perm); free(stack)
    return (feature_a[:n_nodes].copy(), threshold_a[:n_nodes].copy(),
            left_a[:n_nodes].copy(), right_a[:n_nodes].copy(),
            counts_a[:n_nodes].copy(), nsamp_a[:n_nodes].copy(),
            risk_a[:n_nodes].copy())


cdef Py_ssize_t _make_node(Py_ssize_t node, Py_ssize_t start, Py_ssize_t end,
                           Py_ssize_t[::1] idx, const Py_ssize_t[::1] y,
                           int64_t[:, ::1] counts, int64_t[::1] nsamp,
                           double[::1] risk, Py_ssize_t K) noexcept nogil:
    cdef Py_ssize_t k, c
    cdef int64_t sq = 0
    cdef Py_ssize_t n = end - start
    for k in range(start, end):
        counts[node, y[idx[k]]] += 1
    for c in range(K):
        sq = sq + counts[node, c] * counts[node, c]
    nsamp[node] = n
    risk[node] = (<double>n) - (<double>sq) / (<double>n)
    return node + 1


def route(const int64_t[::1] feature, const double[::1] threshold,
          const int64_t[::1] left, const int64_t[::1] right,
          const double[::1] collapse, double alpha, const double[:, ::1] X):
    """Leaf (or collapsed-node) id reached by every row of ``X``."""
    cdef Py_ssize_t n = X.shape[0]
    out_a = np.empty(n, dtype=np.int64)
    cdef int64_t[::1] out = out_a
    cdef Py_ssize_t i
    cdef int64_t node
    cdef bint pruned = alpha > 0.0
    with nogil:
        for i in range(n):
            node = 0
            while feature[node] >= 0:
                if pruned and collapse[node] <= alpha:
                    break
                if X[i, feature[node]] <= threshold[node]:
                    node = left[node]
                else:
                    node = right[node]
            out[i] = node
    return out_a


def cost_complexity(const int64_t[::1] left, const int64_t[::1] right,
                    const double[::1] risk, double n_root):
    """Weakest-link pruning sequence.

    Returns ``(collapse, path_alpha, path_leaves)`` where ``collapse[t]`` is
    the alpha at which internal node ``t`` is turned into a leaf.
    """
    cdef Py_ssize_t n_nodes = left.shape[0]
    collapse_a = np.full(n_nodes, np.inf)
    cdef double[::1] collapse = collapse_a
    cut_a = np.zeros(n_nodes, dtype=np.uint8)
    reach_a = np.zeros(n_nodes, dtype=np.uint8)
    rsub_a = np.zeros(n_nodes, dtype=np.float64)
    lsub_a = np.zeros(n_nodes, dtype=np.int64)
    g_a = np.zeros(n_nodes, dtype=np.float64)
    cdef unsigned char[::1] cut = cut_a
    cdef unsigned char[::1] reach = reach_a
    cdef double[::1] rsub = rsub_a
    cdef int64_t[::1] lsub = lsub_a
    cdef double[::1] g = g_a

    path_alpha = [0.0]
    cdef Py_ssize_t t
    cdef int64_t n_leaves = 0
    for t in range(n_nodes):
        if left[t] < 0:
            n_leaves += 1
    path_leaves = [n_leaves]

    cdef double current = 0.0
    cdef double gmin, alpha
    while True:
        if left[0] < 0 or cut[0]:
            break
        with nogil:
            for t in range(n_nodes - 1, -1, -1):
                if left[t] < 0 or cut[t]:
                    rsub[t] = risk[t]
                    lsub[t] = 1
                else:
                    rsub[t] = rsub[left[t]] + rsub[right[t]]
                    lsub[t] = lsub[left[t]] + lsub[right[t]]
            for t in range(n_nodes):
                reach[t] = 0
            reach[0] = 1
            gmin = INFINITY
            for t in range(n_nodes):
                if reach[t] and left[t] >= 0 and not cut[t]:
                    reach[left[t]] = 1
                    reach[right[t]] = 1
                    g[t] = ((risk[t] - rsub[t]) / n_root) / (<double>(lsub[t] - 1))
                    if g[t] < gmin:
                        gmin = g[t]
            alpha = gmin if gmin > current else current
            for t in range(n_nodes):
                if reach[t] and left[t] >= 0 and not cut[t] and g[t] == gmin:
                    cut[t] = 1
                    collapse[t] = alpha
            for t in range(n_nodes - 1, -1, -1):
                if left[t] < 0 or cut[t]:
                    lsub[t] = 1
                else:
                    lsub[t] = lsub[left[t]] + lsub[right[t]]
        current = alpha
        # explicit indices: negative indexing is disabled in this module
        last = len(path_alpha) - 1
        if last > 0 and path_alpha[last] == alpha:
            path_leaves[last] = lsub[0]
        else:
            path_alpha.append(alpha)
            path_leaves.append(lsub[0])
    return collapse_a, np.array(path_alpha), np.array(path_leaves, dtype=np.int64)


def match_counts(const int64_t[:, ::1] query, const int64_t[:, ::1] ref):
    """``out[i, j]`` = number of trees where query row i and ref row j share a leaf."""
    cdef Py_ssize_t nq = query.shape[0]
    cdef Py_ssize_t nr = ref.shape[0]
    cdef Py_ssize_t T = query.shape[1]
    out_a = np.zeros((nq, nr), dtype=np.int32)
    cdef int[:, ::1] out = out_a
    if nq == 0 or nr == 0 or T == 0:
        return out_a
    cdef int64_t max_leaf = 0
    cdef Py_ssize_t i, j, t
    cdef int64_t leaf
    for t in range(T):
        for j in range(nr):
            if ref[j, t] > max_leaf:
                max_leaf = ref[j, t]
    head_a = np.empty(max_leaf + 1, dtype=np.intp)
    nxt_a = np.empty(nr, dtype=np.intp)
    cdef Py_ssize_t[::1] head = head_a
    cdef Py_ssize_t[::1] nxt = nxt_a
    with nogil:
        for t in range(T):
            for j in range(max_leaf + 1):
                head[j] = -1
            for j in range(nr - 1, -1, -1):
                leaf = ref[j, t]
                nxt[j] = head[leaf]
                head[leaf] = j
            for i in range(nq):
                leaf = query[i, t]
                if leaf < 0 or leaf > max_leaf:
                    continue
                j = head[leaf]
                while j >= 0:
                    out[i, j] += 1
                    j = nxt[j]
    return out_a
