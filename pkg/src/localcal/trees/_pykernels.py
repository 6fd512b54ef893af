"""Pure-Python/numpy versions of the tree kernels.

Bit-for-bit twin of ``_kernels.pyx``: identical RNG stream, identical
floating point expression order and identical node numbering.
"""

import numpy as np

_MASK64 = (1 << 64) - 1


def _splitmix64(state):
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return state, z ^ (z >> 31)


def build_tree(X, y, sample_idx, n_classes, min_samples_leaf, max_features, seed):
    m = len(sample_idx)
    d = X.shape[1]
    K = n_classes
    idx = np.array(sample_idx, dtype=np.intp, copy=True)
    state = int(seed) & _MASK64

    feature, threshold, left, right, counts, nsamp, risk = [], [], [], [], [], [], []

    def make_node(start, end):
        cnt = np.bincount(y[idx[start:end]], minlength=K).astype(np.int64)
        n = end - start
        sq = int((cnt * cnt).sum())
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        counts.append(cnt)
        nsamp.append(n)
        risk.append(float(n) - float(sq) / float(n))
        return len(feature) - 1

    make_node(0, m)
    stack = [(0, 0, m)]
    while stack:
        node, start, end = stack.pop()
        n = end - start
        cnt = counts[node]
        if n < 2 * min_samples_leaf or int(cnt.max()) == n:
            continue
        rows = idx[start:end]
        y_node = y[rows]

        best_f, best_score, best_thr = -1, -np.inf, 0.0
        perm = list(range(d))
        visited = 0
        for i in range(d):
            if visited >= max_features:
                break
            state, r = _splitmix64(state)
            j = i + r % (d - i)
            perm[i], perm[j] = perm[j], perm[i]
            f = perm[i]
            vals = X[rows, f]
            if vals.min() == vals.max():
                continue
            visited += 1
            order = np.argsort(vals, kind="stable")
            sv = vals[order]
            onehot = np.zeros((n, K), dtype=np.int64)
            onehot[np.arange(n), y_node[order]] = 1
            cum = np.cumsum(onehot, axis=0)[:-1]          # left counts for p = 1..n-1
            p = np.arange(1, n, dtype=np.int64)
            sq_left = (cum * cum).sum(axis=1)
            right_cnt = cnt[None, :] - cum
            sq_right = (right_cnt * right_cnt).sum(axis=1)
            valid = (sv[:-1] < sv[1:]) & (p >= min_samples_leaf) & (n - p >= min_samples_leaf)
            if not valid.any():
                continue
            score = sq_left.astype(np.float64) / p.astype(np.float64) \
                + sq_right.astype(np.float64) / (n - p).astype(np.float64)
            score = np.where(valid, score, -np.inf)
            k = int(np.argmax(score))
            s = float(score[k])
            if s > best_score or (s == best_score and f < best_f):
                lo, hi = float(sv[k]), float(sv[k + 1])
                thr = lo / 2.0 + hi / 2.0
                if thr == hi or np.isinf(thr):
                    thr = lo
                best_f, best_score, best_thr = f, s, thr

        if best_f < 0:
            continue
        go_left = X[rows, best_f] <= best_thr
        idx[start:end] = np.concatenate([rows[go_left], rows[~go_left]])
        n_left = int(go_left.sum())

        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = make_node(start, start + n_left)
        right[node] = make_node(start + n_left, end)
        stack.append((right[node], start + n_left, end))
        stack.append((left[node], start, start + n_left))

    return (np.array(feature, dtype=np.int64), np.array(threshold, dtype=np.float64),
            np.array(left, dtype=np.int64), np.array(right, dtype=np.int64),
            np.array(counts, dtype=np.int64).reshape(len(feature), K),
            np.array(nsamp, dtype=np.int64), np.array(risk, dtype=np.float64))


def route(feature, threshold, left, right, collapse, alpha, X):
    n = X.shape[0]
    node = np.zeros(n, dtype=np.int64)
    active = np.ones(n, dtype=bool)
    rows = np.arange(n)
    while True:
        f = feature[node]
        stop = f < 0
        if alpha > 0.0:
            stop |= collapse[node] <= alpha
        active &= ~stop
        if not active.any():
            return node
        a = rows[active]
        na = node[a]
        go_left = X[a, feature[na]] <= threshold[na]
        node[a] = np.where(go_left, left[na], right[na])


def cost_complexity(left, right, risk, n_root):
    n_nodes = len(left)
    left = [int(v) for v in left]
    right = [int(v) for v in right]
    risk = [float(v) for v in risk]
    collapse = np.full(n_nodes, np.inf)
    cut = [False] * n_nodes
    rsub = [0.0] * n_nodes
    lsub = [0] * n_nodes
    g = [0.0] * n_nodes
    path_alpha = [0.0]
    path_leaves = [sum(1 for v in left if v < 0)]
    current = 0.0
    while not (left[0] < 0 or cut[0]):
        for t in range(n_nodes - 1, -1, -1):
            if left[t] < 0 or cut[t]:
                rsub[t] = risk[t]
                lsub[t] = 1
            else:
                rsub[t] = rsub[left[t]] + rsub[right[t]]
                lsub[t] = lsub[left[t]] + lsub[right[t]]
        reach = [False] * n_nodes
        reach[0] = True
        gmin = np.inf
        for t in range(n_nodes):
            if reach[t] and left[t] >= 0 and not cut[t]:
                reach[left[t]] = reach[right[t]] = True
                g[t] = ((risk[t] - rsub[t]) / n_root) / float(lsub[t] - 1)
                if g[t] < gmin:
                    gmin = g[t]
        alpha = gmin if gmin > current else current
        for t in range(n_nodes):
            if reach[t] and left[t] >= 0 and not cut[t] and g[t] == gmin:
                cut[t] = True
                collapse[t] = alpha
        for t in range(n_nodes - 1, -1, -1):
            if left[t] < 0 or cut[t]:
                lsub[t] = 1
            else:
                lsub[t] = lsub[left[t]] + lsub[right[t]]
        current = alpha
        if len(path_alpha) > 1 and path_alpha[-1] == alpha:
            path_leaves[-1] = lsub[0]
        else:
            path_alpha.append(alpha)
            path_leaves.append(lsub[0])
    return collapse, np.array(path_alpha), np.array(path_leaves, dtype=np.int64)


def match_counts(query, ref):
    nq, T = query.shape
    out = np.zeros((nq, ref.shape[0]), dtype=np.int32)
    for t in range(T):
        out += query[:, t][:, None] == ref[:, t][None, :]
    return out
