"""Pure-Python regression tree kernels (fallback for ``_forest_ext``).

Both implementations share the algorithm exactly: the same xorshift64*
stream picks candidate features, candidates are scanned in the same order,
ties keep the first best split, and sums are accumulated sequentially, so a
given seed yields the same tree from either backend.
"""

import numpy as np

_MASK = (1 << 64) - 1
_MULT = 2685821657736338717


def _next(state):
    state ^= state >> 12
    state ^= (state << 25) & _MASK
    state ^= state >> 27
    return state, (state * _MULT) & _MASK


def build_tree(X, y, min_leaf, max_features, seed):
    X = np.ascontiguousarray(X, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n, d = X.shape
    state = (int(seed) & _MASK) or 0x9E3779B97F4A7C15
    max_features = max(1, min(int(max_features), d))
    min_leaf = max(1, int(min_leaf))

    feature, threshold, left, right, value, count = [], [], [], [], [], []

    def new_node():
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        value.append(0.0)
        count.append(0)
        return len(feature) - 1

    root = new_node()
    stack = [(root, np.arange(n, dtype=np.int64))]
    while stack:
        node, idx = stack.pop()
        m = idx.shape[0]
        ys = y[idx]
        total = np.cumsum(ys)[-1]
        value[node] = total / m
        count[node] = m
        if m < 2 * min_leaf or np.all(ys == ys[0]):
            continue
        parent_score = total * total / m

        feats = list(range(d))
        for j in range(max_features):
            state, r = _next(state)
            k = j + (r >> 11) % (d - j)
            feats[j], feats[k] = feats[k], feats[j]

        best_score = parent_score
        best_f, best_thr = -1, 0.0
        nl = np.arange(1, m, dtype=np.float64)
        for f in feats[:max_features]:
            xs_all = X[idx, f]
            order = np.argsort(xs_all, kind="stable")
            xs = xs_all[order]
            cs = np.cumsum(ys[order])
            tot = cs[-1]
            sl = cs[:-1]
            sr = tot - sl
            score = sl * sl / nl + sr * sr / (m - nl)
            pos = np.arange(m - 1)
            valid = (pos >= min_leaf - 1) & (pos <= m - min_leaf - 1) & (xs[:-1] < xs[1:])
            if not valid.any():
                continue
            cand = np.where(valid, score, -np.inf)
            i = int(np.argmax(cand))
            if cand[i] > best_score:
                best_score = cand[i]
                best_f = f
                thr = 0.5 * (xs[i] + xs[i + 1])
                if thr >= xs[i + 1]:
                    thr = xs[i]
                best_thr = thr
        if best_f < 0 or best_score - parent_score <= 1e-12 * max(1.0, abs(parent_score)):
            continue
        go_left = X[idx, best_f] <= best_thr
        lo = new_node()
        hi = new_node()
        feature[node] = best_f
        threshold[node] = best_thr
        left[node] = lo
        right[node] = hi
        stack.append((hi, idx[~go_left]))
        stack.append((lo, idx[go_left]))

    return (
        np.asarray(feature, dtype=np.int64),
        np.asarray(threshold, dtype=np.float64),
        np.asarray(left, dtype=np.int64),
        np.asarray(right, dtype=np.int64),
        np.asarray(value, dtype=np.float64),
        np.asarray(count, dtype=np.int64),
    )


def predict_tree(feature, threshold, left, right, value, X):
    X = np.ascontiguousarray(X, dtype=np.float64)
    nodes = np.zeros(X.shape[0], dtype=np.int64)
    rows = np.arange(X.shape[0])
    active = feature[nodes] >= 0
    while active.any():
        cur = nodes[active]
        f = feature[cur]
        go_left = X[rows[active], f] <= threshold[cur]
        nodes[active] = np.where(go_left, left[cur], right[cur])
        active = feature[nodes] >= 0
    return value[nodes]
