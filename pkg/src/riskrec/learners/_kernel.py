"""Compiled tree-growing kernel shared by regression and effect trees.

Rows carry four additive statistics and two multiplicity counts. The split
mode decides how statistics turn into a node value and a split score:

* ``MODE_REGRESSION``: stats = (w, w*y, w*y^2, 0); value = mean; score =
  weighted SSE reduction.
* ``MODE_DIFF``: stats = (w*y*T, w*T, w*y*(1-T), w*(1-T)); value = treated mean
  minus control mean; score = n_L*n_R/(n_L+n_R) * (value_L - value_R)^2.
* ``MODE_RATIO``: stats = (w*a*b, w*b^2, 0, 0); value = ratio; same score as
  ``MODE_DIFF``.

Counts are (control multiplicity, treated multiplicity). Regression mode only
looks at their sum.
"""

import numpy as np
from numba import njit

MODE_REGRESSION = 0
MODE_DIFF = 1
MODE_RATIO = 2


@njit(cache=True)
def _value(mode, s0, s1, s2, s3):
    if mode == MODE_REGRESSION:
        return s1 / s0
    if mode == MODE_DIFF:
        return s0 / s1 - s2 / s3
    return s0 / s1


@njit(cache=True)
def _admissible(mode, c0, c1, s1, s3, s0, min_leaf):
    if mode == MODE_REGRESSION:
        return c0 + c1 >= min_leaf and s0 > 0.0
    if c0 < min_leaf or c1 < min_leaf:
        return False
    if mode == MODE_DIFF:
        return s1 > 0.0 and s3 > 0.0
    return s1 > 0.0


@njit(cache=True)
def grow(XT, y, stats, counts, S, mode, max_depth, min_leaf, n_try, seed):
    """Grow one tree depth-first.

    ``XT`` is the transposed feature matrix. ``S`` is a (d, n) array of row
    ids, each row of it sorted by the matching feature; it is permuted in
    place. ``y`` is only used to detect pure nodes in regression mode.
    """
    d = S.shape[0]
    n = S.shape[1]
    np.random.seed(seed)

    cap = 2 * n + 1
    feature = np.full(cap, -1, dtype=np.int64)
    threshold = np.zeros(cap)
    left = np.full(cap, -1, dtype=np.int64)
    right = np.full(cap, -1, dtype=np.int64)
    value = np.zeros(cap)
    weight = np.zeros(cap)

    goes_left = np.zeros(XT.shape[1], dtype=np.uint8)
    buf = np.empty(n, dtype=np.int64)
    feats = np.arange(d)

    stack_node = np.empty(cap, dtype=np.int64)
    stack_lo = np.empty(cap, dtype=np.int64)
    stack_hi = np.empty(cap, dtype=np.int64)
    stack_depth = np.empty(cap, dtype=np.int64)
    top = 0
    stack_node[0] = 0
    stack_lo[0] = 0
    stack_hi[0] = n
    stack_depth[0] = 0
    top = 1
    n_nodes = 1

    while top > 0:
        top -= 1
        node = stack_node[top]
        lo = stack_lo[top]
        hi = stack_hi[top]
        depth = stack_depth[top]

        t0 = 0.0
        t1 = 0.0
        t2 = 0.0
        t3 = 0.0
        tc0 = 0.0
        tc1 = 0.0
        ymin = np.inf
        ymax = -np.inf
        for k in range(lo, hi):
            r = S[0, k]
            t0 += stats[r, 0]
            t1 += stats[r, 1]
            t2 += stats[r, 2]
            t3 += stats[r, 3]
            tc0 += counts[r, 0]
            tc1 += counts[r, 1]
            if y[r] < ymin:
                ymin = y[r]
            if y[r] > ymax:
                ymax = y[r]
        value[node] = _value(mode, t0, t1, t2, t3)
        weight[node] = tc0 + tc1

        if depth >= max_depth:
            continue
        if mode == MODE_REGRESSION and ymin == ymax:
            continue

        # feature subset, visited in ascending index order for tie-breaking
        if n_try < d:
            for i in range(d):
                feats[i] = i
            for i in range(n_try):
                j = i + np.random.randint(d - i)
                tmp = feats[i]
                feats[i] = feats[j]
                feats[j] = tmp
            chosen = np.sort(feats[:n_try])
        else:
            chosen = np.arange(d)

        mean = t1 / t0 if mode == MODE_REGRESSION else 0.0
        best_gain = 0.0
        best_f = -1
        best_pos = -1
        best_thr = 0.0
        for f in chosen:
            a0 = 0.0
            a1 = 0.0
            a2 = 0.0
            a3 = 0.0
            b0 = 0.0
            b1 = 0.0
            for k in range(lo, hi - 1):
                r = S[f, k]
                a0 += stats[r, 0]
                a1 += stats[r, 1]
                a2 += stats[r, 2]
                a3 += stats[r, 3]
                b0 += counts[r, 0]
                b1 += counts[r, 1]
                xc = XT[f, r]
                xn = XT[f, S[f, k + 1]]
                if not xn > xc:
                    continue
                if mode == MODE_REGRESSION:
                    if not _admissible(mode, b0, b1, a1, a3, a0, min_leaf):
                        continue
                    if not _admissible(mode, tc0 - b0, tc1 - b1, t1 - a1,
                                       t3 - a3, t0 - a0, min_leaf):
                        continue
                    wl = a0
                    wr = t0 - a0
                    dl = a1 - wl * mean
                    dr = (t1 - a1) - wr * mean
                    gain = dl * dl / wl + dr * dr / wr
                else:
                    if not _admissible(mode, b0, b1, a1, a3, a0, min_leaf):
                        continue
                    if not _admissible(mode, tc0 - b0, tc1 - b1, t1 - a1,
                                       t3 - a3, t0 - a0, min_leaf):
                        continue
                    vl = _value(mode, a0, a1, a2, a3)
                    vr = _value(mode, t0 - a0, t1 - a1, t2 - a2, t3 - a3)
                    nl = b0 + b1
                    nr = (tc0 + tc1) - nl
                    gain = nl * nr / (nl + nr) * (vl - vr) ** 2
                if gain > best_gain:
                    best_gain = gain
                    best_f = f
                    best_pos = k
                    thr = xc + (xn - xc) / 2.0
                    if thr >= xn:
                        thr = xc
                    best_thr = thr

        if best_f < 0:
            continue

        n_left = best_pos - lo + 1
        for k in range(lo, hi):
            goes_left[S[best_f, k]] = 1 if k <= best_pos else 0
        for f in range(d):
            if f == best_f:
                continue
            il = lo
            ir = 0
            for k in range(lo, hi):
                r = S[f, k]
                if goes_left[r] == 1:
                    S[f, il] = r
                    il += 1
                else:
                    buf[ir] = r
                    ir += 1
            for k in range(ir):
                S[f, il + k] = buf[k]

        feature[node] = best_f
        threshold[node] = best_thr
        lc = n_nodes
        rc = n_nodes + 1
        n_nodes += 2
        left[node] = lc
        right[node] = rc
        mid = lo + n_left
        # push right first so the left subtree is numbered first
        stack_node[top] = rc
        stack_lo[top] = mid
        stack_hi[top] = hi
        stack_depth[top] = depth + 1
        top += 1
        stack_node[top] = lc
        stack_lo[top] = lo
        stack_hi[top] = mid
        stack_depth[top] = depth + 1
        top += 1

    return (feature[:n_nodes].copy(), threshold[:n_nodes].copy(),
            left[:n_nodes].copy(), right[:n_nodes].copy(),
            value[:n_nodes].copy(), weight[:n_nodes].copy())


@njit(cache=True)
def apply(X, feature, threshold, left, right):
    out = np.empty(X.shape[0], dtype=np.int64)
    for i in range(X.shape[0]):
        node = 0
        while left[node] >= 0:
            if X[i, feature[node]] <= threshold[node]:
                node = left[node]
            else:
                node = right[node]
        out[i] = node
    return out
