"""Pure-numpy split-search kernel.

Reference implementation of the contract in ``breakoutcast._kernels``.
The compiled kernel must agree with this one bit for bit: same stable
sort, same sequential prefix sums, same strict-inequality tie-breaking.
"""

import numpy as np

BACKEND = "numpy"


def best_split(x_all, y_all, idx, feats, min_leaf, l2):
    """Find the best SSE-reducing split for one tree node.

    Parameters
    ----------
    x_all : (n_total, n_features) float64 feature matrix
    y_all : (n_total,) float64 targets
    idx : (n,) int64 row ids of the node's samples (repeats allowed)
    feats : (m,) int64 candidate feature columns, in search order
    min_leaf : minimum samples on each side of a split
    l2 : additive denominator regularizer (0 for plain SSE splits)

    Returns
    -------
    (found, feature, threshold, score) where ``score`` is the maximized
    left_sum^2/(n_left+l2) + right_sum^2/(n_right+l2); ``found`` is False
    when no valid split exists.  The split rule is ``x <= threshold`` and
    the threshold equals the largest left-side value, so partitioning is
    float-exact.
    """
    n = idx.shape[0]
    best_score = -np.inf
    best_feat = -1
    best_thr = 0.0
    if n < 2 * min_leaf:
        return False, best_feat, best_thr, best_score
    y_node = y_all[idx]
    for f in feats:
        xs = x_all[idx, f]
        order = np.argsort(xs, kind="stable")
        xs_s = xs[order]
        if xs_s[0] == xs_s[-1]:
            continue
        cs = np.cumsum(y_node[order])
        total = cs[-1]
        lc = np.arange(1, n, dtype=np.float64)
        ls = cs[:-1]
        rs = total - ls
        rc = np.float64(n) - lc
        valid = xs_s[:-1] < xs_s[1:]
        if min_leaf > 1:
            valid &= (lc >= min_leaf) & (rc >= min_leaf)
        score = ls * ls / (lc + l2) + rs * rs / (rc + l2)
        score[~valid] = -np.inf
        i = int(np.argmax(score))
        if score[i] > best_score:
            best_score = float(score[i])
            best_feat = int(f)
            best_thr = float(xs_s[i])
    return best_feat >= 0, best_feat, best_thr, best_score
