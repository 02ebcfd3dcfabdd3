"""Independent reference computations, written without the package code.

Plain loops and the ``math`` module only, so a shared bug cannot hide in both
routes.
"""

import itertools
import math


def sigmoid(x):
    return 1.0 / (1.0 + math.exp(-x))


def normalize(v):
    n = math.sqrt(sum(x * x for x in v))
    return [x / n for x in v]


def dbscan_partition(dist, eps, min_samples):
    """Exhaustive DBSCAN reference returning a partition as a set of frozensets.

    Core points: at least ``min_samples`` neighbours within ``eps`` (self
    included).  Clusters are connected components of the core graph; each
    border point joins the component whose lowest-index core point is smallest
    among those with a core neighbour of the border point.
    """
    n = len(dist)
    nbr = [[dist[i][j] <= eps for j in range(n)] for i in range(n)]
    core = [sum(nbr[i]) >= min_samples for i in range(n)]
    comp = list(range(n))

    def find(i):
        while comp[i] != i:
            comp[i] = comp[comp[i]]
            i = comp[i]
        return i

    for i, j in itertools.combinations(range(n), 2):
        if core[i] and core[j] and nbr[i][j]:
            a, b = find(i), find(j)
            comp[max(a, b)] = min(a, b)
    owner = {}
    for i in range(n):
        if core[i]:
            owner[i] = find(i)  # root is the smallest index in the component
    for i in range(n):
        if core[i]:
            continue
        roots = [owner[j] for j in range(n) if core[j] and nbr[i][j]]
        if roots:
            owner[i] = min(roots)
    groups = {}
    for i, root in owner.items():
        groups.setdefault(root, set()).add(i)
    return {frozenset(g) for g in groups.values()}


def partition_of(labels):
    groups = {}
    for i, lab in enumerate(labels):
        if lab >= 0:
            groups.setdefault(int(lab), set()).add(i)
    return {frozenset(g) for g in groups.values()}


def pairwise_f1(labels, truth):
    tp = fp = fn = 0
    for i, j in itertools.combinations(range(len(labels)), 2):
        same_pred = labels[i] >= 0 and labels[i] == labels[j]
        same_true = truth[i] == truth[j]
        tp += same_pred and same_true
        fp += same_pred and not same_true
        fn += same_true and not same_pred
    if tp == 0:
        return 0.0
    p, r = tp / (tp + fp), tp / (tp + fn)
    return 2 * p * r / (p + r)


def log_softmax_row(row):
    m = max(row)
    lse = m + math.log(sum(math.exp(v - m) for v in row))
    return [v - lse for v in row]


def soft_ce(features, centroids, targets, tau):
    """Mean soft cross-entropy over rows, from explicit dot products."""
    total = 0.0
    for f, t in zip(features, targets):
        logits = [sum(a * b for a, b in zip(f, m)) / tau for m in centroids]
        logp = log_softmax_row(logits)
        total -= sum(ti * li for ti, li in zip(t, logp))
    return total / len(features)


def mlp_forward(w1, b1, w2, b2, x):
    """One input row through relu MLP + L2 normalization, by explicit loops."""
    hidden = []
    for j in range(len(b1)):
        s = b1[j] + sum(x[i] * w1[i][j] for i in range(len(x)))
        hidden.append(max(s, 0.0))
    raw = []
    for k in range(len(b2)):
        raw.append(b2[k] + sum(hidden[j] * w2[j][k] for j in range(len(hidden))))
    return normalize(raw)


def nearest_neighbor_ids(dist_rows, gallery_ids):
    out = []
    for row in dist_rows:
        best = min(range(len(row)), key=lambda j: (row[j], j))
        out.append(gallery_ids[best])
    return out
