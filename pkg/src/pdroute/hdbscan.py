"""Small exact HDBSCAN for the handful of requests one robot carries.

Dense O(n^2) throughout: mutual-reachability distances, Prim's minimum
spanning tree, single-linkage merge order, condensed tree and
excess-of-mass selection. Labels follow the usual convention (-1 = noise).
"""
from __future__ import annotations

import numpy as np
from scipy.spatial.distance import cdist

_MIN_DIST = 1e-12  # keeps 1/distance finite for duplicate points


def mutual_reachability(points: np.ndarray, min_samples: int) -> np.ndarray:
    d = cdist(points, points)
    k = min(min_samples, len(points)) - 1
    core = np.sort(d, axis=1)[:, k]
    mr = np.maximum(d, np.maximum.outer(core, core))
    np.fill_diagonal(mr, 0.0)
    return mr


def prim_mst(dist: np.ndarray) -> list[tuple[int, int, float]]:
    n = len(dist)
    in_tree = np.zeros(n, dtype=bool)
    best = np.full(n, np.inf)
    parent = np.full(n, -1)
    best[0] = 0.0
    edges = []
    for _ in range(n):
        cand = np.where(in_tree, np.inf, best)
        v = int(np.argmin(cand))
        in_tree[v] = True
        if parent[v] >= 0:
            edges.append((int(parent[v]), v, float(best[v])))
        closer = (~in_tree) & (dist[v] < best)
        best[closer] = dist[v][closer]
        parent[closer] = v
    return edges


def single_linkage(n: int, mst: list[tuple[int, int, float]]) -> list[tuple[int, int, float, int]]:
    """Merge list in scipy linkage layout: row i creates node n + i from (left, right, dist, size)."""
    parent = list(range(2 * n - 1))
    size = [1] * n + [0] * (n - 1)

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    out = []
    for k, (a, b, w) in enumerate(sorted(mst, key=lambda e: e[2])):
        ra, rb = find(a), find(b)
        node = n + k
        parent[ra] = parent[rb] = node
        size[node] = size[ra] + size[rb]
        out.append((ra, rb, w, size[node]))
    return out


def _leaves(node: int, n: int, link) -> list[int]:
    stack, out = [node], []
    while stack:
        x = stack.pop()
        if x < n:
            out.append(x)
        else:
            a, b, _, _ = link[x - n]
            stack += [a, b]
    return out


def condense(n: int, link, min_cluster_size: int):
    """Condensed tree rows (parent cluster, child, lambda, child size); cluster ids start at n."""
    rows = []
    root = 2 * n - 2
    next_label = n + 1
    stack = [(root, n)]
    while stack:
        node, label = stack.pop()
        if node < n:
            continue
        a, b, d, _ = link[node - n]
        lam = 1.0 / max(d, _MIN_DIST)
        size_a = link[a - n][3] if a >= n else 1
        size_b = link[b - n][3] if b >= n else 1
        big_a, big_b = size_a >= min_cluster_size, size_b >= min_cluster_size
        if big_a and big_b:
            for child, sz in ((a, size_a), (b, size_b)):
                rows.append((label, next_label, lam, sz))
                stack.append((child, next_label))
                next_label += 1
        else:
            for child, big in ((a, big_a), (b, big_b)):
                if big:
                    stack.append((child, label))
                else:
                    rows += [(label, p, lam, 1) for p in _leaves(child, n, link)]
    return rows


def hdbscan_labels(points: np.ndarray, min_cluster_size: int = 2, min_samples: int | None = None,
                   allow_single_cluster: bool = True) -> np.ndarray:
    points = np.asarray(points, dtype=float)
    n = len(points)
    if n < min_cluster_size or n < 2:
        return np.full(n, -1)
    mr = mutual_reachability(points, min_samples or min_cluster_size)
    link = single_linkage(n, prim_mst(mr))
    rows = condense(n, link, min_cluster_size)

    clusters = sorted({r[0] for r in rows} | {r[1] for r in rows if r[1] >= n})
    birth = {n: 0.0}
    for p, c, lam, _ in rows:
        if c >= n:
            birth[c] = lam
    stability = dict.fromkeys(clusters, 0.0)
    children: dict[int, list[int]] = {c: [] for c in clusters}
    for p, c, lam, sz in rows:
        stability[p] += (lam - birth[p]) * sz
        if c >= n:
            children[p].append(c)

    selected = {}
    # children always carry larger ids than their parent
    for c in sorted(clusters, reverse=True):
        sub = sum(stability[k] for k in children[c])
        if children[c] and (stability[c] < sub or (c == n and not allow_single_cluster)):
            stability[c] = sub
            selected[c] = False
        else:
            selected[c] = True
            stack = list(children[c])
            while stack:
                k = stack.pop()
                selected[k] = False
                stack += children[k]
    if not allow_single_cluster and not children[n]:
        selected[n] = False

    parent_of = {c: p for p, c, _, _ in rows if c >= n}
    root_max_lambda = max((lam for p, _, lam, _ in rows if p == n), default=0.0)
    labels = np.full(n, -1)
    chosen = sorted(c for c, s in selected.items() if s)
    ids = {c: k for k, c in enumerate(chosen)}
    for p, c, lam, _ in rows:
        if c >= n:
            continue
        node = p
        while node is not None and not selected.get(node, False):
            node = parent_of.get(node)
        if node is None:
            continue
        if node == n and lam < root_max_lambda:
            continue  # fell out of the lone root cluster early
        labels[c] = ids[node]
    return labels


def single_linkage_labels(points: np.ndarray, threshold: float, min_cluster_size: int = 2) -> np.ndarray:
    """Connected components under ``distance <= threshold``; small components are noise."""
    points = np.asarray(points, dtype=float)
    n = len(points)
    labels = np.full(n, -1)
    if n == 0:
        return labels
    adj = cdist(points, points) <= threshold
    comp = np.full(n, -1)
    k = 0
    for s in range(n):
        if comp[s] >= 0:
            continue
        stack = [s]
        comp[s] = k
        while stack:
            v = stack.pop()
            for w in np.flatnonzero(adj[v] & (comp < 0)):
                comp[w] = k
                stack.append(int(w))
        k += 1
    nxt = 0
    for c in range(k):
        members = np.flatnonzero(comp == c)
        if len(members) >= min_cluster_size:
            labels[members] = nxt
            nxt += 1
    return labels
