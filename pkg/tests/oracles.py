"""Brute-force reference implementations used only by the tests."""
import itertools
import math

import numpy as np


def pearson(x, y):
    T = len(x)
    mx, my = sum(x) / T, sum(y) / T
    num = sum((a - mx) * (b - my) for a, b in zip(x, y))
    sx = math.sqrt(sum((a - mx) ** 2 for a in x) / T)
    sy = math.sqrt(sum((b - my) ** 2 for b in y) / T)
    return num / (T * sx * sy)


def lagged(x, y, tau):
    T = len(x)
    if tau < 0:
        return lagged(y, x, -tau)
    mx, my = sum(x) / T, sum(y) / T
    sx = math.sqrt(sum((a - mx) ** 2 for a in x) / T)
    sy = math.sqrt(sum((b - my) ** 2 for b in y) / T)
    return sum((x[t] - mx) * (y[t + tau] - my) for t in range(T - tau)) / (T * sx * sy)


def homogeneity(data, cells):
    cells = list(cells)
    total = 0.0
    for m in cells:
        for n in cells:
            if m != n:
                total += pearson(data[m], data[n])
    return total / (len(cells) * (len(cells) - 1))


def theil_sen(x):
    slopes = sorted((x[j] - x[i]) / (j - i) for i, j in itertools.combinations(range(len(x)), 2))
    n = len(slopes)
    return slopes[n // 2] if n % 2 else 0.5 * (slopes[n // 2 - 1] + slopes[n // 2])


def core_numbers(adj):
    """Textbook definition: k-core = maximal subgraph with min degree >= k."""
    nodes = set(adj)
    core = {v: 0 for v in nodes}
    k = 0
    while True:
        k += 1
        alive = set(nodes)
        changed = True
        while changed:
            changed = False
            for v in list(alive):
                if sum(1 for u in adj[v] if u in alive) < k:
                    alive.discard(v)
                    changed = True
        if not alive:
            return core
        for v in alive:
            core[v] = k


def connected(adj_sets, cells):
    cells = set(cells)
    start = next(iter(cells))
    seen = {start}
    stack = [start]
    while stack:
        u = stack.pop()
        for v in adj_sets[u]:
            if v in cells and v not in seen:
                seen.add(v)
                stack.append(v)
    return seen == cells


def rooted_lcdds(adj_sets, W, root, delta):
    """Largest connected set containing ``root`` with mean pairwise weight > delta."""
    n = len(adj_sets)
    others = [v for v in range(n) if v != root]
    best = None
    for size in range(len(others), 0, -1):
        for extra in itertools.combinations(others, size):
            cells = (root,) + extra
            if not connected(adj_sets, cells):
                continue
            k = len(cells)
            mean = sum(W[a][b] for a in cells for b in cells if a != b) / (k * (k - 1))
            if mean > delta:
                return set(cells)
    return best


def bh(pvalues, q):
    M = len(pvalues)
    ranked = sorted(range(M), key=lambda i: (pvalues[i], i))
    cutoff = 0
    for rank in range(1, M + 1):
        if pvalues[ranked[rank - 1]] <= q * rank / M:
            cutoff = rank
    return {ranked[i] for i in range(cutoff)}


def odd_negative_cycle(nodes, edges):
    """True if some simple cycle has an odd number of negative edges (small graphs)."""
    nodes = sorted(nodes)
    sign = {}
    for a, b, s in edges:
        sign[frozenset((a, b))] = s
    for k in range(3, len(nodes) + 1):
        for combo in itertools.combinations(nodes, k):
            first = combo[0]
            for perm in itertools.permutations(combo[1:]):
                if perm[0] > perm[-1]:
                    continue
                cyc = (first,) + perm
                neg = 0
                ok = True
                for i in range(k):
                    e = frozenset((cyc[i], cyc[(i + 1) % k]))
                    if e not in sign:
                        ok = False
                        break
                    neg += sign[e] < 0
                if ok and neg % 2:
                    return True
    return False
