"""Post-hoc analyses of a domain network: balance, lag triangles, k-cores, statistics."""
from __future__ import annotations

import csv
import itertools
import math
from collections import deque
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np


def _undirected(net):
    ids = net.node_ids()
    adj = {i: {} for i in ids}
    for e in net.edges:
        adj[e.src][e.dst] = e
        adj[e.dst][e.src] = e
    return adj


@dataclass
class SignedPartition:
    component: dict  # node -> component index
    pole: dict  # node -> 0/1 (None inside unbalanced components)
    balanced: list  # per component
    conflicts: list = field(default_factory=list)  # edges violating the 2-coloring

    def to_dict(self):
        return {"component": {str(k): v for k, v in self.component.items()},
                "pole": {str(k): v for k, v in self.pole.items()},
                "balanced": self.balanced,
                "conflicts": [list(c) for c in self.conflicts]}


def structural_balance(net) -> SignedPartition:
    """Two-color every connected component so positive edges stay within a pole.

    A component is balanced iff the coloring succeeds, i.e. it has no cycle
    with an odd number of negative edges.
    """
    adj = _undirected(net)
    component, pole, balanced, conflicts = {}, {}, [], []
    for start in sorted(adj):
        if start in component:
            continue
        cid = len(balanced)
        component[start] = cid
        color = {start: 0}
        ok = True
        queue = deque([start])
        while queue:
            u = queue.popleft()
            for v, e in sorted(adj[u].items()):
                want = color[u] if e.r_star > 0 else 1 - color[u]
                if v not in color:
                    color[v] = want
                    component[v] = cid
                    queue.append(v)
                elif color[v] != want:
                    ok = False
                    conflicts.append(tuple(sorted((u, v))))
        balanced.append(ok)
        for v, c in color.items():
            pole[v] = c if ok else None
    return SignedPartition(component, pole, balanced, sorted(set(conflicts)))


@dataclass
class Triangle:
    nodes: tuple
    consistent: bool
    witness: tuple = None  # (lag a->b, lag b->c, lag a->c)


def lag_consistent_triangles(net) -> list:
    """Check every triangle for lags with lag(a->b) + lag(b->c) == lag(a->c).

    Directed edges contribute their range oriented from source to target and
    negated when traversed backwards; undirected edges admit every lag of their
    range with either sign.
    """
    adj = _undirected(net)

    def admissible(e, frm):
        lags = set(e.lag_from(frm))
        if not e.directed:
            lags |= {-t for t in lags}
        return sorted(lags, key=lambda t: (abs(t), t))

    out = []
    for a in sorted(adj):
        for b in sorted(v for v in adj[a] if v > a):
            for c in sorted(v for v in adj[b] if v > b and v in adj[a]):
                ab = admissible(adj[a][b], a)
                bc = admissible(adj[b][c], b)
                ac = set(admissible(adj[a][c], a))
                witness = None
                for x, y in itertools.product(ab, bc):
                    if x + y in ac:
                        witness = (x, y, x + y)
                        break
                out.append(Triangle((a, b, c), witness is not None, witness))
    return out


def core_numbers(adj) -> dict:
    """Core number of every node via iterative minimum-degree peeling."""
    degree = {v: len(nb) for v, nb in adj.items()}
    core = {}
    remaining = set(adj)
    k = 0
    while remaining:
        k = max(k, min(degree[v] for v in remaining))
        peel = [v for v in remaining if degree[v] <= k]
        while peel:
            v = peel.pop()
            if v not in remaining:
                continue
            remaining.discard(v)
            core[v] = k
            for u in adj[v]:
                if u in remaining:
                    degree[u] -= 1
                    if degree[u] <= k:
                        peel.append(u)
    return core


@dataclass
class CoreDecomposition:
    core: dict
    profile: list  # [{"k", "nodes", "edges", "density"}]: what remains after removing degree <= k

    def to_dict(self):
        return {"core": {str(k): v for k, v in self.core.items()}, "profile": self.profile}


def k_core_decomposition(net) -> CoreDecomposition:
    """Core numbers and the density of the network left after each k-shell extraction."""
    adj = {v: set(nb) for v, nb in _undirected(net).items()}
    core = core_numbers(adj)
    profile = []
    kmax = max(core.values(), default=0)
    for k in range(kmax + 1):
        keep = {v for v, c in core.items() if c > k}
        n = len(keep)
        m = sum(1 for v in keep for u in adj[v] if u in keep and u > v)
        density = 2 * m / (n * (n - 1)) if n > 1 else None
        profile.append({"k": k, "nodes": n, "edges": m, "density": density})
    return CoreDecomposition(core, profile)


def _pearson(x, y):
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size < 2:
        return None
    xc = x - x.mean()
    yc = y - y.mean()
    denom = math.sqrt(float(np.dot(xc, xc)) * float(np.dot(yc, yc)))
    if denom < 1e-12:
        return None
    return float(np.dot(xc, yc)) / denom


def degree_assortativity(net):
    """Pearson correlation of endpoint degrees over both orientations of each edge."""
    deg = {n["id"]: n["degree"] for n in net.nodes}
    xs, ys = [], []
    for e in net.edges:
        xs += [deg[e.src], deg[e.dst]]
        ys += [deg[e.dst], deg[e.src]]
    return _pearson(xs, ys)


def network_stats(net, domains=None) -> dict:
    """Summary record: degree/size correlation, assortativity, signs and lags."""
    stats = {"n_nodes": len(net.nodes), "n_edges": len(net.edges)}
    if domains is not None:
        size = {d.id: d.size for d in getattr(domains, "domains", domains)}
        deg = [n["degree"] for n in net.nodes]
        logsize = [math.log10(size[n["id"]]) for n in net.nodes]
        stats["degree_logsize_corr"] = _pearson(deg, logsize)
    stats["assortativity"] = degree_assortativity(net)
    m = len(net.edges)
    if m:
        stats["fraction_negative"] = sum(e.r_star < 0 for e in net.edges) / m
        stats["fraction_directed"] = sum(e.directed for e in net.edges) / m
        hist = {}
        for e in net.edges:
            hist[abs(e.tau_star)] = hist.get(abs(e.tau_star), 0) + 1
        stats["abs_tau_star_fraction"] = {str(k): v / m for k, v in sorted(hist.items())}
        stats["fraction_tau_star_zero"] = hist.get(0, 0) / m
    else:
        stats.update(fraction_negative=None, fraction_directed=None,
                     abs_tau_star_fraction={}, fraction_tau_star_zero=None)
    return stats


def analyze(net, domains=None) -> dict:
    """All analyses as one JSON-ready report."""
    balance = structural_balance(net)
    tri = lag_consistent_triangles(net)
    cores = k_core_decomposition(net)
    return {
        "stats": network_stats(net, domains),
        "balance": balance.to_dict(),
        "triangles": [{"nodes": list(t.nodes), "consistent": t.consistent,
                       "witness": list(t.witness) if t.witness else None} for t in tri],
        "k_core": cores.to_dict(),
    }


def write_report_tables(report: dict, outdir, force: bool = False):
    """CSV tables: per-node core number and pole, per-triangle consistency."""
    outdir = Path(outdir)
    nodes_path = outdir / "nodes.csv"
    tri_path = outdir / "triangles.csv"
    for p in (nodes_path, tri_path):
        if p.exists() and not force:
            raise FileExistsError(f"{p} exists; pass force=True to overwrite")
    core = report["k_core"]["core"]
    bal = report["balance"]
    with nodes_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node", "core", "component", "pole"])
        for node in sorted(bal["component"], key=int):
            pole = bal["pole"].get(node)
            w.writerow([node, core.get(node, 0), bal["component"][node],
                        "" if pole is None else pole])
    with tri_path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["a", "b", "c", "consistent", "lag_ab", "lag_bc", "lag_ac"])
        for t in report["triangles"]:
            wit = t["witness"] or ["", "", ""]
            w.writerow([*t["nodes"], int(t["consistent"]), *wit])
