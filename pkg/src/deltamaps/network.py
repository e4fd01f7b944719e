"""Domain-level functional network: signals, correlograms, FDR edges, lag ranges."""
from __future__ import annotations

import csv
import json
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from . import kernels
from .errors import ConfigError, DataError, DegenerateSeriesError
from .stats import Correlogram, acf, bartlett_sum, correlogram_from_parts


@dataclass
class DomainSignal:
    domain_id: int
    values: np.ndarray
    mode: str

    @property
    def std(self) -> float:
        return float(self.values.std())


def domain_signal(field, domain, mode: str = "mean", g=None) -> DomainSignal:
    """Mean, or cell-weight-weighted sum, of the member time series."""
    data = np.asarray(getattr(field, "data", field))
    cells = list(getattr(domain, "cells", domain))
    if not cells:
        raise DataError("empty domain")
    if mode == "mean":
        values = data[cells].mean(axis=0)
    elif mode == "area_weighted_sum":
        g = g if g is not None else field.grid
        values = g.cell_weight[cells] @ data[cells]
    else:
        raise ConfigError("mode must be 'mean' or 'area_weighted_sum'")
    return DomainSignal(int(getattr(domain, "id", -1)), values, mode)


def benjamini_hochberg(pvalues, q: float, conservative: bool = False) -> np.ndarray:
    """Boolean acceptance mask of the Benjamini-Hochberg step-up procedure.

    Accepts the ``m`` smallest p-values, where ``m`` is the largest rank with
    ``p_(m) <= q * m / M``.  ``conservative`` divides ``q`` by the harmonic
    sum ``sum_{i<=M} 1/i`` (valid under arbitrary dependence).
    """
    p = np.asarray(pvalues, dtype=float).ravel()
    M = p.size
    accepted = np.zeros(M, dtype=bool)
    if M == 0 or q <= 0:
        return accepted
    if conservative:
        q = q / np.sum(1.0 / np.arange(1, M + 1))
    order = np.argsort(p, kind="stable")
    passing = np.flatnonzero(p[order] <= q * np.arange(1, M + 1) / M)
    if passing.size:
        accepted[order[:passing[-1] + 1]] = True
    return accepted


@dataclass
class LagInference:
    lag_lo: int
    lag_hi: int
    tau_star: int
    r_star: float
    directed: bool
    forward: bool  # True: first series precedes (or undirected); False: second precedes
    islands: list = field(default_factory=list)


def lag_range_and_direction(c: Correlogram, use_band: bool = True) -> Optional[LagInference]:
    """Lag range around the peak significant correlation.

    tau* maximizes |r| among significant lags (lowest |tau|, then lowest tau,
    on ties).  The range is the maximal contiguous run of significant
    same-sign lags around tau* with |r| >= |r*| - sqrt(Var[r(tau*)]).
    """
    sig = np.asarray(c.significant, dtype=bool)
    if not sig.any():
        return None
    lags = c.lags
    idx = np.flatnonzero(sig)
    absr = np.abs(c.r[idx])
    best = absr.max()
    ties = idx[absr == best]
    k = min(ties, key=lambda i: (abs(lags[i]), lags[i]))
    r_star = float(c.r[k])
    floor = abs(r_star) - float(np.sqrt(c.variance[k])) if use_band else -np.inf

    def ok(i):
        return sig[i] and np.sign(c.r[i]) == np.sign(r_star) and abs(c.r[i]) >= floor

    lo = hi = k
    while lo - 1 >= 0 and ok(lo - 1):
        lo -= 1
    while hi + 1 < len(lags) and ok(hi + 1):
        hi += 1
    lag_lo, lag_hi = int(lags[lo]), int(lags[hi])
    directed = not lag_lo <= 0 <= lag_hi
    forward = not directed or lag_lo > 0
    islands = [int(lags[i]) for i in idx if i < lo or i > hi]
    return LagInference(lag_lo, lag_hi, int(lags[k]), r_star, directed, forward, islands)


def edge_weight(a, b, r_star: float) -> float:
    """Covariance weight sigma_a * sigma_b * r* (1/T standard deviations)."""
    va = np.asarray(getattr(a, "values", a))
    vb = np.asarray(getattr(b, "values", b))
    return float(va.std() * vb.std() * r_star)


@dataclass
class Edge:
    src: int
    dst: int
    directed: bool
    lag_lo: int
    lag_hi: int
    tau_star: int
    r_star: float
    weight: float
    variance_at_tau_star: float
    islands: list = field(default_factory=list)

    @property
    def lag_range(self):
        return (self.lag_lo, self.lag_hi)

    def lag_from(self, node: int):
        """Admissible lags measured from ``node`` to the other endpoint."""
        lo, hi = (self.lag_lo, self.lag_hi) if node == self.src else (-self.lag_hi, -self.lag_lo)
        return range(lo, hi + 1)


@dataclass
class DomainNetwork:
    nodes: list  # [{"id", "strength", "degree"}]
    edges: list
    q: float
    tau_max: int
    M: int
    correlograms: dict = field(default_factory=dict, repr=False)

    def node_ids(self):
        return [n["id"] for n in self.nodes]

    def edge_between(self, a: int, b: int) -> Optional[Edge]:
        for e in self.edges:
            if {e.src, e.dst} == {a, b}:
                return e
        return None

    def to_dict(self) -> dict:
        return {
            "q": self.q, "tau_max": self.tau_max, "M": self.M,
            "nodes": [dict(n) for n in self.nodes],
            "edges": [
                {"src": e.src, "dst": e.dst, "directed": e.directed, "lag_lo": e.lag_lo,
                 "lag_hi": e.lag_hi, "tau_star": e.tau_star, "r_star": e.r_star,
                 "weight": e.weight, "variance_at_tau_star": e.variance_at_tau_star,
                 "islands": list(e.islands)}
                for e in self.edges
            ],
        }

    @classmethod
    def from_dict(cls, obj) -> "DomainNetwork":
        edges = [Edge(int(e["src"]), int(e["dst"]), bool(e["directed"]), int(e["lag_lo"]),
                      int(e["lag_hi"]), int(e["tau_star"]), float(e["r_star"]),
                      float(e["weight"]), float(e.get("variance_at_tau_star", float("nan"))),
                      list(e.get("islands", [])))
                 for e in obj["edges"]]
        return cls([dict(n) for n in obj["nodes"]], edges, float(obj["q"]),
                   int(obj["tau_max"]), int(obj["M"]))


def _node_table(ids, edges):
    strength = {i: 0.0 for i in ids}
    degree = {i: 0 for i in ids}
    for e in edges:
        for v in (e.src, e.dst):
            strength[v] += abs(e.weight)
            degree[v] += 1
    return [{"id": i, "strength": strength[i], "degree": degree[i]} for i in ids]


def _check_tau_max(tau_max, T):
    if tau_max < 0:
        raise ConfigError("tau_max must be >= 0")
    if tau_max > T / 2:
        raise ConfigError(f"tau_max={tau_max} exceeds T/2 (T={T})")
    if tau_max > T / 4:
        warnings.warn(f"tau_max={tau_max} is above T/4; correlogram estimates are poor")


def pair_correlogram(a, b, tau_max: int, unbiased: bool = False) -> Correlogram:
    """Correlogram of two domain signals (significance flags unset)."""
    from .stats import correlogram

    va = np.asarray(getattr(a, "values", a))
    _check_tau_max(tau_max, va.size)
    return correlogram(va, getattr(b, "values", b), tau_max, unbiased=unbiased)


def correlograms(signals, tau_max: int, unbiased: bool = False, workers: int = 1) -> dict:
    """Correlograms for every unordered pair ``(i, j)``, i < j, of a signal list."""
    X = np.array([np.asarray(getattr(s, "values", s), dtype=float) for s in signals])
    n, T = X.shape
    _check_tau_max(tau_max, T)
    Xc = X - X.mean(axis=1, keepdims=True)
    sd = np.sqrt(np.einsum("ij,ij->i", Xc, Xc) / T)
    if np.any(sd ** 2 < 1e-12):
        raise DegenerateSeriesError("degenerate domain signal", cell=int(np.argmin(sd)))
    acfs = [acf(x) for x in X]
    pairs = [(i, j) for i in range(n) for j in range(i + 1, n)]
    if not pairs:
        return {}
    if workers and workers > 1:
        chunks = [c for c in np.array_split(np.arange(len(pairs)), workers) if c.size]
        arr = np.asarray(pairs)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            parts = list(pool.map(
                lambda c: kernels.lagged_products_batch(Xc, arr[c], tau_max), chunks))
        products = np.vstack(parts)
    else:
        products = kernels.lagged_products_batch(Xc, pairs, tau_max)
    out = {}
    for k, (i, j) in enumerate(pairs):
        out[(i, j)] = correlogram_from_parts(products[k], T, sd[i], sd[j],
                                             bartlett_sum(acfs[i], acfs[j]), tau_max, unbiased)
    return out


def infer_network(field, domains, tau_max: int, q: float, mode: str = "mean",
                  g=None, unbiased: bool = False, conservative: bool = False,
                  weight_mode: str = "peak", workers: int = 1,
                  keep_correlograms: bool = False) -> DomainNetwork:
    """Build the network: correlograms, global BH over all tests, lag ranges, weights."""
    doms = list(getattr(domains, "domains", domains))
    ids = [int(d.id) for d in doms]
    signals = [domain_signal(field, d, mode, g) for d in doms]
    n = len(doms)
    M = n * (n - 1) // 2 * (2 * tau_max + 1)
    if n < 2:
        return DomainNetwork(_node_table(ids, []), [], q, tau_max, 0)
    cgs = correlograms(signals, tau_max, unbiased=unbiased, workers=workers)
    keys = sorted(cgs)
    pvals = np.concatenate([cgs[k].p for k in keys])
    assert pvals.size == M
    accepted = benjamini_hochberg(pvals, q, conservative=conservative)
    width = 2 * tau_max + 1
    edges = []
    for pos, key in enumerate(keys):
        c = cgs[key]
        c.significant = accepted[pos * width:(pos + 1) * width].copy()
        inf = lag_range_and_direction(c)
        if inf is None:
            continue
        i, j = key
        a, b = signals[i], signals[j]
        r_use = inf.r_star
        if weight_mode == "mean":
            r_use = float(np.mean(c.r[c.at(inf.lag_lo):c.at(inf.lag_hi) + 1]))
        elif weight_mode != "peak":
            raise ConfigError("weight_mode must be 'peak' or 'mean'")
        w = edge_weight(a, b, r_use)
        var_star = float(c.variance[c.at(inf.tau_star)])
        # undirected edges are stored from the lower to the higher domain id
        forward = inf.forward if inf.directed else ids[i] < ids[j]
        if forward:
            edges.append(Edge(ids[i], ids[j], inf.directed, inf.lag_lo, inf.lag_hi,
                              inf.tau_star, inf.r_star, w, var_star, inf.islands))
        else:
            edges.append(Edge(ids[j], ids[i], inf.directed, -inf.lag_hi, -inf.lag_lo,
                              -inf.tau_star, inf.r_star, w, var_star,
                              sorted(-t for t in inf.islands)))
    net = DomainNetwork(_node_table(ids, edges), edges, q, tau_max, M)
    if keep_correlograms:
        net.correlograms = {(ids[i], ids[j]): c for (i, j), c in cgs.items()}
    return net


def write_network(net: DomainNetwork, path, force: bool = False):
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force=True to overwrite")
    path.write_text(json.dumps(net.to_dict(), indent=1) + "\n", encoding="utf-8")


def read_network(path) -> DomainNetwork:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"network file not found: {path}")
    return DomainNetwork.from_dict(json.loads(path.read_text(encoding="utf-8")))


def write_edge_csv(net: DomainNetwork, path, force: bool = False):
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force=True to overwrite")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["src", "dst", "directed", "lag_lo", "lag_hi", "tau_star", "r_star", "weight"])
        for e in net.edges:
            w.writerow([e.src, e.dst, int(e.directed), e.lag_lo, e.lag_hi, e.tau_star,
                        repr(e.r_star), repr(e.weight)])


def write_correlogram_csv(c: Correlogram, path, force: bool = False):
    """One row per lag: tau, r, std, z, p, significant."""
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force=True to overwrite")
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["tau", "r", "std", "z", "p", "significant"])
        for k, tau in enumerate(c.lags):
            w.writerow([int(tau), repr(float(c.r[k])), repr(float(np.sqrt(c.variance[k]))),
                        repr(float(c.z[k])), repr(float(c.p[k])), int(c.significant[k])])
