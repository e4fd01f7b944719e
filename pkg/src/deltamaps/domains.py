"""Greedy identification of spatially contiguous, possibly overlapping domains.

Two phases: seeds are local maxima (above delta) of the local-homogeneity
field; each seed then starts a candidate domain that grows through
alternating greedy merging and expansion rounds until neither is possible.
"""
from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, field
from math import comb
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError
from .grid import GridGraph, frontier_cells, is_contiguous, neighborhood_table
from .stats import homogeneity_field, pair_sum_of, standardize

log = logging.getLogger(__name__)


@dataclass
class Domain:
    id: int
    cells: tuple
    seeds: tuple
    core: tuple
    homogeneity: float
    pair_sum: float

    @property
    def size(self) -> int:
        return len(self.cells)


@dataclass
class DomainSet:
    domains: list
    delta: float
    K: int
    n_cells: int
    homogeneity_field: np.ndarray = field(default=None, repr=False)
    seeds: tuple = ()

    @property
    def N(self) -> int:
        return len(self.domains)

    @property
    def cell_to_domains(self) -> list:
        out = [[] for _ in range(self.n_cells)]
        for d in self.domains:
            for c in d.cells:
                out[c].append(d.id)
        return out

    def by_id(self, domain_id: int) -> Domain:
        for d in self.domains:
            if d.id == domain_id:
                return d
        raise KeyError(domain_id)

    def to_dict(self) -> dict:
        return {
            "delta": self.delta,
            "K": self.K,
            "n_cells": self.n_cells,
            "domains": [
                {"id": d.id, "size": d.size, "seed_cells": list(d.seeds),
                 "core_cells": list(d.core), "cells": list(d.cells),
                 "homogeneity": d.homogeneity}
                for d in self.domains
            ],
            "cell_to_domains": self.cell_to_domains,
        }

    @classmethod
    def from_dict(cls, obj: dict) -> "DomainSet":
        domains = []
        for d in obj["domains"]:
            domains.append(Domain(int(d["id"]), tuple(d["cells"]), tuple(d["seed_cells"]),
                                  tuple(d["core_cells"]), float(d["homogeneity"]),
                                  float("nan")))
        n_cells = obj.get("n_cells", len(obj.get("cell_to_domains", [])))
        return cls(domains, float(obj["delta"]), int(obj["K"]), int(n_cells))


def write_domains(ds: DomainSet, path, force: bool = False):
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force=True to overwrite")
    path.write_text(json.dumps(ds.to_dict(), indent=1) + "\n", encoding="utf-8")


def read_domains(path) -> DomainSet:
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"domains file not found: {path}")
    return DomainSet.from_dict(json.loads(path.read_text(encoding="utf-8")))


def write_cell_table(ds: DomainSet, g: GridGraph, path, force: bool = False):
    """Per-cell CSV: cell id, row, col, homogeneity, ';'-joined domain ids."""
    path = Path(path)
    if path.exists() and not force:
        raise FileExistsError(f"{path} exists; pass force=True to overwrite")
    hom = ds.homogeneity_field
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["cell", "row", "col", "local_homogeneity", "is_seed", "domains"])
        seeds = set(ds.seeds)
        for cell, ids in enumerate(ds.cell_to_domains):
            rc = g.row_col(cell) or ("", "")
            h = "" if hom is None or not np.isfinite(hom[cell]) else repr(float(hom[cell]))
            w.writerow([cell, rc[0], rc[1], h, int(cell in seeds), ";".join(map(str, ids))])


class _Candidate:
    """Mutable candidate domain with an incremental pair-sum."""

    __slots__ = ("id", "cells", "frontier", "u", "pair_sum", "seeds", "version",
                 "stalled", "seed_score")

    def __init__(self, cid, cell, z, g, usable, seed_score):
        self.id = cid
        self.cells = {cell}
        self.frontier = {v for v in g.adjacency[cell] if usable[v]}
        self.u = z[cell].copy()
        self.pair_sum = 0.0
        self.seeds = {cell}
        self.version = 0
        self.stalled = False
        self.seed_score = seed_score

    @property
    def n(self):
        return len(self.cells)

    @property
    def homogeneity(self):
        if self.n < 2:
            return self.seed_score
        return self.pair_sum / comb(self.n, 2)

    def touches(self, other) -> bool:
        return not (self.cells.isdisjoint(other.cells)
                    and self.cells.isdisjoint(other.frontier))


class _Grower:
    def __init__(self, z, usable, g, delta, rhat, rule="cell"):
        if rule not in ("cell", "set"):
            raise ConfigError("expansion rule must be 'cell' or 'set'")
        self.rule = rule
        self.z = z
        self.T = z.shape[1]
        self.usable = usable
        self.g = g
        self.delta = delta
        self.rhat = rhat
        self._union_cache = {}

    def union_terms(self, a, b):
        key = (a.id, a.version, b.id, b.version)
        hit = self._union_cache.get(key)
        if hit is not None:
            return hit
        extra = sorted(b.cells - a.cells)
        u_m, s_m = pair_sum_of(self.z, extra)
        total = a.pair_sum + float(np.dot(a.u, u_m)) / self.T + s_m
        n = a.n + len(extra)
        res = (total / comb(n, 2), total)
        if len(self._union_cache) > 100_000:
            self._union_cache.clear()
        self._union_cache[key] = res
        return res

    def union_homogeneity(self, a, b) -> float:
        if a.id > b.id:
            a, b = b, a
        return self.union_terms(a, b)[0]

    def best_merge(self, cands):
        """Adjacent pair with maximum union homogeneity above delta, else None."""
        best = None
        best_h = -np.inf
        ordered = sorted(cands, key=lambda c: c.id)
        for i, a in enumerate(ordered):
            for b in ordered[i + 1:]:
                if not a.touches(b):
                    continue
                h = self.union_homogeneity(a, b)
                if h > best_h:
                    best_h, best = h, (a, b)
        if best is None or not best_h > self.delta:
            return None
        return best[0], best[1], best_h

    def merge(self, cands, a, b):
        if a.id > b.id:
            a, b = b, a
        if not a.touches(b):
            raise DataError(f"domains {a.id} and {b.id} are not adjacent")
        h, total = self.union_terms(a, b)
        extra = sorted(b.cells - a.cells)
        u_m, _ = pair_sum_of(self.z, extra)
        if not h > self.delta:
            raise DataError(f"union of {a.id} and {b.id} has homogeneity {h} <= delta")
        a.cells.update(extra)
        a.u = a.u + u_m
        a.pair_sum = total
        a.seeds |= b.seeds
        a.frontier = (a.frontier | b.frontier) - a.cells
        a.version += 1
        a.stalled = False
        cands.remove(b)
        return a

    def can_merge(self, a, cands) -> bool:
        for b in cands:
            if b is not a and a.touches(b) and self.union_homogeneity(a, b) > self.delta:
                return True
        return False

    def expand(self, a) -> bool:
        """Add the frontier cell maximizing the union homogeneity, if above delta."""
        if a.stalled or not a.frontier:
            a.stalled = True
            return False
        front = np.fromiter(sorted(a.frontier), dtype=np.int64)
        totals = a.pair_sum + (self.z[front] @ a.u) / self.T
        scores = totals / comb(a.n + 1, 2)
        k = int(np.argmax(scores))  # first maximum -> lowest cell id
        if self.rule == "cell":
            # mean correlation of the candidate with the current members
            accept = (totals[k] - a.pair_sum) / a.n > self.delta
        else:
            accept = scores[k] > self.delta
        if not accept:
            a.stalled = True
            return False
        m = int(front[k])
        a.cells.add(m)
        a.u = a.u + self.z[m]
        a.pair_sum = float(totals[k])
        a.frontier.discard(m)
        a.frontier.update(v for v in self.g.adjacency[m]
                          if self.usable[v] and v not in a.cells)
        a.version += 1
        return True


def select_seeds(z, table, rhat, delta) -> list:
    """Cells whose local homogeneity exceeds delta and is maximal in Γ_K."""
    seeds = []
    for i in range(table.shape[0]):
        h = rhat[i]
        if not np.isfinite(h) or not h > delta:
            continue
        nb = table[i]
        if np.all(h >= rhat[nb]):
            seeds.append(i)
    return seeds


def _prepare(field, g, K):
    data = np.asarray(getattr(field, "data", field), dtype=np.float64)
    if g is None:
        g = field.grid
    if data.shape[0] != g.n_cells:
        raise DataError("field and grid sizes differ")
    z, degenerate = standardize(data)
    if degenerate.any():
        log.info("%d degenerate cells excluded", int(degenerate.sum()))
    table = neighborhood_table(g, K, exclude=degenerate)
    rhat = homogeneity_field(z, table)
    return g, z, ~degenerate, table, rhat


def find_seeds(field, g=None, K=4, delta=0.5) -> list:
    g, z, usable, table, rhat = _prepare(field, g, K)
    return select_seeds(z, table, rhat, delta)


def identify_domains(field, g: GridGraph = None, K: int = 4, delta: float = 0.5,
                     expansion_rule: str = "cell", max_iterations=None) -> DomainSet:
    """Run seed selection then greedy merging/expansion to a fixpoint.

    Each expansion step picks the frontier cell that maximizes the homogeneity
    of the enlarged domain.  With ``expansion_rule="cell"`` the cell is added
    only if its mean correlation with the current members exceeds ``delta``;
    with ``"set"`` it suffices that the enlarged domain's homogeneity does.
    The ``"cell"`` test implies the ``"set"`` one, so every domain satisfies
    homogeneity > delta either way, but ``"set"`` lets large domains absorb
    weakly correlated periphery until their average reaches ``delta``.
    """
    if K < 1:
        raise ConfigError("K must be >= 1")
    if not 0 < delta < 1:
        raise ConfigError("delta must lie in (0, 1)")
    g, z, usable, table, rhat = _prepare(field, g, K)
    seeds = select_seeds(z, table, rhat, delta)
    log.info("%d seeds at delta=%.3f, K=%d", len(seeds), delta, K)

    grower = _Grower(z, usable, g, delta, rhat, expansion_rule)
    cands = [_Candidate(k, s, z, g, usable, float(rhat[s])) for k, s in enumerate(seeds)]
    limit = max_iterations or max(1, g.n_cells * max(1, len(seeds))) + 10

    def merging():
        merged = False
        while True:
            best = grower.best_merge(cands)
            if best is None:
                return merged
            grower.merge(cands, best[0], best[1])
            merged = True

    def expansion():
        expanded = False
        start_merging = False
        while not start_merging:
            round_expanded = False
            order = sorted(cands, key=lambda c: (-c.homogeneity, c.id))
            for a in order:
                if grower.expand(a):
                    round_expanded = expanded = True
                    if grower.can_merge(a, cands):
                        start_merging = True
                        break
            if not round_expanded:
                break
        return expanded

    iterations = 0
    while True:
        iterations += 1
        if iterations > limit:
            raise RuntimeError("domain identification did not terminate")
        merged = merging()
        expanded = expansion()
        if not merged and not expanded:
            break

    final = [c for c in cands if c.n >= 2]
    final.sort(key=lambda c: (-c.n, min(c.cells)))
    domains = []
    for new_id, c in enumerate(final):
        cells = tuple(sorted(c.cells))
        _, s = pair_sum_of(z, cells)
        hom = s / comb(len(cells), 2)
        scores = rhat[list(cells)]
        top = np.nanmax(scores)
        core = tuple(cell for cell, h in zip(cells, scores) if h == top)
        domains.append(Domain(new_id, cells, tuple(sorted(c.seeds)), core, float(hom), float(s)))
    return DomainSet(domains, float(delta), int(K), g.n_cells,
                     homogeneity_field=rhat, seeds=tuple(seeds))


def _standalone(field, g):
    data = np.asarray(getattr(field, "data", field), dtype=np.float64)
    if g is None:
        g = field.grid
    z, degenerate = standardize(data)
    return g, z, ~degenerate


def _to_candidate(d: Domain, z, g, usable):
    cells = sorted(d.cells)
    c = _Candidate(d.id, cells[0], z, g, usable, d.homogeneity)
    c.cells = set(cells)
    c.seeds = set(d.seeds)
    c.u, c.pair_sum = pair_sum_of(z, cells)
    c.frontier = {v for v in frontier_cells(g, cells) if usable[v]}
    return c


def _to_domain(c, z, rhat=None) -> Domain:
    cells = tuple(sorted(c.cells))
    hom = c.pair_sum / comb(len(cells), 2) if len(cells) > 1 else float("nan")
    if rhat is None:
        core = tuple(sorted(c.seeds & c.cells))
    else:
        scores = rhat[list(cells)]
        core = tuple(cell for cell, h in zip(cells, scores) if h == np.nanmax(scores))
    return Domain(c.id, cells, tuple(sorted(c.seeds)), core, float(hom), float(c.pair_sum))


def expand_domain_step(field, g, d: Domain, delta: float, expansion_rule: str = "cell") -> Domain:
    """One expansion step of ``d``: returns the grown domain, or ``d`` unchanged."""
    g, z, usable = _standalone(field, g)
    c = _to_candidate(d, z, g, usable)
    if not _Grower(z, usable, g, delta, None, expansion_rule).expand(c):
        return d
    out = _to_domain(c, z)
    out.core = d.core
    return out


def find_best_merge(field, g, domains, delta: float):
    """``(id, id, union homogeneity)`` of the best adjacent pair above delta, or None."""
    g, z, usable = _standalone(field, g)
    cands = [_to_candidate(d, z, g, usable) for d in domains]
    best = _Grower(z, usable, g, delta, None).best_merge(cands)
    if best is None:
        return None
    return best[0].id, best[1].id, float(best[2])


def merge_domains(field, g, domains, a_id: int, b_id: int, delta: float, K: int = None) -> list:
    """Replace domains ``a_id`` and ``b_id`` with their union (keeps the lower id).

    Raises :class:`DataError` if the pair is not adjacent or its union is not
    above ``delta``.  With ``K`` the core is recomputed from the local
    homogeneity field, otherwise it is the seeds of the union.
    """
    g, z, usable = _standalone(field, g)
    cands = [_to_candidate(d, z, g, usable) for d in domains]
    by_id = {c.id: c for c in cands}
    if a_id not in by_id or b_id not in by_id or a_id == b_id:
        raise DataError(f"unknown or repeated domain ids {a_id}, {b_id}")
    kept = _Grower(z, usable, g, delta, None).merge(cands, by_id[a_id], by_id[b_id])
    rhat = None
    if K is not None:
        rhat = homogeneity_field(z, neighborhood_table(g, K, exclude=~usable))
    gone = b_id if kept.id == a_id else a_id
    return [_to_domain(kept, z, rhat) if d.id == kept.id else d
            for d in domains if d.id != gone]


def check_domain(field, g, d: Domain, delta) -> list:
    """Violations of the seed / contiguity / homogeneity constraints (empty if valid)."""
    from .stats import set_homogeneity

    problems = []
    if not set(d.seeds) & set(d.cells):
        problems.append("no seed inside domain")
    if not is_contiguous(g, d.cells):
        problems.append("not contiguous")
    if len(d.cells) >= 2 and not set_homogeneity(field, d.cells) > delta:
        problems.append("homogeneity not above delta")
    return problems
