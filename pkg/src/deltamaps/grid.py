"""Sampling grid as a planar graph: neighborhoods, contiguity and frontiers.

Cells are numbered ``0 .. n_cells-1`` after masked cells have been removed.
For lattice grids, ``flat_index`` maps every graph cell back to its position
``row * cols + col`` in the full rectangle.
"""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .errors import ConfigError, DataError, EmptyGridError

EARTH_RADIUS = 1.0  # haversine on the unit sphere


@dataclass(frozen=True, eq=False)
class GridGraph:
    """Planar adjacency over grid cells.

    ``coord_kind`` is ``"latlon"`` (degrees, geodesic distance), ``"xy"``
    (Euclidean distance) or ``None`` (hop distance along the graph).
    """

    adjacency: tuple
    coords: Optional[np.ndarray] = None
    coord_kind: Optional[str] = None
    cell_weight: Optional[np.ndarray] = None
    wrap_longitude: bool = False
    rows: Optional[int] = None
    cols: Optional[int] = None
    flat_index: Optional[np.ndarray] = None
    _nbr_sets: tuple = field(default=(), repr=False)

    def __post_init__(self):
        n = len(self.adjacency)
        adj = tuple(tuple(sorted(int(j) for j in nb)) for nb in self.adjacency)
        for i, nb in enumerate(adj):
            for j in nb:
                if j == i:
                    raise DataError(f"self-loop at cell {i}")
                if not 0 <= j < n:
                    raise DataError(f"adjacency entry {j} of cell {i} out of range")
        sets = tuple(frozenset(nb) for nb in adj)
        for i, nb in enumerate(adj):
            for j in nb:
                if i not in sets[j]:
                    raise DataError(f"adjacency not symmetric: {i}->{j}")
        weight = self.cell_weight
        if weight is None:
            weight = np.ones(n)
        weight = np.asarray(weight, dtype=float)
        if weight.shape != (n,) or np.any(~(weight > 0)):
            raise DataError("cell_weight must be positive with one entry per cell")
        coords = self.coords
        if coords is not None:
            coords = np.asarray(coords, dtype=float)
            if coords.shape != (n, 2):
                raise DataError("coords must have shape (n_cells, 2)")
            if self.coord_kind not in ("latlon", "xy"):
                raise ConfigError("coord_kind must be 'latlon' or 'xy' when coords given")
        object.__setattr__(self, "adjacency", adj)
        object.__setattr__(self, "_nbr_sets", sets)
        object.__setattr__(self, "cell_weight", weight)
        object.__setattr__(self, "coords", coords)
        if coords is None:
            object.__setattr__(self, "coord_kind", None)

    @property
    def n_cells(self) -> int:
        return len(self.adjacency)

    @property
    def n_edges(self) -> int:
        return sum(len(nb) for nb in self.adjacency) // 2

    def neighbors(self, i: int) -> tuple:
        return self.adjacency[i]

    def row_col(self, i: int):
        """(row, col) of a lattice cell, or ``None`` for mesh graphs."""
        if self.flat_index is None:
            return None
        flat = int(self.flat_index[i])
        return divmod(flat, self.cols)

    def distances_from(self, i: int, cells: Sequence[int]) -> np.ndarray:
        """Metric distance from cell ``i`` to each of ``cells``.

        Only defined for grids with coordinates; hop distances are produced
        by the breadth-first search in :func:`k_neighborhood`.
        """
        cells = np.asarray(cells, dtype=int)
        if self.coords is None:
            raise ConfigError("grid has no coordinates")
        a = self.coords[i]
        b = self.coords[cells]
        if self.coord_kind == "latlon":
            lat1, lon1 = np.radians(a)
            lat2, lon2 = np.radians(b[:, 0]), np.radians(b[:, 1])
            h = (np.sin((lat2 - lat1) / 2) ** 2
                 + np.cos(lat1) * np.cos(lat2) * np.sin((lon2 - lon1) / 2) ** 2)
            return 2 * EARTH_RADIUS * np.arcsin(np.sqrt(np.clip(h, 0.0, 1.0)))
        d = b - a
        if self.wrap_longitude and self.cols is not None:
            dc = np.abs(d[:, 1])
            d[:, 1] = np.minimum(dc, self.cols - dc)
        return np.hypot(d[:, 0], d[:, 1])


def build_grid(rows: int, cols: int, mask=None, lat=None, lon=None,
               wrap_longitude: bool = False, connectivity: int = 4) -> GridGraph:
    """Build a lattice graph over the unmasked cells of a ``rows x cols`` grid.

    ``mask`` is a boolean array (flat or 2-D) where ``True`` marks a cell to
    exclude, following the numpy masked-array convention.  Per-cell ``lat`` and
    ``lon`` (degrees) switch distances to great-circle and set the cell weight
    to ``cos(lat)``; without them, coordinates are the (row, col) indices.
    """
    if rows <= 0 or cols <= 0:
        raise ConfigError("rows and cols must be positive")
    if connectivity not in (4, 8):
        raise ConfigError("connectivity must be 4 or 8")
    size = rows * cols
    if mask is None:
        mask = np.zeros(size, dtype=bool)
    mask = np.asarray(mask, dtype=bool).reshape(-1)
    if mask.size != size:
        raise DataError(f"mask has {mask.size} entries, expected {size}")
    keep = np.flatnonzero(~mask)
    if keep.size == 0:
        raise EmptyGridError("all cells are masked")
    graph_id = np.full(size, -1, dtype=int)
    graph_id[keep] = np.arange(keep.size)

    steps = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    if connectivity == 8:
        steps += [(-1, -1), (-1, 1), (1, -1), (1, 1)]
    adjacency = []
    for flat in keep:
        r, c = divmod(int(flat), cols)
        nb = set()
        for dr, dc in steps:
            rr, cc = r + dr, c + dc
            if not 0 <= rr < rows:
                continue
            if wrap_longitude:
                cc %= cols
            elif not 0 <= cc < cols:
                continue
            j = graph_id[rr * cols + cc]
            if j >= 0 and j != graph_id[flat]:
                nb.add(int(j))
        adjacency.append(nb)

    if (lat is None) != (lon is None):
        raise ConfigError("lat and lon must be given together")
    if lat is not None:
        lat = np.asarray(lat, dtype=float).reshape(-1)
        lon = np.asarray(lon, dtype=float).reshape(-1)
        if lat.size != size or lon.size != size:
            raise DataError("lat/lon must have one entry per grid cell")
        coords = np.column_stack([lat[keep], lon[keep]])
        weight = np.cos(np.radians(coords[:, 0]))
        # cells exactly at a pole would get zero weight
        weight = np.maximum(weight, 1e-12)
        kind = "latlon"
    else:
        coords = np.column_stack(divmod(keep, cols)).astype(float)
        weight = np.ones(keep.size)
        kind = "xy"
    return GridGraph(adjacency=tuple(adjacency), coords=coords, coord_kind=kind,
                     cell_weight=weight, wrap_longitude=wrap_longitude,
                     rows=rows, cols=cols, flat_index=keep)


def from_adjacency(adjacency, coords=None, coord_kind="xy", cell_weight=None) -> GridGraph:
    """Graph for meshes given as explicit adjacency lists."""
    return GridGraph(adjacency=tuple(adjacency), coords=coords,
                     coord_kind=coord_kind if coords is not None else None,
                     cell_weight=cell_weight)


def k_neighborhood(g: GridGraph, i: int, K: int, exclude=None) -> list:
    """The cell ``i`` plus its ``K`` nearest cells, as a contiguous set.

    Candidates are ordered by ``(distance, cell id)``.  Cells are taken
    greedily in that order among those adjacent to the cells selected so far,
    so the plain K-nearest set is returned whenever it is contiguous and a
    farther contiguous cell substitutes otherwise.  ``exclude`` is an optional
    boolean array of cells that may not participate.
    """
    n = g.n_cells
    if K < 1:
        raise ConfigError("K must be >= 1")
    if K >= n:
        raise ConfigError(f"K={K} needs at least {K + 1} cells, grid has {n}")
    if not 0 <= i < n:
        raise DataError(f"cell {i} out of range")
    if exclude is not None and exclude[i]:
        raise DataError(f"cell {i} is excluded")

    hop = {i: 0}
    frontier = [i]
    metric = g.coords is not None
    dist = {i: 0.0}
    kth = np.inf
    depth = 0
    while frontier:
        depth += 1
        nxt = []
        for u in frontier:
            for v in g.adjacency[u]:
                if v in hop or (exclude is not None and exclude[v]):
                    continue
                hop[v] = depth
                nxt.append(v)
        if not nxt:
            break
        nxt.sort()
        if metric:
            dnew = g.distances_from(i, nxt)
            dist.update(zip(nxt, dnew.tolist()))
            ring_min = float(dnew.min())
        else:
            dist.update((v, float(depth)) for v in nxt)
            ring_min = float(depth)
        if len(dist) > K:
            if ring_min > kth:
                break
            kth = sorted(dist.values())[K]
        frontier = nxt
    if len(dist) <= K:
        raise DataError(f"only {len(dist) - 1} cells reachable from cell {i}, K={K}")

    order = sorted((d, v) for v, d in dist.items() if v != i)
    selected = [i]
    chosen = {i}
    while len(selected) <= K:
        for pos, (_, v) in enumerate(order):
            if not g._nbr_sets[v].isdisjoint(chosen):
                selected.append(v)
                chosen.add(v)
                del order[pos]
                break
        else:  # pragma: no cover - BFS pool is connected to i
            raise DataError(f"cannot build a contiguous neighborhood around cell {i}")
    return selected


def neighborhood_table(g: GridGraph, K: int, exclude=None) -> np.ndarray:
    """Array of shape (n_cells, K+1) with Γ_K(i) per row.

    Rows are -1 for excluded cells and for cells whose reachable component
    is smaller than K+1.
    """
    table = np.full((g.n_cells, K + 1), -1, dtype=np.int64)
    for i in range(g.n_cells):
        if exclude is not None and exclude[i]:
            continue
        try:
            table[i] = k_neighborhood(g, i, K, exclude)
        except DataError:
            continue
    return table


def is_contiguous(g: GridGraph, cells: Iterable[int]) -> bool:
    """True iff the induced subgraph on ``cells`` is connected."""
    members = set(int(c) for c in cells)
    if not members:
        raise DataError("empty cell set")
    start = next(iter(members))
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in g.adjacency[u]:
            if v in members and v not in seen:
                seen.add(v)
                queue.append(v)
    return len(seen) == len(members)


def frontier_cells(g: GridGraph, cells: Iterable[int]) -> set:
    """Cells outside ``cells`` with at least one neighbor inside."""
    members = set(int(c) for c in cells)
    out = set()
    for u in members:
        out.update(g.adjacency[u])
    return out - members
