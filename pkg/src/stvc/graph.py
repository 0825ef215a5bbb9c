"""Neighbourhood systems on the (unit, time) lattice.

Sites are pairs (unit, time) with 1 <= unit <= n and 1 <= time <= T.
Internally a site maps to the flat id ``(unit - 1) * T + (time - 1)``, so
ascending ids enumerate sites unit-major, time-minor; neighbour lists are
kept in that order, which makes all downstream iteration (and therefore
seeded sampling) reproducible.

Four neighbourhood kinds are supported:

    spatial    {(j, t) : j ~ i or j = i}                 same-time slice
    temporal   {(i, s) : max(1, t - q) <= s <= t}        own past, order q
    union      spatial | temporal
    product    {(j, s) : j ~ i or j = i,
                max(1, t - q) <= s <= t}                 past of every
                                                         spatial neighbour

"~" is the symmetric spatial adjacency of the units.  Every forward set
contains its own site.  The reversed set of (i, t) collects the sites
whose forward set contains (i, t); spatial adjacency is reciprocal so the
spatial system is self-reversed, while temporal lags are directed and the
reversed sets look forward in time.  Temporal lags that would fall before
time 1 are dropped, so neighbourhoods shrink near the start of the series.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Iterable, Mapping, Sequence

import numpy as np

Site = tuple[int, int]

KINDS = ("spatial", "temporal", "union", "product")


@dataclass(frozen=True)
class AdjacencySpec:
    """Symmetric unit adjacency: unordered pairs {i, j} with i != j.

    ``asymmetries`` counts edges that were declared in only one direction
    in the source text and had to be symmetrised.
    """

    n: int
    edges: frozenset[tuple[int, int]]
    asymmetries: int = 0

    def __post_init__(self):
        for i, j in self.edges:
            if not (1 <= i < j <= self.n):
                raise ValueError(f"edge ({i},{j}) outside 1..{self.n} or not ordered")

    def neighbors(self, unit: int) -> list[int]:
        """Units adjacent to ``unit``, ascending (excludes the unit itself)."""
        out = [j for i, j in self.edges if i == unit]
        out += [i for i, j in self.edges if j == unit]
        return sorted(out)

    def degree(self, unit: int) -> int:
        return len(self.neighbors(unit))

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=np.int64)
        for i, j in self.edges:
            deg[i - 1] += 1
            deg[j - 1] += 1
        return deg


@dataclass(frozen=True)
class NeighborhoodConfig:
    """Which neighbourhood definition to build: kind plus temporal order q."""

    kind: str
    q: int | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown neighbourhood kind {self.kind!r}; expected one of {KINDS}")
        if self.kind != "spatial":
            if self.q is None or self.q < 1:
                raise ValueError(f"kind={self.kind!r} requires temporal order q >= 1")


def parse_adjacency(text: str) -> AdjacencySpec:
    """Parse the adjacency file format into an AdjacencySpec.

    One line per unit, ``ID: ID ID ...``; '#' lines and blank lines are
    ignored.  A unit with no neighbours is written ``ID:``.  Edges listed
    in only one direction are symmetrised and counted in ``asymmetries``.

    Raises ValueError on malformed lines, non-positive ids or self-loops.
    """
    declared: set[tuple[int, int]] = set()  # ordered (from, to) as written
    max_id = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        head, sep, tail = line.partition(":")
        if not sep:
            raise ValueError(f"line {lineno}: expected 'ID: ID ID ...', got {raw!r}")
        try:
            unit = int(head)
            nbrs = [int(tok) for tok in tail.split()]
        except ValueError:
            raise ValueError(f"line {lineno}: non-integer unit id in {raw!r}") from None
        if unit <= 0 or any(j <= 0 for j in nbrs):
            raise ValueError(f"line {lineno}: unit ids must be positive")
        if unit in nbrs:
            raise ValueError(f"line {lineno}: self-loop declared for unit {unit}")
        max_id = max(max_id, unit, *nbrs) if nbrs else max(max_id, unit)
        for j in nbrs:
            declared.add((unit, j))

    edges = frozenset((min(i, j), max(i, j)) for i, j in declared)
    asymmetries = sum(1 for i, j in edges if (i, j) not in declared or (j, i) not in declared)
    return AdjacencySpec(n=max_id, edges=edges, asymmetries=asymmetries)


def load_adjacency(path) -> AdjacencySpec:
    with open(path, encoding="utf-8") as fh:
        return parse_adjacency(fh.read())


def grid_adjacency(rows: int, cols: int) -> AdjacencySpec:
    """Rook adjacency of a rows x cols grid; unit ids are row-major 1-based."""
    edges = set()
    for r in range(rows):
        for c in range(cols):
            u = r * cols + c + 1
            if c + 1 < cols:
                edges.add((u, u + 1))
            if r + 1 < rows:
                edges.add((u, u + cols))
    return AdjacencySpec(n=rows * cols, edges=frozenset(edges))


@dataclass(frozen=True)
class NeighborhoodSystem:
    """Forward and reversed neighbour sets for every site, in CSR form.

    ``fwd_indices[fwd_indptr[m]:fwd_indptr[m+1]]`` are the flat site ids of
    the forward set of site m, ascending; likewise for the reversed sets.
    Immutable after construction and safe to share across threads.
    """

    n: int
    T: int
    fwd_indptr: np.ndarray
    fwd_indices: np.ndarray
    rev_indptr: np.ndarray
    rev_indices: np.ndarray
    kind: str | None = None
    q: int | None = None

    def __post_init__(self):
        for arr in (self.fwd_indptr, self.fwd_indices, self.rev_indptr, self.rev_indices):
            arr.setflags(write=False)

    @property
    def n_sites(self) -> int:
        return self.n * self.T

    def site_id(self, unit: int, time: int) -> int:
        if not (1 <= unit <= self.n and 1 <= time <= self.T):
            raise ValueError(f"site ({unit},{time}) outside lattice {self.n}x{self.T}")
        return (unit - 1) * self.T + (time - 1)

    def site_of(self, sid: int) -> Site:
        return sid // self.T + 1, sid % self.T + 1

    def forward_ids(self, sid: int) -> np.ndarray:
        return self.fwd_indices[self.fwd_indptr[sid] : self.fwd_indptr[sid + 1]]

    def reversed_ids(self, sid: int) -> np.ndarray:
        return self.rev_indices[self.rev_indptr[sid] : self.rev_indptr[sid + 1]]

    def forward(self, unit: int, time: int) -> list[Site]:
        return [self.site_of(s) for s in self.forward_ids(self.site_id(unit, time))]

    def reversed_(self, unit: int, time: int) -> list[Site]:
        return [self.site_of(s) for s in self.reversed_ids(self.site_id(unit, time))]

    def forward_sizes(self) -> np.ndarray:
        return np.diff(self.fwd_indptr)

    @classmethod
    def from_lists(cls, n: int, T: int, forward: Sequence[Sequence[int]],
                   kind: str | None = None, q: int | None = None) -> "NeighborhoodSystem":
        """Build from per-site forward lists of flat ids (validated, sorted)."""
        M = n * T
        if len(forward) != M:
            raise ValueError(f"expected {M} forward lists, got {len(forward)}")
        fwd = []
        for m, row in enumerate(forward):
            ids = sorted(set(int(s) for s in row))
            if ids and (ids[0] < 0 or ids[-1] >= M):
                raise ValueError(f"site {m}: neighbour id outside the lattice")
            if m not in ids:
                raise ValueError(f"site {m}: forward set must contain the site itself")
            fwd.append(ids)
        rev: list[list[int]] = [[] for _ in range(M)]
        for m, ids in enumerate(fwd):
            for u in ids:
                rev[u].append(m)  # m ascends, so each rev list is born sorted
        return cls(
            n=n, T=T,
            fwd_indptr=_indptr(fwd), fwd_indices=_flat(fwd),
            rev_indptr=_indptr(rev), rev_indices=_flat(rev),
            kind=kind, q=q,
        )

    @classmethod
    def from_forward(cls, n: int, T: int, forward: Mapping[Site, Iterable[Site]]) -> "NeighborhoodSystem":
        """Generic constructor for user-defined neighbour sets.

        ``forward`` maps every (unit, time) to an iterable of (unit, time)
        neighbours; self-inclusion is required.  No ``kind`` is attached.
        """
        M = n * T
        lists: list[list[int]] = [[] for _ in range(M)]
        seen = set()
        for (i, t), nbrs in forward.items():
            if not (1 <= i <= n and 1 <= t <= T):
                raise ValueError(f"site ({i},{t}) outside lattice {n}x{T}")
            sid = (i - 1) * T + (t - 1)
            seen.add(sid)
            for (j, s) in nbrs:
                if not (1 <= j <= n and 1 <= s <= T):
                    raise ValueError(f"neighbour ({j},{s}) of ({i},{t}) outside lattice")
                lists[sid].append((j - 1) * T + (s - 1))
        if len(seen) != M:
            raise ValueError(f"forward map covers {len(seen)} of {M} sites")
        return cls.from_lists(n, T, lists, kind="custom")


def _indptr(lists: Sequence[Sequence[int]]) -> np.ndarray:
    ptr = np.zeros(len(lists) + 1, dtype=np.int64)
    np.cumsum([len(row) for row in lists], out=ptr[1:])
    return ptr


def _flat(lists: Sequence[Sequence[int]]) -> np.ndarray:
    if not any(lists):
        return np.zeros(0, dtype=np.int64)
    return np.concatenate([np.asarray(row, dtype=np.int64) for row in lists])


def build_neighborhoods(adj: AdjacencySpec, T: int, cfg: NeighborhoodConfig) -> NeighborhoodSystem:
    """Construct the neighbourhood system of the requested kind.

    ``adj`` supplies the symmetric unit adjacency (ignored for
    kind="temporal" beyond fixing n); temporal lags below time 1 are
    truncated.  A unit with no spatial adjacencies still has itself as its
    only spatial neighbour.
    """
    if T < 1:
        raise ValueError("T must be >= 1")
    n = adj.n
    spatial = {i: sorted([i] + adj.neighbors(i)) for i in range(1, n + 1)}
    q = cfg.q if cfg.kind != "spatial" else None

    forward: list[list[int]] = []
    for i in range(1, n + 1):
        for t in range(1, T + 1):
            if cfg.kind == "spatial":
                ids = [(j - 1) * T + (t - 1) for j in spatial[i]]
            elif cfg.kind == "temporal":
                ids = [(i - 1) * T + (s - 1) for s in range(max(1, t - q), t + 1)]
            elif cfg.kind == "union":
                own = {(i - 1) * T + (s - 1) for s in range(max(1, t - q), t + 1)}
                own.update((j - 1) * T + (t - 1) for j in spatial[i])
                ids = sorted(own)
            else:  # product
                ids = [
                    (j - 1) * T + (s - 1)
                    for j in spatial[i]
                    for s in range(max(1, t - q), t + 1)
                ]
            forward.append(ids)
    return NeighborhoodSystem.from_lists(n, T, forward, kind=cfg.kind, q=q)


@dataclass(frozen=True)
class NeighborhoodStats:
    min: int
    median: float
    max: int


def neighborhood_stats(sys: NeighborhoodSystem) -> NeighborhoodStats:
    """Order statistics of the forward-set sizes over all sites."""
    sizes = sys.forward_sizes()
    return NeighborhoodStats(
        min=int(sizes.min()),
        median=float(np.median(sizes)),
        max=int(sizes.max()),
    )
