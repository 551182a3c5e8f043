"""Cities, choice-city sets and recursive largest-city Voronoi partitions.

A :class:`CitySystem` keeps cities sorted by size (rank 1 first) so that
"the ``r`` largest cities" is simply the first ``r`` entries.  Cities from a
simulated equilibrium live on the ring; external tables may instead supply
planar coordinates or a full distance matrix.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .geometry import RingGeography


class EmptySystemError(ValueError):
    pass


@dataclass(frozen=True)
class CitySystem:
    """Cities sorted by size, descending.

    ``ids`` are location indices for simulated systems and table ids
    otherwise; ``presence[u, i]`` says whether industry ``i`` is in city ``u``.
    """

    ids: np.ndarray
    sizes: np.ndarray
    metric: str = "ring"
    angles: np.ndarray | None = None
    xy: np.ndarray | None = None
    R: int | None = None
    presence: np.ndarray | None = None
    matrix: np.ndarray | None = field(default=None, repr=False)

    def __post_init__(self):
        sizes = np.asarray(self.sizes, dtype=float)
        if sizes.size == 0:
            raise EmptySystemError("city system has no cities")
        if np.any(sizes <= 0):
            raise ValueError("city sizes must be positive")
        if np.any(np.diff(sizes) > 0):
            raise ValueError("cities must be sorted by size, descending")
        if self.metric not in ("ring", "euclidean", "matrix"):
            raise ValueError(f"unknown metric {self.metric!r}")

    @classmethod
    def from_unsorted(cls, ids, sizes, **kw) -> CitySystem:
        """Sort by size descending, breaking ties by ascending id."""
        ids = np.asarray(ids)
        sizes = np.asarray(sizes, dtype=float)
        order = np.lexsort((ids, -sizes))
        kw = {k: (None if v is None else np.asarray(v)[order] if k in ("angles", "xy", "presence") else v) for k, v in kw.items()}
        if kw.get("matrix") is not None:
            m = np.asarray(kw["matrix"], dtype=float)
            kw["matrix"] = m[np.ix_(order, order)]
        return cls(ids=ids[order], sizes=sizes[order], **kw)

    @property
    def U(self) -> int:
        return int(self.sizes.size)

    @property
    def I(self) -> int:
        return 0 if self.presence is None else int(self.presence.shape[1])

    @property
    def ranks(self) -> np.ndarray:
        return np.arange(1, self.U + 1)

    def index_of(self, city_id) -> int:
        hits = np.flatnonzero(self.ids == city_id)
        if hits.size == 0:
            raise KeyError(f"unknown city id {city_id!r}")
        return int(hits[0])

    @cached_property
    def distances(self) -> np.ndarray:
        """Pairwise distances between cities in rank order, shape ``(U, U)``."""
        if self.metric == "matrix":
            D = np.asarray(self.matrix, dtype=float)
        elif self.metric == "euclidean":
            diff = self.xy[:, None, :] - self.xy[None, :, :]
            D = np.sqrt((diff**2).sum(axis=-1))
        elif self.R is not None:
            k = np.abs(self.ids[:, None].astype(np.int64) - self.ids[None, :].astype(np.int64))
            D = np.minimum(k, self.R - k) * (2.0 * np.pi / self.R)
        else:
            a = np.abs(self.angles[:, None] - self.angles[None, :]) % (2.0 * np.pi)
            D = np.minimum(a, 2.0 * np.pi - a)
        D.setflags(write=False)
        return D

    def distance(self, a: int, b: int) -> float:
        """Distance between the cities at rank positions ``a`` and ``b`` (0-based)."""
        return float(self.distances[a, b])

    def choice_cities(self, i: int) -> np.ndarray:
        """Rank positions (0-based) of the cities where industry ``i`` is present."""
        self._need_presence()
        return np.flatnonzero(self.presence[:, i])

    def industrial_diversity(self, u: int | None = None):
        """Number of industries in city ``u`` (rank position), or in every city."""
        self._need_presence()
        counts = self.presence.sum(axis=1)
        return counts if u is None else int(counts[u])

    def choice_counts(self) -> np.ndarray:
        self._need_presence()
        return self.presence.sum(axis=0)

    def _need_presence(self):
        if self.presence is None:
            raise ValueError("city system carries no industry presence data")


def extract_cities(h: np.ndarray, geo: RingGeography | None = None, eps_city: float | None = None) -> CitySystem:
    """Cities of a worker distribution ``h`` of shape ``(R, I)``.

    A location is a city when its total mass exceeds ``eps_city`` (default
    ``1e-8 * H``); an industry is present when its mass exceeds
    ``eps_city / I``.
    """
    h = np.asarray(h, dtype=float)
    R, I = h.shape
    if geo is not None and geo.R != R:
        raise ValueError(f"geography has R={geo.R} but h has {R} rows")
    if eps_city is None:
        eps_city = 1e-8 * h.sum()
    size = h.sum(axis=1)
    loc = np.flatnonzero(size > eps_city)
    if loc.size == 0:
        raise EmptySystemError("no location exceeds the city threshold")
    presence = h[loc] > eps_city / I
    return CitySystem.from_unsorted(
        loc,
        size[loc],
        metric="ring",
        angles=2.0 * np.pi * loc / R,
        R=R,
        presence=presence,
    )


@dataclass
class Cell:
    """One node of an L-partition; ``members`` are rank positions, ascending."""

    members: np.ndarray
    depth: int
    centers: np.ndarray = field(default_factory=lambda: np.empty(0, dtype=int))
    children: list = field(default_factory=list)
    center: int | None = None

    @property
    def size(self) -> int:
        return int(self.members.size)

    @property
    def head(self) -> int:
        """Central place of the cell: its largest city unless set explicitly."""
        return int(self.members[0]) if self.center is None else self.center

    def walk(self):
        yield self
        for c in self.children:
            yield from c.walk()

    def leaves(self):
        return [c for c in self.walk() if not c.children]


@dataclass
class PartitionTree:
    root: Cell
    L: int
    max_depth: int

    def cells(self) -> list:
        return list(self.root.walk())

    def leaves(self) -> list:
        return self.root.leaves()

    def hinterland_cells(self, min_size: int = 1) -> list:
        """Hinterland of every central place, ordered by the central place's rank."""
        seen = {}
        for cell in self.root.walk():
            # walk is pre-order, so the shallowest cell headed by a city comes first
            seen.setdefault(cell.head, cell)
        return [seen[k] for k in sorted(seen) if seen[k].size >= min_size]

    def hinterland(self, u: int) -> Cell:
        """Shallowest cell headed by the city at rank position ``u``.

        A city that heads no cell gets a singleton cell one level below the
        deepest cell containing it.
        """
        if not 0 <= u < self.root.size:
            raise KeyError(f"unknown city position {u}")
        deepest = self.root
        for cell in self.root.walk():
            if cell.head == u:
                return cell
            if cell.depth > deepest.depth and np.any(cell.members == u):
                deepest = cell
        return Cell(members=np.array([u]), depth=deepest.depth + 1)


def _split(members: np.ndarray, dist: np.ndarray, L: int):
    centers = members[:L]
    # argmin takes the first minimum, i.e. the larger center on distance ties
    assign = np.argmin(dist[np.ix_(members, centers)], axis=1)
    # each center keeps its own cell even when two centers coincide
    assign[: centers.size] = np.arange(centers.size)
    return centers, [members[assign == j] for j in range(centers.size)]


def l_partition(sys: CitySystem, L: int = 3, max_depth: int = 6) -> PartitionTree:
    """Recursive Voronoi partition around the ``L`` largest cities of each cell.

    The root is always split when it holds two or more cities; deeper cells
    are split while they hold more than ``L`` cities and the depth cap allows.
    """
    if L < 2:
        raise ValueError(f"L must be >= 2, got {L}")
    dist = sys.distances

    def build(members, depth):
        cell = Cell(members=members, depth=depth)
        splittable = members.size > L or (depth == 0 and members.size >= 2)
        if splittable and depth < max_depth:
            cell.centers, parts = _split(members, dist, L)
            cell.children = [build(p, depth + 1) for p in parts]
        return cell

    return PartitionTree(root=build(np.arange(sys.U), 0), L=L, max_depth=max_depth)


def random_l_partition(tree: PartitionTree, rng: np.random.Generator) -> PartitionTree:
    """Random L-partition with the centers and cell sizes of ``tree``.

    Every center of the actual tree stays in the counterfactual cell it heads
    and in all of that cell's ancestors.  The remaining cities of a node are
    shuffled and dealt to its children so that each child keeps the size of
    the corresponding actual child.
    """
    heads = {}

    def collect(cell: Cell) -> np.ndarray:
        own = [np.array([cell.head])] + [collect(c) for c in cell.children]
        heads[id(cell)] = np.unique(np.concatenate(own))
        return heads[id(cell)]

    collect(tree.root)

    def build(actual: Cell, members: np.ndarray, depth: int) -> Cell:
        cell = Cell(members=members, depth=depth, centers=actual.centers, center=actual.head)
        if actual.children:
            fixed = [heads[id(c)] for c in actual.children]
            pool = rng.permutation(np.setdiff1d(members, np.concatenate(fixed)))
            pos = 0
            for child, keep in zip(actual.children, fixed):
                take = child.size - keep.size
                part = np.sort(np.concatenate((keep, pool[pos : pos + take])))
                pos += take
                cell.children.append(build(child, part, depth + 1))
        return cell

    return PartitionTree(root=build(tree.root, tree.root.members, 0), L=tree.L, max_depth=tree.max_depth)
