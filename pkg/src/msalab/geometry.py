"""Combinatorics of multi-particle lattice cubes in the max-norm.

All cubes are closed lattice cubes: ``C_L(u) = {x in Z^D : |x - u| <= L}``.
Two one-particle cubes of half-side ``L`` share a lattice point iff their
centers are at max-distance ``<= 2L``.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import networkx as nx
import numpy as np


class GeometryError(ValueError):
    """Raised on malformed or mismatched configurations."""


class PreconditionError(GeometryError):
    pass


# --------------------------------------------------------------------------
# Domain types
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ParticleConfiguration:
    """Ordered tuple of ``n`` lattice points in ``Z^d``."""

    points: tuple[tuple[int, ...], ...]

    def __post_init__(self):
        pts = tuple(tuple(int(c) for c in p) for p in self.points)
        if len(pts) == 0:
            raise GeometryError("a configuration needs at least one particle")
        d = len(pts[0])
        if d == 0 or any(len(p) != d for p in pts):
            raise GeometryError("all points must share the same dimension d >= 1")
        object.__setattr__(self, "points", pts)

    @classmethod
    def from_any(cls, obj) -> "ParticleConfiguration":
        """Accept a configuration, an ``(n, d)`` array, or a flat 1d sequence."""
        if isinstance(obj, ParticleConfiguration):
            return obj
        arr = np.asarray(obj, dtype=np.int64)
        if arr.ndim == 1:
            arr = arr.reshape(-1, 1)
        if arr.ndim != 2:
            raise GeometryError(f"cannot interpret shape {arr.shape} as a configuration")
        return cls(tuple(tuple(int(c) for c in row) for row in arr))

    @property
    def n(self) -> int:
        return len(self.points)

    @property
    def d(self) -> int:
        return len(self.points[0])

    def array(self) -> np.ndarray:
        return np.array(self.points, dtype=np.int64)

    def sub(self, indices: Iterable[int]) -> "ParticleConfiguration":
        return ParticleConfiguration(tuple(self.points[i] for i in indices))

    def __len__(self):
        return self.n

    def __iter__(self):
        return iter(self.points)


def as_config(obj) -> ParticleConfiguration:
    return ParticleConfiguration.from_any(obj)


@dataclass(frozen=True)
class MultiCube:
    """The n-particle cube ``C_L^{(n)}(u)`` of half-side ``L``."""

    center: ParticleConfiguration
    L: int

    def __post_init__(self):
        object.__setattr__(self, "center", as_config(self.center))
        if int(self.L) != self.L or self.L < 1:
            raise GeometryError(f"half-side must be a positive integer, got {self.L}")
        object.__setattr__(self, "L", int(self.L))

    @property
    def n(self) -> int:
        return self.center.n

    @property
    def d(self) -> int:
        return self.center.d

    @property
    def int_half_side(self) -> int:
        return self.L // 3

    def contains_cube(self, other: "MultiCube") -> bool:
        return max_dist(self.center, other.center) + other.L <= self.L

    def projection_boxes(self) -> list[tuple[np.ndarray, np.ndarray]]:
        """One-particle cubes ``C_L(u_i)`` as inclusive (lo, hi) corners."""
        return [(np.array(p) - self.L, np.array(p) + self.L) for p in self.center.points]

    def describe(self) -> str:
        pts = ";".join(",".join(str(c) for c in p) for p in self.center.points)
        return f"n{self.n}d{self.d}L{self.L}@{pts}"


@dataclass(frozen=True)
class IndexPartition:
    """Nonempty subset ``J`` of ``{0..n-1}`` and its complement.

    Indices are zero-based internally. ``side`` records which cube of a pair
    the subset separates (``"x"`` or ``"y"``) when produced by
    :func:`find_separating_partition`.
    """

    J: frozenset
    n: int
    side: str = "x"

    def __post_init__(self):
        J = frozenset(int(j) for j in self.J)
        if not J:
            raise GeometryError("J must be nonempty")
        if any(j < 0 or j >= self.n for j in J):
            raise GeometryError(f"J={sorted(J)} not a subset of range({self.n})")
        object.__setattr__(self, "J", J)

    @property
    def complement(self) -> frozenset:
        return frozenset(range(self.n)) - self.J

    @property
    def mask(self) -> int:
        return sum(1 << j for j in self.J)

    @classmethod
    def from_mask(cls, mask: int, n: int, side: str = "x") -> "IndexPartition":
        return cls(frozenset(j for j in range(n) if mask >> j & 1), n, side)

    @property
    def one_based(self) -> tuple[int, ...]:
        return tuple(sorted(j + 1 for j in self.J))


@dataclass(frozen=True)
class ClusterDecomposition:
    clusters: tuple[frozenset, ...]

    @property
    def M(self) -> int:
        return len(self.clusters)

    def as_sets(self) -> list[set[int]]:
        return [set(c) for c in self.clusters]


@dataclass(frozen=True)
class Interactivity:
    """Result of :func:`classify_interactivity`."""

    kind: str  # "FI" or "PI"
    J: IndexPartition | None = None

    @property
    def is_pi(self) -> bool:
        return self.kind == "PI"


# --------------------------------------------------------------------------
# Elementary helpers
# --------------------------------------------------------------------------


def max_dist(x, y) -> int:
    """Max-norm distance between two configurations (or points) in Z^{nd}."""
    a = np.asarray(as_config(x).points if not isinstance(x, np.ndarray) else x)
    b = np.asarray(as_config(y).points if not isinstance(y, np.ndarray) else y)
    if a.shape != b.shape:
        raise GeometryError(f"shape mismatch {a.shape} vs {b.shape}")
    return int(np.abs(a - b).max())


def _pairwise_point_dist(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    # a: (p, d), b: (q, d) -> (p, q) max-norm distances
    return np.abs(a[:, None, :] - b[None, :, :]).max(axis=2)


def kappa(n: int) -> int:
    return n**n


def _check_same_shape(x: ParticleConfiguration, y: ParticleConfiguration):
    if x.n != y.n or x.d != y.d:
        raise GeometryError(
            f"dimension mismatch: (n={x.n}, d={x.d}) vs (n={y.n}, d={y.d})"
        )


# --------------------------------------------------------------------------
# Operations
# --------------------------------------------------------------------------


def cluster_decompose(y, L: int) -> ClusterDecomposition:
    """Split a configuration into maximal ``L``-clusters.

    Particles ``i`` and ``j`` end up in the same cluster iff their one-particle
    cubes ``C_L(y_i)``, ``C_L(y_j)`` are linked by a chain of pairwise
    intersecting cubes.
    """
    if L < 1:
        raise GeometryError("L must be >= 1")
    y = as_config(y)
    pts = y.array()
    touching = _pairwise_point_dist(pts, pts) <= 2 * L
    parent = list(range(y.n))

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for i, j in zip(*np.nonzero(np.triu(touching, 1))):
        ri, rj = find(int(i)), find(int(j))
        if ri != rj:
            parent[max(ri, rj)] = min(ri, rj)
    groups: dict[int, set[int]] = {}
    for i in range(y.n):
        groups.setdefault(find(i), set()).add(i)
    clusters = sorted((frozenset(g) for g in groups.values()), key=min)
    return ClusterDecomposition(tuple(clusters))


def is_J_separable(x, y, L: int, J) -> bool:
    """Whether ``C_L(x)`` is J-separable from ``C_L(y)``.

    ``J`` may be an :class:`IndexPartition` or an iterable of zero-based indices.
    """
    x, y = as_config(x), as_config(y)
    _check_same_shape(x, y)
    members = J.J if isinstance(J, IndexPartition) else frozenset(J)
    if not members:
        raise GeometryError("J must be nonempty")
    xs = x.array()
    inside = xs[sorted(members)]
    others = [xs[j] for j in range(x.n) if j not in members]
    rest = np.vstack([np.array(others).reshape(-1, x.d), y.array()])
    return bool((_pairwise_point_dist(inside, rest) > 2 * L).all())


def find_separating_partition(x, y, L: int, N: int) -> IndexPartition | None:
    """Witness that the pair ``(C_L(x), C_L(y))`` is separable, or ``None``.

    Subsets are scanned by increasing bitmask; for each mask the x-side is
    tried before the y-side.
    """
    x, y = as_config(x), as_config(y)
    _check_same_shape(x, y)
    if N < x.n:
        raise GeometryError(f"N={N} smaller than particle count {x.n}")
    if max_dist(x, y) <= 7 * N * L:
        return None
    n = x.n
    for mask in range(1, 1 << n):
        J = IndexPartition.from_mask(mask, n)
        if is_J_separable(x, y, L, J):
            return J
        if is_J_separable(y, x, L, J):
            return IndexPartition(J.J, n, side="y")
    return None


def is_separable_pair(x, y, L: int, N: int) -> bool:
    return find_separating_partition(x, y, L, N) is not None


def exclusion_cube_centers(x, L: int) -> list[ParticleConfiguration]:
    """Centers of the (at most ``n**n``) exclusion cubes of half-side ``2nL``.

    Every tuple ``(x_{s(1)}, ..., x_{s(n)})`` over maps ``s: [n] -> [n]``;
    duplicates (coinciding particle positions) are dropped, order preserved.
    """
    if L < 1:
        raise GeometryError("exclusion cubes need L >= 1")
    x = as_config(x)
    seen: dict[tuple, None] = {}
    for sigma in itertools.product(range(x.n), repeat=x.n):
        seen.setdefault(tuple(x.points[s] for s in sigma), None)
    return [ParticleConfiguration(c) for c in seen]


def outside_exclusion_cubes(y, centers: Sequence[ParticleConfiguration], n: int, L: int) -> bool:
    """True iff ``y`` lies outside every closed cube ``C_{2nL}(center)``."""
    return all(max_dist(y, c) > 2 * n * L for c in centers)


def classify_interactivity(u, L: int, r0: int) -> Interactivity:
    """FI when ``diam(u) <= n(2L + r0)``, otherwise PI with the lexicographically
    smallest witness ``J`` whose projection gap exceeds ``r0``."""
    if r0 < 0 or L < 1:
        raise GeometryError("need r0 >= 0 and L >= 1")
    u = as_config(u)
    pts = u.array()
    diam = int(_pairwise_point_dist(pts, pts).max())
    if diam <= u.n * (2 * L + r0):
        return Interactivity("FI")
    for mask in range(1, (1 << u.n) - 1):
        J = IndexPartition.from_mask(mask, u.n)
        if projection_gap(u, L, J) > r0:
            return Interactivity("PI", J)
    # unreachable for valid input: a PI cube always splits
    raise AssertionError(f"PI cube {u} without a splitting subset")


def projection_gap(u, L: int, J) -> int:
    """Lattice distance between ``Pi_J C_L(u)`` and ``Pi_{J^c} C_L(u)``.

    Returns ``-1`` when the projections share a lattice point.
    """
    u = as_config(u)
    members = J.J if isinstance(J, IndexPartition) else frozenset(J)
    comp = [j for j in range(u.n) if j not in members]
    if not comp:
        raise GeometryError("J must be a proper subset")
    pts = u.array()
    dmin = int(_pairwise_point_dist(pts[sorted(members)], pts[comp]).min())
    return max(dmin - 2 * L, -1) if dmin > 2 * L else -1


def projections_disjoint(x, y, L: int) -> bool:
    """``Pi C_L(x) ∩ Pi C_L(y) = ∅`` on the lattice."""
    x, y = as_config(x), as_config(y)
    return bool((_pairwise_point_dist(x.array(), y.array()) > 2 * L).all())


def fi_projection_disjoint(x, y, L: int, r0: int) -> bool:
    """Disjointness of one-particle projections for a pair of FI cubes."""
    x, y = as_config(x), as_config(y)
    _check_same_shape(x, y)
    for c in (x, y):
        if classify_interactivity(c, L, r0).is_pi:
            raise PreconditionError(f"{c.points} is not fully interactive")
    return projections_disjoint(x, y, L)


@dataclass
class SingularCounts:
    M: int = 0
    M_sep: int = 0
    M_PI: int = 0
    M_PI_sep: int = 0
    M_FI: int = 0
    witnesses: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in ("M", "M_sep", "M_PI", "M_PI_sep", "M_FI")}


def _max_clique(items: list, compatible) -> list:
    if not items:
        return []
    g = nx.Graph()
    g.add_nodes_from(range(len(items)))
    for i, j in itertools.combinations(range(len(items)), 2):
        if compatible(items[i], items[j]):
            g.add_edge(i, j)
    clique, _ = nx.max_weight_clique(g, weight=None)
    return sorted(clique)


def count_singular_maxima(
    centers: Sequence[tuple],
    L: int,
    N: int,
    container: MultiCube | None = None,
) -> SingularCounts:
    """Maximal counts of singular sub-cubes under the pairwise side conditions.

    ``centers`` holds ``(configuration, flag)`` pairs with flag ``"PI"`` or
    ``"FI"``; every entry is taken to be a singular cube of half-side ``L``.
    When ``container`` is given, ``M`` only counts centers at distance
    ``>= 2L`` from its boundary. Maxima are found by exact clique search.
    """
    entries = [(as_config(c), str(f).upper()) for c, f in centers]
    if entries:
        n0, d0 = entries[0][0].n, entries[0][0].d
        for c, f in entries:
            if (c.n, c.d) != (n0, d0):
                raise GeometryError("all centers must share n and d")
            if f not in ("PI", "FI"):
                raise GeometryError(f"unknown flag {f!r}")

    def far(a, b):
        return max_dist(a[0], b[0]) > 7 * N * L

    def sep(a, b):
        return find_separating_partition(a[0], b[0], L, N) is not None

    if container is not None:
        bounded = [e for e in entries if container.L - max_dist(e[0], container.center) >= 2 * L]
    else:
        bounded = entries
    pi = [e for e in entries if e[1] == "PI"]
    fi = [e for e in entries if e[1] == "FI"]
    out = SingularCounts()
    for name, pool, rel in (
        ("M", bounded, far),
        ("M_sep", entries, sep),
        ("M_PI", pi, far),
        ("M_PI_sep", pi, sep),
        ("M_FI", fi, far),
    ):
        clique = _max_clique(pool, rel)
        setattr(out, name, len(clique))
        out.witnesses[name] = [pool[i][0] for i in clique]
    return out
