"""Finite-volume multi-particle Anderson Hamiltonians ``-Delta + U + V``.

Configuration space for ``n`` particles in ``Z^d`` is discretized with grid
spacing ``h = 1/refine`` and Dirichlet truncation. The site potential and the
interaction are piecewise constant on unit cells; a grid point ``x`` belongs
to the cell ``floor(x + 1/2)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Mapping, Sequence

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp

from .geometry import IndexPartition, MultiCube, as_config, classify_interactivity
from .seeding import counter_uniform


class ModelError(ValueError):
    pass


class CoverageError(ModelError):
    """Field sample does not cover the sites a Hamiltonian needs."""


# --------------------------------------------------------------------------
# Random field
# --------------------------------------------------------------------------

_KINDS = ("uniform01", "bernoulli", "table")


@dataclass(frozen=True)
class FieldDistribution:
    """Single-site law, pushed through ``v -> scale * v + shift``.

    ``uniform01`` is uniform on ``[0, 1)``; ``bernoulli`` takes value ``a``
    with probability ``p0`` and ``b`` otherwise; ``table`` draws from
    ``values`` with probabilities ``probs``.
    """

    kind: str = "uniform01"
    p0: float = 0.5
    a: float = 0.0
    b: float = 1.0
    values: tuple = ()
    probs: tuple = ()
    scale: float = 1.0
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ModelError(f"unknown distribution {self.kind!r}; expected one of {_KINDS}")
        if self.scale < 0:
            raise ModelError("scale must be non-negative")
        if self.kind == "bernoulli" and not 0.0 <= self.p0 <= 1.0:
            raise ModelError("p0 must lie in [0, 1]")
        if self.kind == "table":
            if len(self.values) == 0 or len(self.values) != len(self.probs):
                raise ModelError("table needs matching non-empty values and probs")
            if any(p < 0 for p in self.probs) or not math.isclose(sum(self.probs), 1.0, abs_tol=1e-12):
                raise ModelError("table probabilities must be non-negative and sum to 1")
        if self.support_min() < 0:
            raise ModelError("potential values must be non-negative")

    @classmethod
    def zero(cls) -> "FieldDistribution":
        return cls("uniform01", scale=0.0)

    def support_min(self) -> float:
        if self.kind == "uniform01":
            lo = 0.0
        elif self.kind == "bernoulli":
            lo = min(self.a, self.b) if 0 < self.p0 < 1 else (self.a if self.p0 == 1 else self.b)
        else:
            lo = min(v for v, p in zip(self.values, self.probs) if p > 0)
        return self.scale * lo + self.shift

    def support_max(self) -> float:
        if self.kind == "uniform01":
            hi = 1.0
        elif self.kind == "bernoulli":
            hi = max(self.a, self.b)
        else:
            hi = max(self.values)
        return self.scale * hi + self.shift

    def inverse_cdf(self, u: np.ndarray) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        if self.kind == "uniform01":
            v = u
        elif self.kind == "bernoulli":
            v = np.where(u < self.p0, self.a, self.b)
        else:
            cdf = np.cumsum(self.probs)
            idx = np.searchsorted(cdf, u, side="right")
            v = np.asarray(self.values, dtype=float)[np.minimum(idx, len(self.values) - 1)]
        return self.scale * v + self.shift

    def tag(self) -> str:
        if self.kind == "uniform01":
            core = "uniform01"
        elif self.kind == "bernoulli":
            core = f"bernoulli({self.p0},{self.a},{self.b})"
        else:
            core = f"table({list(self.values)},{list(self.probs)})"
        return f"{core}*{self.scale}+{self.shift}"


@dataclass(frozen=True)
class RandomFieldSample:
    """Site potential ``V(x) = omega_x`` on the box ``lo <= x <= hi`` of ``Z^d``."""

    lo: tuple
    hi: tuple
    values: np.ndarray
    seed: int
    distribution: FieldDistribution
    stream: int = 0

    @property
    def d(self) -> int:
        return len(self.lo)

    def covers(self, lo, hi) -> bool:
        return bool(np.all(np.asarray(lo) >= self.lo) and np.all(np.asarray(hi) <= self.hi))

    def at(self, sites) -> np.ndarray:
        """Values at integer sites, array of shape ``(..., d)``."""
        sites = np.asarray(sites, dtype=np.int64)
        rel = sites - np.asarray(self.lo)
        if np.any(rel < 0) or np.any(rel > np.asarray(self.hi) - np.asarray(self.lo)):
            raise CoverageError("field sample does not cover the requested sites")
        return self.values[tuple(np.moveaxis(rel, -1, 0))]

    def ident(self) -> str:
        return f"seed={self.seed}/stream={self.stream}/{self.distribution.tag()}"


def sample_field(
    seed: int,
    region,
    distribution: FieldDistribution | str = "uniform01",
    stream: int = 0,
    overrides: Mapping[tuple, float] | None = None,
) -> RandomFieldSample:
    """Draw the site potential on a box of ``Z^d``.

    Parameters
    ----------
    seed : int
        Master seed of the realization.
    region : pair of sequences
        Inclusive corners ``(lo, hi)``.
    distribution : FieldDistribution or str
        Single-site law; a string is read as a distribution kind.
    stream : int
        Independent realization label under the same seed.
    overrides : mapping, optional
        Explicit site values (used to plant wells).

    Notes
    -----
    Each value is ``inverse_cdf(hash(seed, stream, site))`` so any two samples
    with the same seed and stream agree on their common sites.
    """
    if isinstance(distribution, str):
        distribution = FieldDistribution(distribution)
    lo = tuple(int(c) for c in region[0])
    hi = tuple(int(c) for c in region[1])
    if len(lo) != len(hi) or len(lo) == 0 or any(a > b for a, b in zip(lo, hi)):
        raise ModelError(f"empty or malformed region {lo}..{hi}")
    axes = [np.arange(a, b + 1) for a, b in zip(lo, hi)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    shape = grid.shape[:-1]
    u = counter_uniform(seed, stream, grid.reshape(-1, len(lo)))
    values = distribution.inverse_cdf(u).reshape(shape)
    if overrides:
        for site, val in overrides.items():
            if val < 0:
                raise ModelError("override values must be non-negative")
            rel = tuple(int(s) - a for s, a in zip(site, lo))
            if any(r < 0 or r >= n for r, n in zip(rel, shape)):
                continue
            values[rel] = float(val)
    values.setflags(write=False)
    return RandomFieldSample(lo, hi, values, int(seed), distribution, int(stream))


def field_for_cubes(seed: int, cubes: Sequence[MultiCube], distribution=None, stream: int = 0,
                    overrides=None) -> RandomFieldSample:
    """Smallest field sample covering every one-particle projection of ``cubes``."""
    distribution = distribution or FieldDistribution()
    lows, highs = [], []
    for c in cubes:
        pts = c.center.array()
        lows.append(pts.min(axis=0) - c.L)
        highs.append(pts.max(axis=0) + c.L)
    lo = np.min(lows, axis=0)
    hi = np.max(highs, axis=0)
    return sample_field(seed, (lo, hi), distribution, stream, overrides)


# --------------------------------------------------------------------------
# Interaction and discretization
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class InteractionSpec:
    """Pair interaction ``phi(r)`` for ``r = 0..r0``, zero beyond ``r0``."""

    r0: int = 1
    phi: tuple = (1.0, 1.0)

    def __post_init__(self):
        if self.r0 < 0 or int(self.r0) != self.r0:
            raise ModelError("r0 must be a non-negative integer")
        if len(self.phi) != self.r0 + 1:
            raise ModelError("phi must list values for r = 0..r0")
        if any(v < 0 or not math.isfinite(v) for v in self.phi):
            raise ModelError("phi values must be finite and non-negative")
        object.__setattr__(self, "phi", tuple(float(v) for v in self.phi))

    @classmethod
    def step(cls, u0: float = 1.0, r0: int = 1) -> "InteractionSpec":
        return cls(r0, (u0,) * (r0 + 1))

    @classmethod
    def none(cls) -> "InteractionSpec":
        return cls(0, (0.0,))

    def phi_of(self, r: np.ndarray) -> np.ndarray:
        r = np.asarray(r)
        table = np.append(np.asarray(self.phi), 0.0)
        return table[np.minimum(r, self.r0 + 1)]

    def ident(self) -> str:
        return f"r0={self.r0}/phi={list(self.phi)}"


def interaction_energy(x, spec: InteractionSpec) -> np.ndarray | float:
    """``U(x) = sum_{i<j} phi(|x_i - x_j|)`` for integer cells.

    ``x`` has shape ``(n, d)`` or ``(K, n, d)``; the latter returns a length-K
    array.
    """
    arr = np.asarray(x, dtype=np.int64)
    single = arr.ndim == 2
    if arr.ndim == 1:
        arr = arr.reshape(-1, 1)
        single = True
    if single:
        arr = arr[None]
    n = arr.shape[1]
    total = np.zeros(arr.shape[0])
    for i in range(n):
        for j in range(i + 1, n):
            r = np.abs(arr[:, i, :] - arr[:, j, :]).max(axis=1)
            total += spec.phi_of(r)
    return float(total[0]) if single else total


@dataclass(frozen=True)
class DiscretizationSpec:
    """Grid spacing ``h = 1/refine`` with Dirichlet truncation."""

    refine: int = 1

    def __post_init__(self):
        if int(self.refine) != self.refine or self.refine < 1:
            raise ModelError("refine must be a positive integer (h = 1/refine)")

    @property
    def h(self) -> Fraction:
        return Fraction(1, int(self.refine))

    @classmethod
    def from_h(cls, h) -> "DiscretizationSpec":
        h = Fraction(h).limit_denominator(1 << 16)
        if h <= 0 or h.numerator != 1:
            raise ModelError(f"h must be 1/m for a positive integer m, got {h}")
        return cls(h.denominator)


# --------------------------------------------------------------------------
# Hamiltonians
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Box:
    """Product of closed integer intervals, one per particle and axis.

    ``lo`` and ``hi`` have shape ``(n, d)``. Cubes are boxes with equal
    side lengths; sub-rectangles of a PI cube are general boxes.
    """

    lo: tuple
    hi: tuple

    def __post_init__(self):
        lo = np.asarray(self.lo, dtype=np.int64)
        hi = np.asarray(self.hi, dtype=np.int64)
        if lo.ndim == 1:
            lo, hi = lo[:, None], hi[:, None]
        if lo.shape != hi.shape or np.any(lo > hi):
            raise ModelError("malformed box")
        object.__setattr__(self, "lo", tuple(map(tuple, lo.tolist())))
        object.__setattr__(self, "hi", tuple(map(tuple, hi.tolist())))

    @classmethod
    def of_cube(cls, cube: MultiCube) -> "Box":
        c = cube.center.array()
        return cls(c - cube.L, c + cube.L)

    @property
    def n(self) -> int:
        return len(self.lo)

    @property
    def d(self) -> int:
        return len(self.lo[0])

    def shape(self, refine: int = 1) -> tuple:
        lo, hi = np.asarray(self.lo), np.asarray(self.hi)
        return tuple(((hi - lo) * refine + 1).ravel().tolist())

    def dim(self, refine: int = 1) -> int:
        return int(np.prod(self.shape(refine)))

    def cell_lo(self) -> np.ndarray:
        return np.asarray(self.lo).min(axis=0)

    def cell_hi(self) -> np.ndarray:
        return np.asarray(self.hi).max(axis=0)


def _laplacian_1d(npts: int, inv_h2: float) -> sp.csr_matrix:
    main = np.full(npts, 2.0 * inv_h2)
    off = np.full(npts - 1, -inv_h2)
    return sp.diags([off, main, off], [-1, 0, 1], format="csr")


@dataclass(eq=False)
class HamiltonianMatrix:
    """Finite-volume operator on a box with cached dense diagonalization.

    Attributes
    ----------
    matrix : scipy.sparse.csr_matrix
        Symmetric real matrix, C-order over (particle, axis) grid indices.
    box : Box
        Integer extent in lattice units.
    refine : int
        Points per unit length, ``h = 1/refine``.
    cube : MultiCube or None
        The cube when the box is one.
    provenance : dict
        Field, interaction and discretization identifiers.
    """

    matrix: sp.csr_matrix
    box: Box
    refine: int = 1
    cube: MultiCube | None = None
    provenance: dict = field(default_factory=dict)
    potential: np.ndarray | None = None

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]

    @property
    def n(self) -> int:
        return self.box.n

    @property
    def d(self) -> int:
        return self.box.d

    @property
    def h(self) -> float:
        return 1.0 / self.refine

    def dense(self) -> np.ndarray:
        return self.matrix.toarray()

    @cached_property
    def eigh(self) -> tuple[np.ndarray, np.ndarray]:
        """Eigenvalues (ascending) and orthonormal eigenvectors."""
        w, v = sla.eigh(self.dense(), check_finite=False)
        return w, v

    @property
    def eigenvalues(self) -> np.ndarray:
        if "eigh" in self.__dict__:
            return self.eigh[0]
        return self._eigvals

    @cached_property
    def _eigvals(self) -> np.ndarray:
        return sla.eigvalsh(self.dense(), check_finite=False)

    @cached_property
    def grid(self) -> np.ndarray:
        """Grid numerators ``q`` with positions ``lo + q h``, shape ``(dim, n, d)``."""
        shape = self.box.shape(self.refine)
        idx = np.indices(shape).reshape(len(shape), -1).T
        return idx.reshape(-1, self.n, self.d)

    @cached_property
    def positions(self) -> np.ndarray:
        return np.asarray(self.box.lo)[None] + self.grid / self.refine

    @cached_property
    def cells(self) -> np.ndarray:
        """Unit cell of every coordinate, ``floor(x + 1/2)``, shape ``(dim, n, d)``."""
        m = self.refine
        return np.asarray(self.box.lo)[None] + (2 * self.grid + m) // (2 * m)

    def region(self, kind: str, center=None, radius: int | None = None) -> np.ndarray:
        """Boolean mask of grid points.

        ``kind`` is ``"int"`` (``|x - u| <= L // 3``), ``"out"``
        (``L - 2 < |x - u| <= L``) or ``"ball"`` (``|x - center| <= radius``).
        """
        if kind in ("int", "out"):
            if self.cube is None:
                raise ModelError("int/out regions need a cube")
            center, L = self.cube.center.array(), self.cube.L
            dist = np.abs(self.positions - center[None]).reshape(self.dim, -1).max(axis=1)
            if kind == "int":
                return dist <= L // 3
            return (dist > L - 2) & (dist <= L)
        if kind == "ball":
            c = np.asarray(as_config(center).points, dtype=float)
            dist = np.abs(self.positions - c[None]).reshape(self.dim, -1).max(axis=1)
            return dist <= radius
        raise ModelError(f"unknown region kind {kind!r}")

    def cell_mask(self, cell) -> np.ndarray:
        """Grid points lying in the n-particle unit cell ``cell``."""
        c = np.asarray(as_config(cell).points)
        return np.all(self.cells == c[None], axis=(1, 2))


def assemble_box(
    box: Box,
    field: RandomFieldSample,
    inter: InteractionSpec,
    disc: DiscretizationSpec | None = None,
    cube: MultiCube | None = None,
) -> HamiltonianMatrix:
    """Assemble ``-Delta + U + V`` on a box with Dirichlet truncation."""
    disc = disc or DiscretizationSpec()
    m = disc.refine
    if field.d != box.d:
        raise ModelError(f"field dimension {field.d} differs from box dimension {box.d}")
    if not field.covers(box.cell_lo(), box.cell_hi()):
        raise CoverageError(
            f"field {field.lo}..{field.hi} does not cover {box.cell_lo()}..{box.cell_hi()}"
        )
    shape = box.shape(m)
    inv_h2 = float(m * m)
    lap = None
    for ax, npts in enumerate(shape):
        term = _laplacian_1d(npts, inv_h2)
        left = int(np.prod(shape[:ax]))
        right = int(np.prod(shape[ax + 1:]))
        term = sp.kron(sp.kron(sp.identity(left, format="csr"), term), sp.identity(right, format="csr"))
        lap = term if lap is None else lap + term
    H = HamiltonianMatrix(sp.csr_matrix((1, 1)), box, m, cube)
    cells = H.cells
    V = field.at(cells).sum(axis=1)
    U = interaction_energy(cells, inter) if box.n > 1 else np.zeros(cells.shape[0])
    pot = V + U
    H.matrix = (lap + sp.diags(pot)).tocsr()
    H.matrix.sort_indices()
    H.potential = pot
    H.provenance = {"field": field.ident(), "interaction": inter.ident(), "h": f"1/{m}"}
    return H


def assemble_hamiltonian(
    cube: MultiCube,
    field: RandomFieldSample,
    inter: InteractionSpec,
    disc: DiscretizationSpec | None = None,
) -> HamiltonianMatrix:
    """Hamiltonian of the closed cube ``C_L(u)`` (``2L/h + 1`` points per axis)."""
    return assemble_box(Box.of_cube(cube), field, inter, disc, cube)


def assemble_pi_factors(
    cube: MultiCube,
    field: RandomFieldSample,
    inter: InteractionSpec,
    disc: DiscretizationSpec | None = None,
    J: IndexPartition | None = None,
) -> tuple[HamiltonianMatrix, HamiltonianMatrix, IndexPartition]:
    """Factor Hamiltonians on ``C_L(u_J)`` and ``C_L(u_{J^c})`` of a PI cube."""
    cls = classify_interactivity(cube.center, cube.L, inter.r0)
    if not cls.is_pi:
        raise ModelError(f"cube {cube.describe()} is fully interactive")
    J = J or cls.J
    left = MultiCube(cube.center.sub(sorted(J.J)), cube.L)
    right = MultiCube(cube.center.sub(sorted(J.complement)), cube.L)
    return (
        assemble_hamiltonian(left, field, inter, disc),
        assemble_hamiltonian(right, field, inter, disc),
        J,
    )


def tensor_sum_spectrum(lam, mu) -> np.ndarray:
    """Sorted ``{lam_i + mu_j}``."""
    return np.sort(np.add.outer(np.asarray(lam), np.asarray(mu)).ravel())


def spectrum_bottom(H: HamiltonianMatrix, tol: float = 1e-10) -> float:
    """Smallest eigenvalue of ``H``.

    Dense LAPACK is used up to a few thousand points (exact to rounding);
    larger matrices use Lanczos with the requested tolerance.
    """
    if H.dim < 1:
        raise ModelError("empty Hamiltonian")
    if "eigh" in H.__dict__ or "_eigvals" in H.__dict__:
        return float(H.eigenvalues[0])
    if H.dim <= 4000:
        w = sla.eigh(H.dense(), eigvals_only=True, subset_by_index=[0, 0], check_finite=False)
        return float(w[0])
    from scipy.sparse.linalg import ArpackNoConvergence, eigsh

    try:
        w = eigsh(H.matrix, k=1, which="SA", tol=tol, return_eigenvectors=False)
    except ArpackNoConvergence as exc:  # pragma: no cover - solver failure path
        raise ModelError("eigensolver did not converge") from exc
    return float(w[0])
