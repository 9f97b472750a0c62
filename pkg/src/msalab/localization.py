"""Observables of localization: spectrum bottom, eigenfunction decay, moments."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .geometry import MultiCube
from .model import (
    DiscretizationSpec,
    FieldDistribution,
    HamiltonianMatrix,
    InteractionSpec,
    assemble_hamiltonian,
    field_for_cubes,
    spectrum_bottom,
)
from .seeding import derive_seed


class LocalizationError(ValueError):
    pass


# --------------------------------------------------------------------------
# Spectrum bottom
# --------------------------------------------------------------------------


@dataclass
class BottomRow:
    L: int
    trials: int
    minimum: float
    median: float
    bottoms: list


def bottom_convergence(n: int, d: int, L_list: Sequence[int], trials: int, seed: int,
                       dist: FieldDistribution | None = None, inter: InteractionSpec | None = None,
                       disc: DiscretizationSpec | None = None) -> list[BottomRow]:
    """Ensemble bottoms of ``H`` on ``C_L(0)`` for increasing ``L``.

    Trial ``t`` uses the same field realization for every ``L``.
    """
    if list(L_list) != sorted(set(L_list)):
        raise LocalizationError("L-list must be strictly increasing")
    dist = dist or FieldDistribution()
    inter = inter or InteractionSpec.step()
    seeds = [derive_seed(seed, "bottom", n, d, t) for t in range(trials)]
    rows = []
    for L in L_list:
        cube = MultiCube([tuple([0] * d)] * n, L)
        bottoms = []
        for s in seeds:
            H = assemble_hamiltonian(cube, field_for_cubes(s, [cube], dist), inter, disc)
            bottoms.append(spectrum_bottom(H))
        rows.append(BottomRow(L, trials, float(np.min(bottoms)), float(np.median(bottoms)), bottoms))
    return rows


def dirichlet_box_bottom(L: float, nd: int, h: float = 1.0) -> float:
    """Bottom of the free Laplacian on the lattice box with ``2L/h + 1`` points per axis."""
    npts = round(2 * L / h) + 1
    return nd * (2.0 - 2.0 * math.cos(math.pi / (npts + 1))) / h**2


# --------------------------------------------------------------------------
# Eigenfunction decay
# --------------------------------------------------------------------------


@dataclass
class DecayProfile:
    eigen_index: int
    energy: float
    center: tuple
    distances: np.ndarray
    log_norms: np.ndarray
    fitted_rate: float
    fit_range: tuple
    residual: float
    flagged: bool = False

    def rows(self) -> list[tuple]:
        return [(self.eigen_index, repr(self.energy), int(r), repr(float(v)))
                for r, v in zip(self.distances, self.log_norms)]


def cell_norms(H: HamiltonianMatrix, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Unique cells (lexicographic) and ``|1_cell psi|`` for each."""
    cells = H.cells.reshape(H.dim, -1)
    uniq, inv = np.unique(cells, axis=0, return_inverse=True)
    sq = np.bincount(inv.ravel(), weights=np.abs(psi) ** 2, minlength=len(uniq))
    return uniq, np.sqrt(sq)


def _profile(H: HamiltonianMatrix, psi: np.ndarray, boundary_skip: int):
    cells, norms = cell_norms(H, psi)
    c0 = cells[int(np.argmax(norms))]
    lo = np.asarray(H.box.lo).ravel()
    hi = np.asarray(H.box.hi).ravel()
    inner = np.all((cells >= lo + boundary_skip) & (cells <= hi - boundary_skip), axis=1)
    dist = np.abs(cells - c0).max(axis=1)
    r_vals = np.unique(dist[inner])
    prof = np.array([norms[inner & (dist == r)].max() for r in r_vals])
    return c0, r_vals, prof


def fit_decay(r: np.ndarray, prof: np.ndarray, floor_rel: float = 1e-12, max_frac: float = 0.5,
              available: int | None = None) -> tuple[float, tuple, float]:
    """Least-squares rate of ``log prof`` against ``r``.

    The fit uses ``1 <= r <= r_max``; ``r_max`` is the last distance whose
    profile exceeds ``floor_rel * max``, capped by ``max_frac * available``.
    """
    top = prof.max()
    avail = available if available is not None else int(r.max())
    ok = np.flatnonzero(prof > floor_rel * top)
    r_floor = int(r[ok[-1]]) if ok.size else 0
    r_max = max(2, min(r_floor, int(max_frac * avail)))
    sel = (r >= 1) & (r <= r_max) & (prof > 0)
    if sel.sum() < 3:
        raise LocalizationError("fewer than 3 annuli in the fit range")
    x, y = r[sel].astype(float), np.log(prof[sel])
    slope, icpt = np.polyfit(x, y, 1)
    res = float(np.sqrt(np.mean((y - (slope * x + icpt)) ** 2)))
    return float(-slope), (1, r_max), res


def eigenfunction_decay_profile(H: HamiltonianMatrix, window: tuple, count: int,
                                boundary_skip: int = 2, floor_rel: float = 1e-12,
                                max_frac: float = 0.5, min_rate: float | None = None) -> list[DecayProfile]:
    """Decay profiles of up to ``count`` eigenfunctions with energy in ``window``.

    ``min_rate`` (e.g. a fraction of ``gamma(m, L, N)``) flags slow profiles.
    """
    lam, Q = H.eigh
    sel = np.flatnonzero((lam >= window[0]) & (lam <= window[1]))[:count]
    if sel.size == 0:
        raise LocalizationError(f"no eigenvalues in window {window}")
    avail = int(min(np.asarray(H.box.hi) - np.asarray(H.box.lo)).min() // 2) - boundary_skip
    out = []
    for j in sel:
        c0, r, prof = _profile(H, Q[:, j], boundary_skip)
        rate, fr, res = fit_decay(r, prof, floor_rel, max_frac, avail)
        p = DecayProfile(int(j), float(lam[j]), tuple(int(v) for v in c0), r, np.log(np.maximum(prof, 1e-300)),
                         rate, fr, res)
        if min_rate is not None:
            p.flagged = rate < min_rate
        out.append(p)
    return out


# --------------------------------------------------------------------------
# Dynamical moments
# --------------------------------------------------------------------------


@dataclass
class DynamicalMomentReport:
    s: float
    window: tuple
    K_size: int
    t_grid: np.ndarray
    values: np.ndarray
    max_over_grid: float
    stationary_upper_bound: float
    states: int

    def as_dict(self) -> dict:
        return {
            "s": self.s, "window": list(self.window), "K_size": self.K_size, "states": self.states,
            "t_min": float(self.t_grid.min()) if self.t_grid.size else None,
            "t_max": float(self.t_grid.max()) if self.t_grid.size else None,
            "t_points": int(self.t_grid.size),
            "max_over_grid": self.max_over_grid,
            "stationary_upper_bound": self.stationary_upper_bound,
        }


def default_t_grid(points: int = 64, t_min: float = 0.1, t_max: float = 1e3) -> np.ndarray:
    return np.logspace(math.log10(t_min), math.log10(t_max), points)


def position_weight(H: HamiltonianMatrix) -> np.ndarray:
    """``|x|``: max-norm of the cell coordinate of every grid point."""
    return np.abs(H.cells).reshape(H.dim, -1).max(axis=1).astype(float)


def dynamical_moment(H: HamiltonianMatrix, window: tuple, K: np.ndarray, s: float = 2.0,
                     t_grid: np.ndarray | None = None) -> DynamicalMomentReport:
    """``max_t | |X|^{s/2} exp(-itH) P_I 1_K |`` on a time grid.

    Parameters
    ----------
    H : HamiltonianMatrix
    window : (float, float)
        Spectral window ``I``.
    K : boolean mask
        Initial support, a subset of the box.
    s : float
        Moment order.
    t_grid : array, optional
        Defaults to 64 log-spaced times in ``[0.1, 1e3]``.
    """
    if s < 0:
        raise LocalizationError("s must be non-negative")
    K = np.asarray(K, dtype=bool)
    if K.shape != (H.dim,) or not K.any():
        raise LocalizationError("K must be a non-empty subset of the box")
    t_grid = default_t_grid() if t_grid is None else np.asarray(t_grid, dtype=float)
    lam, Q = H.eigh
    sel = np.flatnonzero((lam >= window[0]) & (lam <= window[1]))
    if sel.size == 0:
        return DynamicalMomentReport(s, tuple(window), int(K.sum()), t_grid, np.zeros(t_grid.size), 0.0, 0.0, 0)
    w = position_weight(H) ** (s / 2.0)
    Phi = Q[:, sel]
    WPhi = w[:, None] * Phi
    C = Phi[K].T  # (states, |K|)
    vals = np.empty(t_grid.size)
    for i, t in enumerate(t_grid):
        M = WPhi @ (np.exp(-1j * lam[sel] * t)[:, None] * C)
        vals[i] = np.linalg.norm(M, 2) if M.shape[1] > 1 else np.linalg.norm(M)
    stationary = float(np.sum(np.linalg.norm(WPhi, axis=0) * np.linalg.norm(C, axis=1)))
    return DynamicalMomentReport(s, tuple(window), int(K.sum()), t_grid, vals, float(vals.max()), stationary,
                                 int(sel.size))


def box_hamiltonian(n: int, d: int, half_side: int, seed: int, dist: FieldDistribution,
                    inter: InteractionSpec | None = None, disc: DiscretizationSpec | None = None,
                    center=None) -> HamiltonianMatrix:
    """Cube ``C_L(center)`` (default origin) with its own field realization."""
    center = center if center is not None else [tuple([0] * d)] * n
    cube = MultiCube(center, half_side)
    return assemble_hamiltonian(cube, field_for_cubes(seed, [cube], dist), inter or InteractionSpec.step(), disc)
