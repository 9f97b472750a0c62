"""Green-function block norms and the resonance/singularity predicates.

All resolvents are evaluated through the cached dense eigendecomposition
``H = Q diag(lam) Q^T`` so that ``1_B (H - E)^{-1} 1_A = Q_B diag(1/(lam - E)) Q_A^T``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np
import scipy.linalg as sla

from .geometry import MultiCube, as_config
from .model import (
    DiscretizationSpec,
    HamiltonianMatrix,
    InteractionSpec,
    RandomFieldSample,
    assemble_hamiltonian,
)
from .msa.schedule import ceil_two_thirds, gamma_of

RESOLVENT_TOL = 1e-12


class ResolventError(ArithmeticError):
    """``E`` lies (numerically) in the spectrum."""


class SpectralPreconditionError(ValueError):
    pass


# --------------------------------------------------------------------------
# Resolvent blocks
# --------------------------------------------------------------------------


def _as_index(mask_or_idx, dim: int) -> np.ndarray:
    a = np.asarray(mask_or_idx)
    if a.dtype == bool:
        if a.shape != (dim,):
            raise ValueError(f"mask of shape {a.shape} for dimension {dim}")
        return np.flatnonzero(a)
    return a.astype(np.int64).ravel()


def spectrum_distance(H: HamiltonianMatrix, E: float) -> float:
    lam = H.eigenvalues
    i = np.searchsorted(lam, E)
    cands = lam[max(i - 1, 0): i + 1]
    return float(np.min(np.abs(cands - E)))


def green_block_norm(H: HamiltonianMatrix, E: float, A, B, tol: float = RESOLVENT_TOL) -> float:
    """Spectral norm of ``1_B (H - E)^{-1} 1_A``.

    Parameters
    ----------
    H : HamiltonianMatrix
    E : float
        Energy, at distance more than ``tol`` from the spectrum.
    A, B : boolean masks or index arrays
        Column and row sets.
    """
    lam, Q = H.eigh
    if spectrum_distance(H, E) <= tol:
        raise ResolventError(f"E={E!r} within {tol} of the spectrum")
    a = _as_index(A, H.dim)
    b = _as_index(B, H.dim)
    if a.size == 0 or b.size == 0:
        return 0.0
    w = 1.0 / (lam - E)
    block = (Q[b] * w) @ Q[a].T
    return float(sla.norm(block, 2, check_finite=False))


def green_block_norms(H: HamiltonianMatrix, energies: Sequence[float], A, B) -> np.ndarray:
    """Block norms for many energies; ``inf`` where the resolvent is undefined."""
    lam, Q = H.eigh
    a = _as_index(A, H.dim)
    b = _as_index(B, H.dim)
    out = np.empty(len(energies))
    if a.size == 0 or b.size == 0:
        out[:] = 0.0
        return out
    Qa, Qb = Q[a], Q[b]
    small = a.size <= b.size
    for k, E in enumerate(energies):
        if spectrum_distance(H, E) <= RESOLVENT_TOL:
            out[k] = np.inf
            continue
        w = 1.0 / (lam - E)
        # norm via the smaller Gram matrix
        if small:
            M = (Qa * w) @ (Qb.T @ Qb) @ (Qa * w).T
        else:
            M = (Qb * w) @ (Qa.T @ Qa) @ (Qb * w).T
        out[k] = math.sqrt(max(float(sla.eigvalsh(M, check_finite=False)[-1]), 0.0))
    return out


# --------------------------------------------------------------------------
# Resonance and CNR
# --------------------------------------------------------------------------


def resonance_threshold(L: float) -> float:
    return math.exp(-math.sqrt(L))


def is_resonant(H: HamiltonianMatrix, E: float, L: float | None = None) -> bool:
    """``dist(E, sigma(H)) <= exp(-sqrt(L))``; ``L`` defaults to the cube half-side."""
    if L is None:
        if H.cube is None:
            raise SpectralPreconditionError("need L for a non-cube box")
        L = H.cube.L
    return spectrum_distance(H, E) <= resonance_threshold(L)


def default_stride(L: int) -> int:
    return 1 if L <= 16 else L // 8


def _offsets(nd: int, reach: int, stride: int) -> np.ndarray:
    steps = np.arange(-(reach // stride), reach // stride + 1) * stride
    grids = np.meshgrid(*([steps] * nd), indexing="ij")
    return np.stack([g.ravel() for g in grids], axis=1)


def subcube_indices(H: HamiltonianMatrix, sub: MultiCube) -> np.ndarray:
    """Indices of the grid points of ``sub`` inside the box of ``H``, in C order."""
    if H.cube is not None and not H.cube.contains_cube(sub):
        raise SpectralPreconditionError(f"{sub.describe()} not inside {H.cube.describe()}")
    m = H.refine
    shape = H.box.shape(m)
    lo = np.asarray(H.box.lo).ravel()
    slo = (sub.center.array().ravel() - sub.L - lo) * m
    axes = [np.arange(s, s + 2 * sub.L * m + 1) for s in slo]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.ravel_multi_index(tuple(g.ravel() for g in mesh), shape)


def restrict(H: HamiltonianMatrix, sub: MultiCube) -> HamiltonianMatrix:
    """Dirichlet restriction of ``H`` to a sub-cube (a principal submatrix)."""
    from .model import Box

    idx = subcube_indices(H, sub)
    mat = H.matrix[idx][:, idx].tocsr()
    R = HamiltonianMatrix(mat, Box.of_cube(sub), H.refine, sub, dict(H.provenance))
    if H.potential is not None:
        R.potential = H.potential[idx]
    return R


@dataclass
class SubcubeRecord:
    cube: MultiCube
    eigenvalues: np.ndarray
    threshold: float


@dataclass
class CNRScan:
    """Spectra of all scanned sub-cubes ``C_l(v)`` of a cube.

    Sub-cube half-sides run over ``ceil(L^{2/3}) .. L``; centers are
    ``u + stride * Z^{nd}`` with ``|v - u| + l <= L``. The scan is built once
    and then queried for any number of energies.
    """

    cube: MultiCube
    stride: int
    records: list = field(default_factory=list)

    @classmethod
    def build(cls, H: HamiltonianMatrix, stride: int | None = None, min_side: int | None = None) -> "CNRScan":
        cube = H.cube
        if cube is None:
            raise SpectralPreconditionError("CNR needs a cube")
        L = cube.L
        stride = stride or default_stride(L)
        lmin = ceil_two_thirds(L) if min_side is None else min_side
        if lmin > L:
            raise SpectralPreconditionError(f"L={L} smaller than ceil(L^(2/3))={lmin}")
        scan = cls(cube, stride)
        u = cube.center.array()
        nd = u.size
        for ell in range(lmin, L + 1):
            if ell == L:
                offs = np.zeros((1, nd), dtype=np.int64)
            else:
                offs = _offsets(nd, L - ell, stride)
            for off in offs:
                sub = MultiCube(u + off.reshape(u.shape), ell)
                if ell == L:
                    lam = H.eigenvalues
                else:
                    lam = sla.eigvalsh(restrict(H, sub).dense(), check_finite=False)
                scan.records.append(SubcubeRecord(sub, lam, resonance_threshold(ell)))
        return scan

    @property
    def size(self) -> int:
        return len(self.records)

    def resonant(self, E: float) -> list[SubcubeRecord]:
        out = []
        for r in self.records:
            i = np.searchsorted(r.eigenvalues, E)
            c = r.eigenvalues[max(i - 1, 0): i + 1]
            if np.min(np.abs(c - E)) <= r.threshold:
                out.append(r)
        return out

    def is_cnr(self, E: float) -> bool:
        return self.first_resonant(E) is None

    def first_resonant(self, E: float) -> SubcubeRecord | None:
        for r in self.records:
            i = np.searchsorted(r.eigenvalues, E)
            c = r.eigenvalues[max(i - 1, 0): i + 1]
            if np.min(np.abs(c - E)) <= r.threshold:
                return r
        return None

    def cnr_many(self, energies) -> np.ndarray:
        """Vectorized CNR flags for an array of energies."""
        E = np.asarray(energies, dtype=float)
        bad = np.zeros(E.shape, dtype=bool)
        for r in self.records:
            lam = r.eigenvalues
            i = np.clip(np.searchsorted(lam, E), 1, len(lam) - 1) if len(lam) > 1 else np.zeros(E.shape, int)
            d = np.abs(lam[i] - E)
            if len(lam) > 1:
                d = np.minimum(d, np.abs(lam[i - 1] - E))
            bad |= d <= r.threshold
        return ~bad

    def bad_intervals(self) -> list[tuple[float, float]]:
        """Union of closed intervals of energies at which the cube is not CNR."""
        iv = []
        for r in self.records:
            iv.extend((lam - r.threshold, lam + r.threshold) for lam in r.eigenvalues)
        return merge_intervals(iv)


def merge_intervals(iv: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    iv = sorted(iv)
    out: list[list[float]] = []
    for a, b in iv:
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [tuple(x) for x in out]


def is_cnr(
    cube: MultiCube,
    field: RandomFieldSample,
    inter: InteractionSpec,
    disc: DiscretizationSpec | None,
    E: float,
    alpha: float = 1.5,
    stride: int | None = None,
) -> bool:
    """Whether no scanned sub-cube of size ``>= L^{1/alpha}`` is ``E``-resonant."""
    if alpha != 1.5:
        raise SpectralPreconditionError("only alpha = 3/2 is supported")
    H = assemble_hamiltonian(cube, field, inter, disc)
    return CNRScan.build(H, stride).is_cnr(E)


# --------------------------------------------------------------------------
# Singularity
# --------------------------------------------------------------------------


@dataclass
class GreenProbe:
    cube: str
    E: float
    block_norm: float
    resonant: bool
    cnr: bool | None
    singular: bool
    gamma_used: float
    sing_threshold: float
    res_threshold: float

    CSV_HEADER = ("cube", "E", "block_norm", "resonant", "cnr", "singular", "gamma",
                  "sing_threshold", "res_threshold")

    def row(self) -> tuple:
        cnr = "" if self.cnr is None else int(self.cnr)
        return (self.cube, repr(float(self.E)), repr(self.block_norm), int(self.resonant), cnr,
                int(self.singular), repr(self.gamma_used), repr(self.sing_threshold),
                repr(self.res_threshold))


def singular_threshold(m: float, L: int, n: int, N: int) -> float:
    return math.exp(-gamma_of(m, L, n, N) * L)


def is_singular(cube: MultiCube | None, H: HamiltonianMatrix, E: float, m: float, n: int, N: int,
                scan: CNRScan | None = None) -> GreenProbe:
    """Classify ``H`` on ``cube`` as ``(E, m)``-singular or not.

    Singular iff ``E`` is within ``1e-12`` of the spectrum or the block norm
    ``|1_out G(E) 1_int|`` exceeds ``exp(-gamma(m, L, n) L)``.
    """
    cube = cube or H.cube
    L = cube.L
    g = gamma_of(m, L, n, N)
    thr = math.exp(-g * L)
    dist = spectrum_distance(H, E)
    res_thr = resonance_threshold(L)
    if dist <= RESOLVENT_TOL:
        norm = math.inf
    else:
        norm = green_block_norm(H, E, H.region("int"), H.region("out"))
    cnr = scan.is_cnr(E) if scan is not None else None
    return GreenProbe(cube.describe(), float(E), norm, dist <= res_thr, cnr, norm > thr, g, thr, res_thr)


# --------------------------------------------------------------------------
# Combes-Thomas
# --------------------------------------------------------------------------


def combes_thomas_rhs(eta, gamma: float, D: int, r):
    """``exp(gamma sqrt(eta D)) exp(-gamma sqrt(eta) r) / ((1 - gamma^2) eta)``."""
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    eta_arr = np.asarray(eta, dtype=float)
    if np.any(eta_arr <= 0):
        raise ValueError("eta must be positive")
    r = np.asarray(r, dtype=float)
    val = np.exp(gamma * np.sqrt(eta_arr * D) - gamma * np.sqrt(eta_arr) * r) / ((1.0 - gamma**2) * eta_arr)
    return float(val) if val.ndim == 0 else val


@dataclass
class CTReport:
    max_ratio: float
    passed: bool
    pairs: int
    eta: float
    gamma: float
    worst: tuple | None = None


def _cell_index(H: HamiltonianMatrix):
    cells = H.cells.reshape(H.dim, -1)
    uniq, inv = np.unique(cells, axis=0, return_inverse=True)
    return uniq, inv.ravel()


def log_green_below(H: HamiltonianMatrix, E: float) -> np.ndarray:
    """Entrywise ``log G(E)`` for ``E`` below the spectrum.

    ``H - E`` is then a positive definite M-matrix, so ``G >= 0`` and its
    entries can be formed without cancellation: in one dimension through the
    ratio recurrences of the tridiagonal minors (no underflow), otherwise by a
    Cholesky solve.
    """
    A = H.matrix
    npts = H.dim
    if H.n * H.d == 1:
        a = A.diagonal() - E
        t = -A.diagonal(1)[0] if npts > 1 else 1.0
        if t == 0.0:
            a = A.diagonal() - E
            if np.any(a <= 0):
                raise SpectralPreconditionError("E must lie strictly below the spectrum")
            out = np.full((npts, npts), -np.inf)
            out[np.diag_indices(npts)] = -np.log(a)
            return out
        t2 = t * t
        rho = np.empty(npts)
        rho[0] = a[0]
        for i in range(1, npts):
            rho[i] = a[i] - t2 / rho[i - 1]
        sig = np.empty(npts)
        sig[-1] = a[-1]
        for i in range(npts - 2, -1, -1):
            sig[i] = a[i] - t2 / sig[i + 1]
        if np.any(rho <= 0) or np.any(sig <= 0):
            raise SpectralPreconditionError("E must lie strictly below the spectrum")
        # log theta_{i-1} for i = 0..n-1 and log phi_{j+1} for j = 0..n-1
        log_theta = np.concatenate([[0.0], np.cumsum(np.log(rho))])
        log_phi = np.concatenate([np.cumsum(np.log(sig[::-1]))[::-1], [0.0]])
        i = np.arange(npts)
        lo = np.minimum.outer(i, i)
        hi = np.maximum.outer(i, i)
        return (hi - lo) * math.log(t) + log_theta[lo] + log_phi[hi + 1] - log_theta[npts]
    M = A.toarray() - E * np.eye(npts)
    G = sla.solve(M, np.eye(npts), assume_a="pos", check_finite=False)
    with np.errstate(divide="ignore"):
        return np.log(np.maximum(G, 0.0))


def verify_combes_thomas(H: HamiltonianMatrix, E: float, gamma: float, pairs=None) -> CTReport:
    """Check ``|1_x G(E) 1_y| <= combes_thomas_rhs(eta, gamma, nd, |x - y|)``.

    ``pairs`` lists unit-cell pairs as index pairs into the sorted cell table;
    by default every pair is checked. Ratios are formed in log space.
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError("gamma must lie in (0, 1)")
    eta = float(H.eigenvalues[0] - E)
    if eta <= 0:
        raise SpectralPreconditionError("E must lie strictly below the spectrum")
    D = H.n * H.d
    logG = log_green_below(H, E)
    cells, inv = _cell_index(H)

    def log_rhs(r):
        return (gamma * math.sqrt(eta * D) - gamma * math.sqrt(eta) * r
                - math.log((1.0 - gamma**2) * eta))

    if H.refine == 1 and pairs is None:
        order = np.argsort(inv)
        dist = np.abs(cells[:, None, :] - cells[None, :, :]).max(axis=2)
        log_ratio = logG[np.ix_(order, order)] - log_rhs(dist)
        k = int(np.argmax(log_ratio))
        worst = np.unravel_index(k, log_ratio.shape)
        mx = float(np.exp(log_ratio.flat[k]))
        return CTReport(mx, mx <= 1.0, log_ratio.size, eta, gamma, tuple(int(i) for i in worst))
    G = np.exp(logG)
    if pairs is None:
        pairs = [(i, j) for i in range(len(cells)) for j in range(len(cells))]
    members = [np.flatnonzero(inv == c) for c in range(len(cells))]
    mx, worst = 0.0, None
    for i, j in pairs:
        lhs = sla.norm(G[np.ix_(members[i], members[j])], 2)
        r = int(np.abs(cells[i] - cells[j]).max())
        ratio = math.exp(math.log(lhs) - log_rhs(r)) if lhs > 0 else 0.0
        if ratio > mx:
            mx, worst = float(ratio), (int(i), int(j))
    return CTReport(mx, mx <= 1.0, len(pairs), eta, gamma, worst)


# --------------------------------------------------------------------------
# GRI / EDI
# --------------------------------------------------------------------------


@dataclass
class GRIReport:
    lhs: float
    rhs_product: float
    ratio: float


def verify_gri(outer: HamiltonianMatrix, inner_cube: MultiCube, E: float, A=None, B=None) -> GRIReport:
    """Empirical constant of the geometric resolvent inequality.

    ``A`` (default: int of the inner cube) and ``B`` (default: out of the
    outer cube) are masks on the outer grid. Returns
    ``|1_B G_L 1_A| / (|1_B G_L 1_out'| |1_out' G_l 1_A|)`` where ``out'`` is
    the out-shell of the inner cube.
    """
    inner = restrict(outer, inner_cube)
    idx = subcube_indices(outer, inner_cube)
    in_inner = np.zeros(outer.dim, dtype=bool)
    in_inner[idx] = True
    if A is None:
        A = np.zeros(outer.dim, dtype=bool)
        A[idx[inner.region("int")]] = True
    if B is None:
        B = outer.region("out") & ~in_inner
    A = np.asarray(A, dtype=bool)
    B = np.asarray(B, dtype=bool)
    pos = np.full(outer.dim, -1)
    pos[idx] = np.arange(idx.size)
    if np.any(A & ~in_inner) or np.any(pos[A] >= 0) and not np.all(inner.region("int")[pos[A]]):
        raise SpectralPreconditionError("A must lie in the int region of the inner cube")
    if np.any(B & in_inner):
        raise SpectralPreconditionError("B must avoid the inner cube")
    for M in (outer, inner):
        if spectrum_distance(M, E) <= RESOLVENT_TOL:
            raise ResolventError("E in the spectrum of one of the cubes")
    if not A.any() or not B.any():
        return GRIReport(0.0, 0.0, 0.0)
    out_inner_local = inner.region("out")
    out_inner = np.zeros(outer.dim, dtype=bool)
    out_inner[idx[out_inner_local]] = True
    lhs = green_block_norm(outer, E, A, B)
    left = green_block_norm(outer, E, out_inner, B)
    right = green_block_norm(inner, E, pos[A], out_inner_local)
    prod = left * right
    return GRIReport(lhs, prod, lhs / prod if prod > 0 else math.inf)


@dataclass
class EDIReport:
    lhs: float
    green_norm: float
    out_norm: float
    ratio: float
    passed: bool | None


def verify_edi(box: HamiltonianMatrix, E: float, psi: np.ndarray, sub: MultiCube,
               x=None, C: float | None = None) -> EDIReport:
    """Empirical constant of the eigenfunction decay inequality.

    ``lhs = |1_{C_1(x)} psi|`` with ``x`` defaulting to the sub-cube center;
    the ratio is ``lhs / (|1_out G_l(E) 1_int| |1_out psi|)``.
    """
    inner = restrict(box, sub)
    if spectrum_distance(inner, E) <= RESOLVENT_TOL:
        raise ResolventError("E in the spectrum of the sub-cube")
    idx = subcube_indices(box, sub)
    x = sub.center if x is None else as_config(x)
    near = box.region("ball", x, 1)
    lhs = float(np.linalg.norm(psi[near]))
    out_local = inner.region("out")
    out_norm = float(np.linalg.norm(psi[idx[out_local]]))
    gn = green_block_norm(inner, E, inner.region("int"), out_local)
    denom = gn * out_norm
    ratio = lhs / denom if denom > 0 else (0.0 if lhs == 0 else math.inf)
    return EDIReport(lhs, gn, out_norm, ratio, None if C is None else ratio <= C)
