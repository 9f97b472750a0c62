"""Certificate for the CNR => nonsingular step, built from scale-``L_k`` data.

For a point ``z`` of the big cube ``C_L(u)`` let ``f(z) = |1_B G_L(E) e_z|``
with ``B`` the out-shell. If ``Q`` is a sub-cube avoiding ``B`` and
containing ``z``, the resolvent identity gives

    f(z) <= t * sum_{y in d-Q, y' ~ y outside Q} |G_Q(y, z)| f(y'),

with ``t = h^{-2}`` the hopping. For an ``(E, m)``-nonsingular ``Q`` and
``z`` in its int region the sum is at most
``t * D * sqrt(|d-Q|) * exp(-gamma l)``; for a non-resonant ``Q`` and any
``z`` it is at most ``t * D * sqrt(|d-Q|) * exp(sqrt(l))``. Starting from the
non-resonance bound ``f <= exp(sqrt(L))`` and iterating these inequalities to
a fixed point yields a rigorous upper bound for ``|1_B G_L 1_int|``.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import MultiCube, kappa
from ..model import HamiltonianMatrix
from ..spectral import (
    CNRScan,
    _offsets,
    green_block_norm,
    is_singular,
    resonance_threshold,
    restrict,
    spectrum_distance,
    subcube_indices,
)
from .schedule import gamma_of

log = logging.getLogger(__name__)


class ChainPreconditionError(ValueError):
    """Big cube not CNR, or too many singular clusters."""


def nominal_chain_bound(delta_plus: float, n_plus: int, delta_0: float, n_0: int, L_next: int) -> float:
    """``delta_+^{n_+} delta_0^{n_0} exp(sqrt(L_next))``."""
    return delta_plus**n_plus * delta_0**n_0 * math.exp(math.sqrt(L_next))


def nominal_deltas(n: int, d: int, C_geom: float, gamma: float, L_k: int) -> tuple[float, float]:
    """``(3^{nd} C e^{-gamma L_k}, 18^{nd} C^2 e^{sqrt(2 L_k)} e^{-gamma L_k})``."""
    base = math.exp(-gamma * L_k)
    return (3 ** (n * d) * C_geom * base,
            18 ** (n * d) * C_geom**2 * math.exp(math.sqrt(2 * L_k)) * base)


def required_ns_steps(L_next: int, L_k: int, J: int) -> float:
    """``L_{k+1} / L_k - 7 J``."""
    return L_next / L_k - 7 * J


@dataclass
class ChainCertificate:
    bound: float
    ns_claimed: bool
    threshold: float
    singular_clusters: int
    J: int
    subcubes: int
    singular_subcubes: int
    iterations: int
    in_regime: bool
    required_steps: float
    nominal_delta_plus: float | None = None
    nominal_delta_0: float | None = None
    notes: list = field(default_factory=list)


def _boundary_pairs(H: HamiltonianMatrix, idx: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hopping edges ``(y, y')`` with ``y`` in the sub-cube and ``y'`` outside."""
    inside = np.zeros(H.dim, dtype=bool)
    inside[idx] = True
    A = H.matrix.tocoo()
    sel = inside[A.row] & ~inside[A.col] & (A.row != A.col)
    return A.row[sel], A.col[sel]


def _cluster_count(centers: np.ndarray, radius: int) -> int:
    """Greedy grouping of singular centers into balls of the given radius."""
    remaining = [c for c in centers]
    count = 0
    while remaining:
        seed = remaining.pop(0)
        count += 1
        remaining = [c for c in remaining if np.abs(c - seed).max() > radius]
    return count


def gri_chain_certificate(
    H: HamiltonianMatrix,
    E: float,
    m: float,
    n: int,
    N: int,
    ell: int,
    J: int | None = None,
    scan: CNRScan | None = None,
    C_geom: float | None = None,
    stride: int | None = None,
    tol: float = 1e-12,
    max_iter: int = 500,
) -> ChainCertificate:
    """Bound ``|1_out G_L(E) 1_int|`` of ``H`` from sub-cubes of half-side ``ell``.

    Parameters
    ----------
    H : HamiltonianMatrix
        Big cube at scale ``L = L_{k+1}``.
    E, m, n, N : energy, mass and particle counts.
    ell : int
        Previous scale ``L_k``.
    J : int, optional
        Admissible number of singular clusters, default ``kappa(n) + 5``.
    scan : CNRScan, optional
        Precomputed CNR scan of ``H``; built if missing.
    C_geom : float, optional
        Calibrated constant, used only for the reported nominal deltas.
    stride : int, optional
        Sub-cube center spacing, default ``max(1, ell // 3)``.

    Raises
    ------
    ChainPreconditionError
        If the big cube is not ``E``-CNR or has more than ``J`` singular
        clusters.
    """
    cube = H.cube
    L = cube.L
    J = kappa(n) + 5 if J is None else J
    if ell >= L:
        raise ChainPreconditionError("sub-scale must be smaller than the cube")
    scan = scan or CNRScan.build(H)
    if not scan.is_cnr(E):
        raise ChainPreconditionError(f"{cube.describe()} is not E-CNR at E={E}")
    stride = stride or max(1, ell // 3)
    t = float(H.refine**2)
    D = H.n * H.d
    u = cube.center.array()
    out_mask = H.region("out")
    int_mask = H.region("int")

    # sub-cubes of scale ell clear of the out-shell
    reach = L - 2 - ell
    if reach < 0:
        raise ChainPreconditionError("no sub-cube fits inside the cube minus its out-shell")
    subs = [MultiCube(u + o.reshape(u.shape), ell) for o in _offsets(u.size, reach, stride)]
    gam = gamma_of(m, ell, n, N)
    sing_thr = math.exp(-gam * ell)
    moves = []  # (start_mask_indices, factor, exterior_indices)
    singular_centers = []
    for sub in subs:
        idx = subcube_indices(H, sub)
        R = restrict(H, sub)
        probe = is_singular(sub, R, E, m, n, N)
        rows, cols = _boundary_pairs(H, idx)
        n_boundary = np.unique(rows).size
        ext = np.unique(cols)
        geo = t * D * math.sqrt(max(n_boundary, 1))
        if not probe.singular:
            moves.append((idx[R.region("int")], geo * sing_thr, ext))
        else:
            singular_centers.append(sub.center.array().ravel())
        dist = spectrum_distance(R, E)
        if dist > resonance_threshold(ell):
            moves.append((idx, geo * math.exp(math.sqrt(ell)), ext))
    # non-resonant jump cubes of half-side 2 ell around the singular sub-cubes
    for c in singular_centers:
        big = 2 * ell
        if np.abs(c - u.ravel()).max() + big > L - 2:
            continue
        jc = MultiCube(c.reshape(u.shape), big)
        R = restrict(H, jc)
        if spectrum_distance(R, E) > resonance_threshold(big):
            idx = subcube_indices(H, jc)
            rows, cols = _boundary_pairs(H, idx)
            geo = t * D * math.sqrt(max(np.unique(rows).size, 1))
            moves.append((idx, geo * math.exp(math.sqrt(big)), np.unique(cols)))
    clusters = _cluster_count(np.array(singular_centers), 2 * ell) if singular_centers else 0
    if clusters > J:
        raise ChainPreconditionError(f"{clusters} singular clusters exceed J={J}")

    b = np.full(H.dim, math.exp(math.sqrt(L)))
    it = 0
    for it in range(1, max_iter + 1):
        changed = False
        for start, factor, ext in moves:
            val = factor * b[ext].max() if ext.size else 0.0
            cur = b[start]
            upd = cur > val * (1.0 + tol)
            if upd.any():
                b[start[upd]] = val
                changed = True
        if not changed:
            break
    bound = float(math.sqrt(np.sum(b[int_mask] ** 2)))
    thr = math.exp(-gamma_of(m, L, n, N) * L)
    req = required_ns_steps(L, ell, J)
    in_regime = req > 0
    cert = ChainCertificate(
        bound=bound,
        ns_claimed=bound <= thr,
        threshold=thr,
        singular_clusters=clusters,
        J=J,
        subcubes=len(subs),
        singular_subcubes=len(singular_centers),
        iterations=it,
        in_regime=in_regime,
        required_steps=req,
    )
    if C_geom is not None:
        cert.nominal_delta_plus, cert.nominal_delta_0 = nominal_deltas(n, H.d, C_geom, gam, ell)
    if not in_regime:
        msg = (f"out of regime: L_(k+1)/L_k - 7J = {req:.3f} <= 0 for L={L}, l={ell}, J={J}; "
               "certificate is a computed bound only")
        cert.notes.append(msg)
        log.info(msg)
    return cert


def direct_block_norm(H: HamiltonianMatrix, E: float) -> float:
    return green_block_norm(H, E, H.region("int"), H.region("out"))
