"""High non-resonance, tunnelling, and resonant sub-rectangles of PI cubes."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from ..geometry import MultiCube, find_separating_partition
from ..model import (
    Box,
    DiscretizationSpec,
    HamiltonianMatrix,
    InteractionSpec,
    RandomFieldSample,
    assemble_box,
    assemble_pi_factors,
)
from ..spectral import CNRScan, _offsets, is_singular, resonance_threshold, restrict, spectrum_distance
from .schedule import previous_scale


class TunnellingError(ValueError):
    pass


@dataclass
class PIAnalysis:
    """A PI cube with its two factor Hamiltonians and their CNR scans."""

    cube: MultiCube
    left: HamiltonianMatrix
    right: HamiltonianMatrix
    J: object
    left_scan: CNRScan
    right_scan: CNRScan
    field: RandomFieldSample
    inter: InteractionSpec
    disc: DiscretizationSpec

    @classmethod
    def build(cls, cube: MultiCube, field: RandomFieldSample, inter: InteractionSpec,
              disc: DiscretizationSpec | None = None, stride: int | None = None) -> "PIAnalysis":
        disc = disc or DiscretizationSpec()
        left, right, J = assemble_pi_factors(cube, field, inter, disc)
        return cls(cube, left, right, J, CNRScan.build(left, stride), CNRScan.build(right, stride),
                   field, inter, disc)

    @property
    def lam(self) -> np.ndarray:
        return self.left.eigenvalues

    @property
    def mu(self) -> np.ndarray:
        return self.right.eigenvalues


def check_hnr(pi: PIAnalysis, E: float, cnr_oracle: Callable | None = None) -> bool:
    """Whether the PI cube is ``E``-highly non-resonant.

    The left factor must be ``(E - mu_j)``-CNR for every eigenvalue ``mu_j``
    of the right factor, and the right factor ``(E - lam_i)``-CNR for every
    ``lam_i``. ``cnr_oracle(side, energy)`` overrides the CNR scans.
    """
    if cnr_oracle is not None:
        return all(cnr_oracle("left", E - mu) for mu in pi.mu) and all(
            cnr_oracle("right", E - lam) for lam in pi.lam
        )
    return bool(pi.left_scan.cnr_many(E - pi.mu).all() and pi.right_scan.cnr_many(E - pi.lam).all())


@dataclass
class RectangleWitness:
    side: str  # "left": C_l(v') x C_L(u''), "right": C_L(u') x C_l(v'')
    subcube: MultiCube
    ell: int
    shift_index: int
    distance: float
    verified_distance: float | None = None

    @property
    def verified(self) -> bool:
        return self.verified_distance is not None and self.verified_distance <= resonance_threshold(self.ell)


def rectangle_box(pi: PIAnalysis, w: RectangleWitness) -> Box:
    """Box of the resonant rectangle in the particle order of the PI cube."""
    u = pi.cube.center.array()
    L = pi.cube.L
    lo = u - L
    hi = u + L
    members = sorted(pi.J.J) if w.side == "left" else sorted(pi.J.complement)
    sub = w.subcube.center.array()
    for k, i in enumerate(members):
        lo[i] = sub[k] - w.ell
        hi[i] = sub[k] + w.ell
    return Box(lo, hi)


def find_resonant_rectangle(pi: PIAnalysis, E: float, verify: bool = True) -> RectangleWitness | None:
    """Constructive form of the HNR-failure lemma.

    If the cube is not ``E``-HNR, return a sub-rectangle ``C_l(v') x C_L(u'')``
    (or the mirror one) that is ``E``-resonant with threshold ``exp(-sqrt(l))``.
    With ``verify`` the rectangle Hamiltonian is assembled from scratch and its
    spectrum distance to ``E`` recorded.
    """
    found = None
    for side, scan, shifts in (("left", pi.left_scan, pi.mu), ("right", pi.right_scan, pi.lam)):
        for j, s in enumerate(shifts):
            rec = scan.first_resonant(E - s)
            if rec is not None:
                lam = rec.eigenvalues
                dist = float(np.min(np.abs(lam - (E - s))))
                found = RectangleWitness(side, rec.cube, rec.cube.L, j, dist)
                break
        if found:
            break
    if found is None:
        return None
    if verify:
        H = assemble_box(rectangle_box(pi, found), pi.field, pi.inter, pi.disc)
        found.verified_distance = spectrum_distance(H, E)
    return found


# --------------------------------------------------------------------------
# Tunnelling
# --------------------------------------------------------------------------


@dataclass
class TunnellingResult:
    kind: str  # "NT", "LT" or "RT"
    shift_index: int | None = None
    v1: MultiCube | None = None
    v2: MultiCube | None = None


def _factor_subcubes(H: HamiltonianMatrix, ell: int, stride: int) -> list[MultiCube]:
    cube = H.cube
    u = cube.center.array()
    offs = _offsets(u.size, cube.L - ell, stride) if cube.L > ell else np.zeros((1, u.size), int)
    return [MultiCube(u + o.reshape(u.shape), ell) for o in offs]


def _separable_pairs(subs: list[MultiCube], ell: int, N: int) -> list[tuple[int, int]]:
    return [
        (i, j)
        for i, j in itertools.combinations(range(len(subs)), 2)
        if find_separating_partition(subs[i].center, subs[j].center, ell, N) is not None
    ]


def check_tunnelling(
    pi: PIAnalysis,
    E: float,
    m: float,
    N: int,
    singularity_oracle: Callable | None = None,
    stride: int = 1,
) -> TunnellingResult:
    """Left/right tunnelling of a PI cube at scale ``L``.

    ``LT`` when, for some eigenvalue ``mu_j`` of the right factor, the left
    factor holds two separable ``(E - mu_j, m)``-singular cubes of the
    previous scale ``l`` (``floor(l^{3/2}) + 1 = L``); ``RT`` mirrors it.
    ``singularity_oracle(cube, H_sub, energy)`` replaces the default
    singularity test.
    """
    L = pi.cube.L
    ell = previous_scale(L)
    if ell is None:
        raise TunnellingError(f"L={L} is not of the form floor(l^1.5) + 1")
    for kind, H, shifts in (("LT", pi.left, pi.mu), ("RT", pi.right, pi.lam)):
        subs = _factor_subcubes(H, ell, stride)
        pairs = _separable_pairs(subs, ell, N)
        if not pairs:
            continue  # vacuous: no separable pair fits
        restricted = [restrict(H, s) for s in subs]
        n_f = H.n
        for j, s in enumerate(shifts):
            Es = E - s
            if singularity_oracle is None:
                flags = [is_singular(c, R, Es, m, n_f, N).singular for c, R in zip(subs, restricted)]
            else:
                flags = [bool(singularity_oracle(c, R, Es)) for c, R in zip(subs, restricted)]
            for a, b in pairs:
                if flags[a] and flags[b]:
                    return TunnellingResult(kind, j, subs[a], subs[b])
    return TunnellingResult("NT")


def lemma_nd_ro_ns_margin(m: float, L: int, n: int, N: int) -> float:
    """Slack of the gamma arithmetic behind the HNR + NT => NS step.

    Positive when ``gamma(m, L, n-1) - gamma(m, L, n)`` exceeds the
    ``L^{-1/2}``-order losses; only then is the step expected to hold.
    """
    from .schedule import gamma_of

    if n < 2:
        return -math.inf
    gap = gamma_of(m, L, n - 1, N) - gamma_of(m, L, n, N)
    return gap * L - 2.0 * math.sqrt(L) - n * math.log(2 * L + 1)
