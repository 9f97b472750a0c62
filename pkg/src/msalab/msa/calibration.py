"""Ensemble calibration of the geometric constant in the GRI and EDI."""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import MultiCube
from ..model import (
    DiscretizationSpec,
    FieldDistribution,
    InteractionSpec,
    assemble_hamiltonian,
    field_for_cubes,
)
from ..spectral import ResolventError, verify_edi, verify_gri
from .statistics import _Bound, parallel_map, trial_seeds


@dataclass
class CalibrationInstance:
    seed: int
    inner_center: int
    E: float
    gri_ratio: float
    edi_ratio: float


@dataclass
class CalibrationReport:
    L: int
    ell: int
    instances: list = field(default_factory=list)

    @property
    def gri_ratios(self) -> np.ndarray:
        return np.array([i.gri_ratio for i in self.instances])

    @property
    def edi_ratios(self) -> np.ndarray:
        return np.array([i.edi_ratio for i in self.instances if math.isfinite(i.edi_ratio)])

    @property
    def C_geom(self) -> float:
        return float(self.gri_ratios.max())

    @property
    def C_edi(self) -> float:
        r = self.edi_ratios
        return float(r.max()) if r.size else math.nan

    def half_maxima(self) -> tuple[float, float]:
        r = self.gri_ratios
        h = r.size // 2
        return float(r[:h].max()), float(r[h:].max())

    @property
    def half_spread(self) -> float:
        a, b = self.half_maxima()
        return max(a, b) / min(a, b) if min(a, b) > 0 else math.inf

    @property
    def stable(self) -> bool:
        return math.isfinite(self.C_geom) and self.half_spread < 2.0

    CSV_HEADER = ("instance", "seed", "inner_center", "E", "gri_ratio", "edi_ratio")

    def rows(self) -> list[tuple]:
        return [(k, i.seed, i.inner_center, repr(i.E), repr(i.gri_ratio), repr(i.edi_ratio))
                for k, i in enumerate(self.instances)]


def calibration_instance(seed: int, L: int, ell: int, dist: FieldDistribution, inter: InteractionSpec,
                         disc: DiscretizationSpec | None, levels: int) -> CalibrationInstance:
    """One one-particle, one-dimensional instance.

    The inner cube center and the gap index are drawn from the trial seed; ``E``
    is the midpoint of a gap among the lowest ``levels`` eigenvalues of the
    outer cube. The EDI ratio uses the eigenvector just below that gap.
    """
    cube = MultiCube([(0,)], L)
    H = assemble_hamiltonian(cube, field_for_cubes(seed, [cube], dist), inter, disc)
    rng = np.random.default_rng(seed)
    reach = L - ell - 2
    c = int(rng.integers(-reach, reach + 1))
    k = int(rng.integers(0, levels))
    lam, Q = H.eigh
    E = 0.5 * (lam[k] + lam[k + 1])
    inner = MultiCube([(c,)], ell)
    gri = verify_gri(H, inner, E).ratio
    try:
        edi = verify_edi(H, float(lam[k]), Q[:, k], inner).ratio
    except ResolventError:
        edi = math.nan
    return CalibrationInstance(seed, c, float(E), float(gri), float(edi))


def calibrate_c_geom(instances: int = 500, seed: int = 0, L: int = 12, ell: int = 4,
                     dist: FieldDistribution | None = None, inter: InteractionSpec | None = None,
                     disc: DiscretizationSpec | None = None, levels: int = 5,
                     workers: int = 1) -> CalibrationReport:
    """Max GRI ratio over an ensemble; halves are compared for stability."""
    if ell + 2 > L:
        raise ValueError("inner cube does not fit")
    dist = dist or FieldDistribution()
    inter = inter or InteractionSpec.step()
    seeds = trial_seeds(seed, f"calibration/L{L}/l{ell}", instances)
    fn = _Bound(calibration_instance, L=L, ell=ell, dist=dist, inter=inter, disc=disc, levels=levels)
    return CalibrationReport(L, ell, parallel_map(fn, seeds, workers))
