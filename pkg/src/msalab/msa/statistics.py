"""Monte Carlo estimators: initial-scale events, Wegner frequencies, DS pairs.

Each trial is a pure function of ``(master_seed, label, trial_index)``; the
seed of trial ``t`` is ``derive_seed(master_seed, label, t)`` and the field
stream is ``0``. Aggregation is a fold in trial order.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Callable, Sequence

import numpy as np

from ..geometry import MultiCube, classify_interactivity, find_separating_partition
from ..harness.stats import wilson_interval
from ..model import (
    DiscretizationSpec,
    FieldDistribution,
    HamiltonianMatrix,
    InteractionSpec,
    assemble_hamiltonian,
    field_for_cubes,
)
from ..seeding import derive_seed
from ..spectral import CNRScan, green_block_norm, merge_intervals, resonance_threshold
from .schedule import gamma_of


class PairGeneratorError(ValueError):
    pass


@dataclass
class MonteCarloReport:
    name: str
    trials: int
    failures: int
    estimate: float
    ci_lo: float
    ci_hi: float
    seeds: list = field(default_factory=list)
    extra: dict = field(default_factory=dict)

    @classmethod
    def from_flags(cls, name: str, flags: Sequence[bool], seeds: Sequence[int], **extra) -> "MonteCarloReport":
        trials = len(flags)
        failures = int(sum(bool(f) for f in flags))
        lo, hi = wilson_interval(failures, trials)
        return cls(name, trials, failures, failures / trials, lo, hi, list(seeds), dict(extra))

    def as_dict(self) -> dict:
        return asdict(self)


def trial_seeds(master_seed: int, label: str, trials: int) -> list[int]:
    return [derive_seed(master_seed, label, t) for t in range(trials)]


def parallel_map(fn: Callable, items: Sequence, workers: int = 1) -> list:
    """Order-preserving map over a process pool (serial when ``workers <= 1``)."""
    if workers <= 1 or len(items) <= 1:
        return [fn(x) for x in items]
    from concurrent.futures import ProcessPoolExecutor

    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, items, chunksize=max(1, len(items) // (4 * workers))))


def origin_cube(n: int, d: int, L: int, spread: int = 0) -> MultiCube:
    """FI cube with particle ``i`` at ``i * spread`` along the first axis."""
    pts = []
    for i in range(n):
        p = [0] * d
        p[0] = i * spread
        pts.append(tuple(p))
    return MultiCube(pts, L)


# --------------------------------------------------------------------------
# Singularity along an energy sweep
# --------------------------------------------------------------------------


def singular_flags(H: HamiltonianMatrix, energies: np.ndarray, m: float, n: int, N: int) -> np.ndarray:
    """``(E, m)``-singularity of a cube for sorted energies.

    Below the bottom of the spectrum ``G(E)`` is entrywise non-negative and
    increasing in ``E``, hence so is the out/int block norm; singular energies
    there form an upper interval located by bisection.
    """
    E = np.asarray(energies, dtype=float)
    lam = H.eigenvalues
    L = H.cube.L
    thr = math.exp(-gamma_of(m, L, n, N) * L)
    A, B = H.region("int"), H.region("out")
    flags = np.zeros(E.shape, dtype=bool)

    def sing(e):
        i = np.searchsorted(lam, e)
        d = np.min(np.abs(lam[max(i - 1, 0): i + 1] - e))
        if d <= 1e-12:
            return True
        return green_block_norm(H, e, A, B) > thr

    below = np.flatnonzero(E < lam[0] - 1e-12)
    if below.size:
        lo, hi = 0, below.size  # first singular index in 'below' (monotone)
        if sing(E[below[-1]]):
            while lo < hi:
                mid = (lo + hi) // 2
                if sing(E[below[mid]]):
                    hi = mid
                else:
                    lo = mid + 1
            flags[below[lo:]] = True
    for k in np.flatnonzero(E >= lam[0] - 1e-12):
        flags[k] = sing(E[k])
    return flags


def sweep_energies(lo: float, hi: float, L: int, eigenvalues: Sequence[np.ndarray]) -> np.ndarray:
    """Grid at step ``exp(-sqrt(L))/2`` anchored at 0, plus eigenvalues and
    eigenvalues +- the resonance width and ``hi`` itself, all clipped to
    ``[lo, hi]``.

    Anchoring the grid at 0 makes the set, apart from the endpoint ``hi``,
    monotone under window enlargement.
    """
    if hi < lo:
        return np.empty(0)
    step = resonance_threshold(L) / 2.0
    k0, k1 = math.ceil(lo / step), math.floor(hi / step)
    pts = [np.arange(k0, k1 + 1) * step, [hi]]
    w = resonance_threshold(L)
    for lam in eigenvalues:
        pts.extend([lam, lam - w, lam + w])
    allp = np.concatenate([np.asarray(p, dtype=float).ravel() for p in pts])
    allp = allp[(allp >= lo) & (allp <= hi)]
    return np.unique(allp)


# --------------------------------------------------------------------------
# Initial-scale statistic
# --------------------------------------------------------------------------


@dataclass
class InitialTrial:
    seed: int
    bottom: float
    bottom_event: bool
    singular_event: bool
    exception: bool
    block_norm_at_top: float


def initial_scale_trial(seed: int, n: int, d: int, L: int, m: float, N: int, E_star: float,
                        dist: FieldDistribution, inter: InteractionSpec,
                        disc: DiscretizationSpec | None = None) -> InitialTrial:
    cube = origin_cube(n, d, L)
    fld = field_for_cubes(seed, [cube], dist)
    H = assemble_hamiltonian(cube, fld, inter, disc)
    bottom = float(H.eigenvalues[0])
    bottom_event = bottom <= L**-0.5
    norm_top = math.nan
    if E_star >= bottom - 1e-12:
        singular = True  # E = bottom lies in the window and in the spectrum
    else:
        # monotone below the spectrum: the supremum over (-inf, E*] sits at E*
        norm_top = green_block_norm(H, E_star, H.region("int"), H.region("out"))
        singular = norm_top > math.exp(-gamma_of(m, L, n, N) * L)
    return InitialTrial(seed, bottom, bottom_event, singular, singular and not bottom_event, norm_top)


def initial_scale_probability(n: int, L: int, trials: int, seed: int, *, d: int = 1, N: int | None = None,
                              m: float | None = None, gamma_base: float = 0.9,
                              dist: FieldDistribution | None = None,
                              inter: InteractionSpec | None = None,
                              disc: DiscretizationSpec | None = None,
                              E_star: float | None = None, workers: int = 1) -> MonteCarloReport:
    """Frequency of ``{E_0 <= L^{-1/2}}`` with the companion singularity event.

    ``E_star`` defaults to ``L^{-1/2} / 2`` (the cube is its own initial
    scale); ``m`` defaults to the mass for ``L0 = L``.
    """
    from .schedule import mass_m

    if trials < 1:
        raise ValueError("trials must be >= 1")
    N = N or n
    m = m if m is not None else mass_m(gamma_base, N, L)
    E_star = 0.5 * L**-0.5 if E_star is None else E_star
    dist = dist or FieldDistribution()
    inter = inter or InteractionSpec.step()
    seeds = trial_seeds(seed, f"initial/n{n}/d{d}", trials)
    fn = _Bound(initial_scale_trial, n=n, d=d, L=L, m=m, N=N, E_star=E_star, dist=dist, inter=inter, disc=disc)
    res = parallel_map(fn, seeds, workers)
    rep = MonteCarloReport.from_flags(f"initial-scale/L{L}", [r.bottom_event for r in res], seeds)
    sing = [r.singular_event for r in res]
    slo, shi = wilson_interval(sum(sing), trials)
    rep.extra.update(
        L=L, n=n, d=d, m=m, E_star=E_star,
        singular_failures=int(sum(sing)), singular_estimate=sum(sing) / trials,
        singular_ci=(slo, shi),
        exceptions=int(sum(r.exception for r in res)),
        singular_flags=sing, bottom_flags=[r.bottom_event for r in res],
        bottoms=[r.bottom for r in res],
    )
    return rep


class _Bound:
    """Picklable partial application (first positional argument is the seed)."""

    def __init__(self, fn, **kw):
        self.fn, self.kw = fn, kw

    def __call__(self, seed):
        return self.fn(seed, **self.kw)


# --------------------------------------------------------------------------
# Wegner statistic
# --------------------------------------------------------------------------


@dataclass
class WegnerTrial:
    seed: int
    fixed: bool
    scanned: bool
    pair: bool


def _intervals_hit(iv, lo, hi) -> list[tuple[float, float]]:
    return [(max(a, lo), min(b, hi)) for a, b in iv if b >= lo and a <= hi]


def _intersect(a, b) -> bool:
    i = j = 0
    while i < len(a) and j < len(b):
        if a[i][1] >= b[j][0] and b[j][1] >= a[i][0]:
            return True
        if a[i][1] < b[j][1]:
            i += 1
        else:
            j += 1
    return False


def wegner_pair(n: int, d: int, L: int, N: int, r0: int) -> tuple[MultiCube, MultiCube]:
    x = origin_cube(n, d, L)
    shift = 7 * N * L + 2 * L + 1 + n
    y = MultiCube([tuple([p[0] + shift] + list(p[1:])) for p in x.center.points], L)
    if find_separating_partition(x.center, y.center, L, N) is None:
        raise PairGeneratorError("Wegner pair is not separable")
    return x, y


def wegner_trial(seed: int, n: int, d: int, L: int, N: int, E: float, half_window: float,
                 dist: FieldDistribution, inter: InteractionSpec, disc, stride) -> WegnerTrial:
    x, y = wegner_pair(n, d, L, N, inter.r0)
    fld = field_for_cubes(seed, [x, y], dist)
    sx = CNRScan.build(assemble_hamiltonian(x, fld, inter, disc), stride)
    sy = CNRScan.build(assemble_hamiltonian(y, fld, inter, disc), stride)
    lo, hi = E - half_window, E + half_window
    bx = _intervals_hit(sx.bad_intervals(), lo, hi)
    by = _intervals_hit(sy.bad_intervals(), lo, hi)
    return WegnerTrial(seed, not sx.is_cnr(E), bool(bx), _intersect(bx, by))


def wegner_cnr_statistic(n: int, L: int, trials: int, E: float, seed: int, *, d: int = 1,
                         N: int | None = None, half_window: float = 0.5,
                         dist: FieldDistribution | None = None, inter: InteractionSpec | None = None,
                         disc: DiscretizationSpec | None = None, stride: int | None = None,
                         workers: int = 1) -> MonteCarloReport:
    """Frequency of ``{C_L(x) not E-CNR}`` and the two-cube companion.

    The pair event is ``{exists E' in [E - w, E + w]: neither cube is
    E'-CNR}``, computed exactly from the unions of resonance intervals. The
    scanned single event uses the same window, so pair <= scanned single
    trial by trial.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    N = N or n
    dist = dist or FieldDistribution()
    inter = inter or InteractionSpec.step()
    seeds = trial_seeds(seed, f"wegner/n{n}/d{d}", trials)
    fn = _Bound(wegner_trial, n=n, d=d, L=L, N=N, E=E, half_window=half_window, dist=dist,
                inter=inter, disc=disc, stride=stride)
    res = parallel_map(fn, seeds, workers)
    rep = MonteCarloReport.from_flags(f"wegner/L{L}", [r.fixed for r in res], seeds)
    sc = [r.scanned for r in res]
    pr = [r.pair for r in res]
    rep.extra.update(
        L=L, n=n, d=d, E=E, half_window=half_window,
        scanned_failures=int(sum(sc)), pair_failures=int(sum(pr)),
        fixed_flags=[r.fixed for r in res], scanned_flags=sc, pair_flags=pr,
        inclusion_violations=int(sum(p and not s for p, s in zip(pr, sc))),
    )
    return rep


# --------------------------------------------------------------------------
# DS pairs
# --------------------------------------------------------------------------

PAIR_TYPES = ("FI-FI", "PI-PI", "MI")


def make_cube(kind: str, n: int, d: int, L: int, r0: int, anchor: int = 0) -> MultiCube:
    """FI cube (particles one site apart) or PI cube (gap ``n(2L + r0) + 1``)."""
    if kind == "FI":
        step = 1
    elif kind == "PI":
        if n < 2:
            raise PairGeneratorError("a one-particle cube is never PI")
        step = n * (2 * L + r0) + 1
    else:
        raise PairGeneratorError(f"unknown cube kind {kind!r}")
    pts = []
    for i in range(n):
        p = [0] * d
        p[0] = anchor + (i * step if kind == "FI" or i == 0 else step + i - 1)
        pts.append(tuple(p))
    cube = MultiCube(pts, L)
    got = classify_interactivity(cube.center, L, r0).kind
    if got != kind:
        raise PairGeneratorError(f"generated cube classifies as {got}, wanted {kind}")
    return cube


def make_pair(pair_type: str, n: int, d: int, L: int, N: int, r0: int) -> tuple[MultiCube, MultiCube]:
    """Deterministic separable pair of the requested type."""
    kinds = {"FI-FI": ("FI", "FI"), "PI-PI": ("PI", "PI"), "MI": ("PI", "FI")}[pair_type]
    x = make_cube(kinds[0], n, d, L, r0, 0)
    span = int(x.center.array()[:, 0].max())
    y = make_cube(kinds[1], n, d, L, r0, span + 7 * N * L + 2 * L + 1)
    if find_separating_partition(x.center, y.center, L, N) is None:
        raise PairGeneratorError(f"pair {x.describe()} / {y.describe()} is not separable")
    return x, y


@dataclass
class DSTrial:
    seed: int
    failure: bool
    energies: int
    failing_energies: list = field(default_factory=list)
    window: tuple = ()
    singular_x: bool = False
    singular_y: bool = False


def ds_trial(seed: int, x: MultiCube, y: MultiCube, m: float, N: int, E_star: float,
             window: tuple | None, dist: FieldDistribution, inter: InteractionSpec,
             disc: DiscretizationSpec | None, fixed_E: float | None = None) -> DSTrial:
    fld = field_for_cubes(seed, [x, y], dist)
    Hx = assemble_hamiltonian(x, fld, inter, disc)
    Hy = assemble_hamiltonian(y, fld, inter, disc)
    n = x.n
    if fixed_E is not None:
        Es = np.array([fixed_E])
        lo = hi = fixed_E
    else:
        if window is None:
            lo = min(Hx.eigenvalues[0], Hy.eigenvalues[0]) - 1.0
            hi = E_star
        else:
            lo, hi = window
        Es = sweep_energies(lo, hi, x.L, [Hx.eigenvalues, Hy.eigenvalues])
    if Es.size == 0:
        return DSTrial(seed, False, 0, [], (lo, hi))
    fx = singular_flags(Hx, Es, m, n, N)
    fy = singular_flags(Hy, Es, m, n, N)
    both = fx & fy
    return DSTrial(seed, bool(both.any()), int(Es.size), [float(e) for e in Es[both][:8]], (float(lo), float(hi)),
                   bool(fx.any()), bool(fy.any()))


@dataclass
class DSEstimate:
    k: int
    n: int
    pair_type: str
    L_k: int
    trials: int
    failures: int
    estimate: float
    ci_lo: float
    ci_hi: float
    target_bound: float
    seeds: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)

    CSV_HEADER = ("k", "n", "pair_type", "L_k", "trials", "failures", "estimate", "ci_lo", "ci_hi",
                  "target_bound")

    def row(self) -> tuple:
        return (self.k, self.n, self.pair_type, self.L_k, self.trials, self.failures,
                repr(self.estimate), repr(self.ci_lo), repr(self.ci_hi), repr(self.target_bound))


def ds_pair_probability(k: int, n: int, schedule, pair: tuple[MultiCube, MultiCube], trials: int,
                        seed: int, *, window: tuple | None = None, E_star: float | None = None,
                        dist: FieldDistribution | None = None, inter: InteractionSpec | None = None,
                        disc: DiscretizationSpec | None = None, pair_type: str = "",
                        fixed_E: float | None = None, workers: int = 1,
                        keep_trials: bool = False) -> DSEstimate:
    """Monte Carlo estimate of ``P{exists E: both cubes (E, m)-singular}``.

    Each trial samples one shared field, assembles both cubes and sweeps the
    energies of :func:`sweep_energies` over ``window`` (default
    ``[min bottom - 1, E*]``). Failures are counted per trial.
    """
    x, y = pair
    L = schedule.levels[k]
    if x.L != L or y.L != L or x.n != n:
        raise PairGeneratorError("pair does not match (k, n)")
    if find_separating_partition(x.center, y.center, L, schedule.N) is None:
        raise PairGeneratorError("pair-generator produced a non-separable pair")
    dist = dist or FieldDistribution()
    inter = inter or InteractionSpec.step()
    E_star = 0.5 * schedule.L0**-0.5 if E_star is None else E_star
    seeds = trial_seeds(seed, f"ds/k{k}/n{n}/{pair_type or 'pair'}", trials)
    fn = _Bound(ds_trial, x=x, y=y, m=schedule.m, N=schedule.N, E_star=E_star, window=window, dist=dist,
                inter=inter, disc=disc, fixed_E=fixed_E)
    res = parallel_map(fn, seeds, workers)
    failures = sum(r.failure for r in res)
    lo, hi = wilson_interval(failures, trials)
    est = DSEstimate(k, n, pair_type, L, trials, failures, failures / trials, lo, hi,
                     schedule.target_bound(k, n), seeds)
    est.diagnostics["marginal_x"] = sum(r.singular_x for r in res)
    est.diagnostics["marginal_y"] = sum(r.singular_y for r in res)
    if keep_trials:
        est.diagnostics["trials"] = res
    return est
