"""Stratified DS estimation over scales and particle numbers."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from ..geometry import MultiCube, count_singular_maxima, kappa
from ..model import (
    DiscretizationSpec,
    FieldDistribution,
    InteractionSpec,
    assemble_hamiltonian,
    field_for_cubes,
)
from ..spectral import CNRScan, _offsets, restrict
from .hnr import PIAnalysis, TunnellingError, check_hnr, check_tunnelling
from .schedule import ScaleSchedule
from .statistics import PAIR_TYPES, DSEstimate, ds_pair_probability, make_pair, singular_flags

log = logging.getLogger(__name__)


class InfeasibleError(RuntimeError):
    """Requested sizes exceed the configured matrix-dimension cap."""

    def __init__(self, message: str, sizing: list):
        super().__init__(message)
        self.sizing = sizing


@dataclass
class OrchestratorConfig:
    trials: int = 20
    seed: int = 0
    dist: FieldDistribution = field(default_factory=FieldDistribution)
    inter: InteractionSpec = field(default_factory=InteractionSpec.step)
    disc: DiscretizationSpec = field(default_factory=DiscretizationSpec)
    dim_cap: int = 4096
    E_star: float | None = None
    window: tuple | None = None
    diagnostics: bool = True
    workers: int = 1


@dataclass
class RunReport:
    rows: list
    sizing: list
    notes: list = field(default_factory=list)

    def invariant_failures(self) -> list[str]:
        bad = []
        for r in self.rows:
            if not r.ci_lo <= r.estimate <= r.ci_hi:
                bad.append(f"{r.k}/{r.n}/{r.pair_type}: estimate outside its interval")
            unexplained = r.diagnostics.get("unexplained", 0)
            if unexplained:
                bad.append(f"{r.k}/{r.n}/{r.pair_type}: {unexplained} failures outside R u T u S")
        return bad


def strata(N: int) -> list[tuple[int, str]]:
    out = []
    for n in range(1, N + 1):
        for t in PAIR_TYPES:
            if n == 1 and t != "FI-FI":
                continue
            out.append((n, t))
    return out


def sizing_report(schedule: ScaleSchedule, disc: DiscretizationSpec) -> list[dict]:
    rows = []
    for k, L in enumerate(schedule.levels):
        for n in range(1, schedule.N + 1):
            side = 2 * L * disc.refine + 1
            rows.append({"k": k, "n": n, "L_k": L, "dim": side ** (n * schedule.d)})
    return rows


def _singular_subcube_count(H, E: float, ell: int, m: float, n: int, N: int, L: int):
    """Singular cubes of half-side ``ell`` inside ``H`` at energy ``E`` (stride ``ell // 3``)."""
    u = H.cube.center.array()
    stride = max(1, ell // 3)
    subs = [MultiCube(u + o.reshape(u.shape), ell) for o in _offsets(u.size, L - ell, stride)]
    out = []
    for s in subs:
        R = restrict(H, s)
        if singular_flags(R, np.array([E]), m, n, N)[0]:
            from ..geometry import classify_interactivity

            out.append((s.center, classify_interactivity(s.center, ell, 0).kind))
    return out


def event_flags(trial, x: MultiCube, y: MultiCube, pair_type: str, k: int, schedule: ScaleSchedule,
                cfg: OrchestratorConfig) -> dict:
    """Which proof events (R/Sigma, T, S) occur at the failing energies of a trial."""
    if k == 0:
        return {"base": True}
    ell = schedule.levels[k - 1]
    fld = field_for_cubes(trial.seed, [x, y], cfg.dist)
    n, N, m = x.n, schedule.N, schedule.m
    J = kappa(n) + 5
    flags = {"R": False, "T": False, "S": False}
    cubes = {"x": x, "y": y}
    Hs = {key: assemble_hamiltonian(c, fld, cfg.inter, cfg.disc) for key, c in cubes.items()}
    pis = {}
    scans = {}
    for key, c in cubes.items():
        from ..geometry import classify_interactivity

        if classify_interactivity(c.center, c.L, cfg.inter.r0).is_pi:
            pis[key] = PIAnalysis.build(c, fld, cfg.inter, cfg.disc)
        else:
            scans[key] = CNRScan.build(Hs[key])
    for E in trial.failing_energies:
        good = {}
        for key in cubes:
            good[key] = check_hnr(pis[key], E) if key in pis else scans[key].is_cnr(E)
        if not any(good.values()):
            flags["R"] = True
        for key in pis:
            try:
                if check_tunnelling(pis[key], E, m, N).kind != "NT":
                    flags["T"] = True
            except TunnellingError:
                pass
        for key in scans:
            sing = _singular_subcube_count(Hs[key], E, ell, m, n, N, x.L)
            if len(sing) >= J + 1:
                M = count_singular_maxima(sing, ell, N, container=cubes[key]).M
                if M >= J + 1:
                    flags["S"] = True
    return flags


def induction_orchestrator(schedule: ScaleSchedule, config: OrchestratorConfig | None = None) -> RunReport:
    """Run the DS estimator for every ``(k, n, pair type)`` stratum.

    Raises
    ------
    InfeasibleError
        If any stratum's matrix dimension exceeds ``config.dim_cap``.
    """
    cfg = config or OrchestratorConfig()
    sizing = sizing_report(schedule, cfg.disc)
    over = [s for s in sizing if s["dim"] > cfg.dim_cap]
    if over:
        raise InfeasibleError(
            f"{len(over)} strata exceed dim cap {cfg.dim_cap}: "
            + ", ".join(f"k={s['k']} n={s['n']} dim={s['dim']}" for s in over),
            sizing,
        )
    rows = []
    notes = []
    for k in range(len(schedule.levels)):
        L = schedule.levels[k]
        for n, ptype in strata(schedule.N):
            pair = make_pair(ptype, n, schedule.d, L, schedule.N, cfg.inter.r0)
            est = ds_pair_probability(
                k, n, schedule, pair, cfg.trials, cfg.seed, window=cfg.window, E_star=cfg.E_star,
                dist=cfg.dist, inter=cfg.inter, disc=cfg.disc, pair_type=ptype, workers=cfg.workers,
                keep_trials=True,
            )
            counts = {"base": 0, "R": 0, "T": 0, "S": 0, "unexplained": 0}
            for tr in est.diagnostics.pop("trials"):
                if not tr.failure:
                    continue
                if not cfg.diagnostics:
                    continue
                fl = event_flags(tr, pair[0], pair[1], ptype, k, schedule, cfg)
                for key, v in fl.items():
                    counts[key] += int(bool(v))
                if not any(fl.values()):
                    counts["unexplained"] += 1
            est.diagnostics.update(counts)
            rows.append(est)
            log.info("DS k=%d n=%d %s: %d/%d", k, n, ptype, est.failures, est.trials)
    return RunReport(rows, sizing, notes)
