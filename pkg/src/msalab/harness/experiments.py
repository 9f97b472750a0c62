"""The seven experiment kinds behind the CLI.

Each experiment returns an :class:`ExperimentResult`: named tables, the seed
ledger, invariant failures (which make the run exit with status 1) and
statistical checks (reported, never fatal).
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from ..geometry import MultiCube
from ..geometry_checks import LemmaResult, run_geometry_suite
from ..localization import (
    box_hamiltonian,
    dynamical_moment,
    eigenfunction_decay_profile,
)
from ..model import assemble_hamiltonian, field_for_cubes
from ..msa.orchestrator import InfeasibleError, OrchestratorConfig, induction_orchestrator
from ..msa.schedule import ScaleSchedule, ScheduleError, gamma_of, mass_m
from ..msa.statistics import (
    DSEstimate,
    _Bound,
    initial_scale_probability,
    parallel_map,
    trial_seeds,
    wegner_cnr_statistic,
)
from ..spectral import verify_combes_thomas
from .config import ExperimentConfig


class Refusal(RuntimeError):
    """The experiment cannot run at the requested size; exit status 2."""

    def __init__(self, message: str, detail=None):
        super().__init__(message)
        self.detail = detail


@dataclass
class Table:
    header: tuple
    rows: list


@dataclass
class ExperimentResult:
    tables: dict = field(default_factory=dict)
    seeds: dict = field(default_factory=dict)
    invariant_failures: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    reports: dict = field(default_factory=dict)


def _stride(cfg: ExperimentConfig):
    return cfg.stride or None


# --------------------------------------------------------------------------


def geometry_selftest(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult()
    results: list[LemmaResult] = run_geometry_suite(
        ns=(cfg.n,), ds=(cfg.d,), Ls=tuple(range(1, cfg.L_max + 1)), r0s=tuple(range(0, cfg.r0 + 2)),
        seed=cfg.master_seed,
    )
    res.tables["lemmas"] = Table(LemmaResult.CSV_HEADER, [r.row() for r in results])
    for r in results:
        if not r.ok:
            res.invariant_failures.append(
                f"{r.lemma} n={r.n} d={r.d} L={r.L} r0={r.r0}: {r.counterexamples} counterexamples, "
                f"e.g. {r.example}")
    res.checks["pairs_checked"] = int(sum(r.checked for r in results))
    return res


def wegner(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult()
    rows, est = [], []
    for L in cfg.L_list:
        rep = wegner_cnr_statistic(cfg.n, L, cfg.trials, cfg.E, cfg.master_seed, d=cfg.d, N=cfg.total_N,
                                   half_window=cfg.half_window, dist=cfg.field_distribution(),
                                   inter=cfg.interaction(), disc=cfg.discretization(), stride=_stride(cfg),
                                   workers=cfg.workers)
        x = rep.extra
        rows.append((L, rep.trials, rep.failures, rep.estimate, rep.ci_lo, rep.ci_hi,
                     x["scanned_failures"], x["pair_failures"]))
        est.append(rep.estimate)
        res.seeds[f"L{L}"] = rep.seeds
        if x["inclusion_violations"]:
            res.invariant_failures.append(f"L={L}: pair event without single event in "
                                          f"{x['inclusion_violations']} trials")
        if not rep.ci_lo <= rep.estimate <= rep.ci_hi:
            res.invariant_failures.append(f"L={L}: estimate outside its Wilson interval")
    res.tables["wegner"] = Table(("L", "trials", "not_cnr", "estimate", "ci_lo", "ci_hi",
                                  "scanned_not_cnr", "pair_not_cnr"), rows)
    res.checks["non_increasing_in_L"] = bool(all(a >= b for a, b in zip(est, est[1:])))
    return res


def ct_instance(seed: int, n_max: int = 2, L_max: int = 20, dim_max: int = 2000,
                dist=None, inter=None) -> tuple:
    """One random Combes-Thomas instance on a line: returns its parameters and report."""
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, n_max + 1))
    top = L_max if n == 1 else min(L_max, int((math.sqrt(dim_max) - 1) // 2))
    L = int(rng.integers(2, top + 1))
    gamma = float(rng.choice([0.3, 0.5, 0.9]))
    eta = float(rng.uniform(0.5, 4.0))
    center = [(0,)] * n if n == 1 else [(0,), (int(rng.integers(0, 3)),)]
    cube = MultiCube(center, L)
    H = assemble_hamiltonian(cube, field_for_cubes(seed, [cube], dist), inter)
    E = float(H.eigenvalues[0]) - eta
    rep = verify_combes_thomas(H, E, gamma)
    return n, L, H.dim, gamma, eta, rep


def ct_check(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult()
    seeds = trial_seeds(cfg.master_seed, "ct-check", cfg.trials)
    fn = _Bound(ct_instance, n_max=min(cfg.n, 2), dist=cfg.field_distribution(), inter=cfg.interaction())
    out = parallel_map(fn, seeds, cfg.workers)
    rows = [(t, n, L, dim, g, eta, rep.max_ratio) for t, (n, L, dim, g, eta, rep) in enumerate(out)]
    res.tables["combes_thomas"] = Table(("instance", "n", "L", "dim", "gamma", "eta", "max_ratio"), rows)
    res.seeds["instances"] = seeds
    worst = max(r[-1] for r in rows)
    res.checks["max_ratio"] = worst
    if worst > 1.0:
        res.invariant_failures.append(f"Combes-Thomas ratio {worst} exceeds 1")
    return res


def initial_scale(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult()
    rows, sing = [], []
    for L in cfg.L_list:
        rep = initial_scale_probability(cfg.n, L, cfg.trials, cfg.master_seed, d=cfg.d, N=cfg.total_N,
                                        m=mass_m(cfg.gamma_base, cfg.total_N, cfg.L_list[0]),
                                        gamma_base=cfg.gamma_base, dist=cfg.field_distribution(),
                                        inter=cfg.interaction(), disc=cfg.discretization(),
                                        E_star=cfg.E_star, workers=cfg.workers)
        x = rep.extra
        rows.append((L, rep.trials, rep.failures, rep.estimate, rep.ci_lo, rep.ci_hi,
                     x["singular_failures"], x["singular_estimate"], x["exceptions"], x["E_star"], x["m"]))
        sing.append(x["singular_estimate"])
        res.seeds[f"L{L}"] = rep.seeds
        if x["exceptions"] > 0.01 * rep.trials:
            res.invariant_failures.append(f"L={L}: {x['exceptions']} singular trials without the bottom event")
    res.tables["initial_scale"] = Table(("L", "trials", "bottom_events", "estimate", "ci_lo", "ci_hi",
                                         "singular_events", "singular_estimate", "exceptions", "E_star", "m"),
                                        rows)
    res.checks["singular_non_increasing_in_L"] = bool(all(a >= b for a, b in zip(sing, sing[1:])))
    return res


def msa_run(cfg: ExperimentConfig) -> ExperimentResult:
    res = ExperimentResult()
    try:
        schedule = ScaleSchedule(cfg.L0, cfg.k_max, cfg.total_N, cfg.d, cfg.gamma_base, cfg.p, cfg.strict)
    except ScheduleError as exc:
        raise Refusal(str(exc)) from exc
    oc = OrchestratorConfig(trials=cfg.trials, seed=cfg.master_seed, dist=cfg.field_distribution(),
                            inter=cfg.interaction(), disc=cfg.discretization(), dim_cap=cfg.dim_cap,
                            E_star=cfg.E_star, window=cfg.window, workers=cfg.workers)
    try:
        report = induction_orchestrator(schedule, oc)
    except InfeasibleError as exc:
        raise Refusal(str(exc), exc.sizing) from exc
    res.tables["ds"] = Table(DSEstimate.CSV_HEADER, [r.row() for r in report.rows])
    diag_cols = ("k", "n", "pair_type", "failures", "marginal_x", "marginal_y", "base", "R", "T", "S",
                 "unexplained")
    res.tables["ds_events"] = Table(diag_cols, [
        (r.k, r.n, r.pair_type, r.failures) + tuple(r.diagnostics.get(c, 0) for c in diag_cols[4:])
        for r in report.rows])
    res.tables["sizing"] = Table(("k", "n", "L_k", "dim"), [(s["k"], s["n"], s["L_k"], s["dim"])
                                                            for s in report.sizing])
    res.tables["gamma"] = Table(("L", "n", "gamma"), [(L, n, g) for (L, n), g in
                                                     sorted(schedule.gamma_table().items())])
    for r in report.rows:
        res.seeds[f"k{r.k}/n{r.n}/{r.pair_type}"] = r.seeds
    res.invariant_failures.extend(report.invariant_failures())
    res.notes.extend(report.notes)
    res.checks["m"] = schedule.m
    res.checks["levels"] = schedule.levels
    return res


def _box_seeds(cfg: ExperimentConfig, label: str) -> list[int]:
    return trial_seeds(cfg.master_seed, label, cfg.trials)


def _box_dim_guard(cfg: ExperimentConfig):
    side = 2 * cfg.box_half_side * cfg.discretization().refine + 1
    dim = side ** (cfg.n * cfg.d)
    if dim > cfg.dim_cap:
        raise Refusal(f"box dimension {dim} exceeds dim_cap {cfg.dim_cap}",
                      [{"box_half_side": cfg.box_half_side, "dim": dim}])


def decay_profile(cfg: ExperimentConfig) -> ExperimentResult:
    _box_dim_guard(cfg)
    res = ExperimentResult()
    seeds = _box_seeds(cfg, "decay-profile")
    m = mass_m(cfg.gamma_base, cfg.total_N, cfg.L0)
    min_rate = 0.5 * gamma_of(m, cfg.box_half_side, cfg.n, cfg.total_N)
    prof_rows, fit_rows = [], []
    for t, s in enumerate(seeds):
        H = box_hamiltonian(cfg.n, cfg.d, cfg.box_half_side, s, cfg.field_distribution(), cfg.interaction(),
                            cfg.discretization())
        window = cfg.window or (-math.inf, math.inf)
        for p in eigenfunction_decay_profile(H, window, cfg.count, min_rate=min_rate):
            prof_rows.extend((t,) + r for r in p.rows())
            fit_rows.append((t, p.eigen_index, p.energy, " ".join(map(str, p.center)), p.fitted_rate,
                             p.fit_range[1], p.residual, p.flagged))
    res.tables["profiles"] = Table(("trial", "eigen_index", "energy", "distance", "log_norm"), prof_rows)
    res.tables["fits"] = Table(("trial", "eigen_index", "energy", "center", "fitted_rate", "fit_r_max",
                                "residual", "flagged"), fit_rows)
    res.seeds["boxes"] = seeds
    rates = [r[4] for r in fit_rows]
    res.checks["median_rate"] = float(np.median(rates))
    res.checks["all_rates_positive"] = bool(min(rates) > 0)
    res.checks["flagged"] = int(sum(r[-1] for r in fit_rows))
    return res


def dynamical(cfg: ExperimentConfig) -> ExperimentResult:
    _box_dim_guard(cfg)
    res = ExperimentResult()
    seeds = _box_seeds(cfg, "dynamical")
    rows = []
    reports = []
    for t, s in enumerate(seeds):
        H = box_hamiltonian(cfg.n, cfg.d, cfg.box_half_side, s, cfg.field_distribution(), cfg.interaction(),
                            cfg.discretization())
        bottom = float(H.eigenvalues[0])
        window = cfg.window or (bottom, bottom + 1.0 if cfg.E_star is None else cfg.E_star)
        K = H.region("ball", H.cube.center, 0)
        rep = dynamical_moment(H, window, K, cfg.s)
        rows.append((t, rep.window[0], rep.window[1], rep.states, rep.max_over_grid, rep.stationary_upper_bound))
        reports.append(rep.as_dict())
        if not 0.0 <= rep.max_over_grid <= rep.stationary_upper_bound * (1 + 1e-12) + 1e-12:
            res.invariant_failures.append(f"trial {t}: moment above its stationary bound")
    res.tables["moments"] = Table(("trial", "E_lo", "E_hi", "states", "max_over_grid",
                                   "stationary_upper_bound"), rows)
    res.seeds["boxes"] = seeds
    res.reports["moments"] = reports
    res.checks["median_max_over_grid"] = float(np.median([r[4] for r in rows]))
    return res


EXPERIMENTS = {
    "geometry-selftest": geometry_selftest,
    "wegner": wegner,
    "ct-check": ct_check,
    "initial-scale": initial_scale,
    "msa-run": msa_run,
    "decay-profile": decay_profile,
    "dynamical": dynamical,
}
