import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from msalab.geometry import MultiCube, find_separating_partition
from msalab.harness.stats import binomial_sigma, wilson_interval
from msalab.model import FieldDistribution, InteractionSpec, assemble_hamiltonian, field_for_cubes
from msalab.msa.schedule import ScaleSchedule
from msalab.msa.statistics import (
    PAIR_TYPES,
    MonteCarloReport,
    PairGeneratorError,
    ds_pair_probability,
    initial_scale_probability,
    make_cube,
    make_pair,
    parallel_map,
    singular_flags,
    sweep_energies,
    trial_seeds,
    wegner_cnr_statistic,
)
from msalab.spectral import is_singular

ZERO = FieldDistribution.zero()


# ---------------------------------------------------------------- Wilson


def test_wilson_examples():
    lo, hi = wilson_interval(0, 100)
    assert lo == 0.0 and hi == pytest.approx(0.0370, abs=1e-4)
    lo, hi = wilson_interval(50, 100)
    assert lo == pytest.approx(0.4038, abs=1e-4) and hi == pytest.approx(0.5962, abs=1e-4)
    with pytest.raises(ValueError):
        wilson_interval(3, 2)


@given(st.integers(1, 5000), st.data())
def test_wilson_contains_estimate_and_is_symmetric(trials, data):
    k = data.draw(st.integers(0, trials))
    lo, hi = wilson_interval(k, trials)
    assert 0 <= lo <= k / trials <= hi <= 1
    lo2, hi2 = wilson_interval(trials - k, trials)
    assert lo2 == pytest.approx(1 - hi, abs=1e-12) and hi2 == pytest.approx(1 - lo, abs=1e-12)


def test_binomial_sigma():
    assert binomial_sigma(0.5, 400) == pytest.approx(0.025)
    assert binomial_sigma(0.0, 10) == 0.0


# ------------------------------------------------------- seeds and pool


def test_trial_seeds_are_stable_and_distinct():
    a = trial_seeds(7, "x", 50)
    assert a == trial_seeds(7, "x", 50)
    assert a[:10] == trial_seeds(7, "x", 10)
    assert len(set(a)) == 50
    assert a != trial_seeds(7, "y", 50)


def _square(x):
    return x * x


def test_parallel_map_matches_serial():
    items = list(range(20))
    assert parallel_map(_square, items, workers=2) == [x * x for x in items]


def test_report_from_flags():
    rep = MonteCarloReport.from_flags("t", [True, False, False, True], [1, 2, 3, 4], foo=1)
    assert rep.failures == 2 and rep.estimate == 0.5 and rep.extra["foo"] == 1
    assert rep.ci_lo < 0.5 < rep.ci_hi


# --------------------------------------------------------- pair builders


@pytest.mark.parametrize("ptype", PAIR_TYPES)
def test_pairs_are_separable_and_typed(ptype):
    x, y = make_pair(ptype, 2, 1, 8, 2, 1)
    assert find_separating_partition(x.center, y.center, 8, 2) is not None


def test_pair_builder_errors():
    with pytest.raises(PairGeneratorError):
        make_cube("PI", 1, 1, 8, 1)
    with pytest.raises(PairGeneratorError):
        make_cube("XX", 2, 1, 8, 1)


# ---------------------------------------------------- singularity sweeps


@pytest.mark.parametrize("seed", range(4))
def test_singular_flags_match_pointwise(seed):
    cube = MultiCube([(0,)], 8)
    H = assemble_hamiltonian(cube, field_for_cubes(seed, [cube]), InteractionSpec.none())
    E = np.sort(np.concatenate([np.linspace(H.eigenvalues[0] - 1.5, H.eigenvalues[0] + 1, 120),
                                H.eigenvalues[:3]]))
    got = singular_flags(H, E, 0.03, 1, 1)
    want = [is_singular(None, H, float(e), 0.03, 1, 1).singular for e in E]
    assert got.tolist() == want


def test_sweep_grid_monotone_under_window_growth():
    lam = [np.array([0.1, 0.7])]
    small = set(sweep_energies(0.0, 0.5, 16, lam).tolist())
    big = set(sweep_energies(-1.0, 1.0, 16, lam).tolist())
    assert small - {0.5} <= big
    assert 0.5 in small
    assert sweep_energies(1.0, 0.0, 16, lam).size == 0


# -------------------------------------------------------- initial scale


def test_initial_scale_shifted_support_gives_zero():
    rep = initial_scale_probability(1, 16, 30, 0, dist=FieldDistribution(shift=10.0))
    assert rep.failures == 0 and rep.extra["singular_failures"] == 0


def test_initial_scale_singular_implies_bottom_or_exception():
    rep = initial_scale_probability(1, 16, 60, 3)
    for s, b in zip(rep.extra["singular_flags"], rep.extra["bottom_flags"]):
        assert not s or b or rep.extra["exceptions"] > 0
    assert rep.extra["exceptions"] == sum(s and not b for s, b in
                                          zip(rep.extra["singular_flags"], rep.extra["bottom_flags"]))


def test_initial_scale_rejects_zero_trials():
    with pytest.raises(ValueError):
        initial_scale_probability(1, 16, 0, 0)


# ---------------------------------------------------------------- Wegner


def test_wegner_far_below_is_zero():
    rep = wegner_cnr_statistic(1, 9, 20, -3.0, 0, half_window=0.5)
    assert rep.failures == 0 and rep.extra["scanned_failures"] == 0


def test_wegner_pair_never_exceeds_single():
    rep = wegner_cnr_statistic(1, 9, 40, 0.3, 1, half_window=0.2)
    assert rep.extra["inclusion_violations"] == 0
    assert rep.extra["pair_failures"] <= rep.extra["scanned_failures"]
    assert sum(rep.extra["fixed_flags"]) == rep.failures


# -------------------------------------------------------------------- DS


def test_ds_free_gap_window_has_no_failures():
    s = ScaleSchedule(8, 0, 1, 1)
    pair = make_pair("FI-FI", 1, 1, 8, 1, 1)
    cube = pair[0]
    H = assemble_hamiltonian(cube, field_for_cubes(0, [cube], ZERO), InteractionSpec.none())
    bottom = H.eigenvalues[0]
    est = ds_pair_probability(0, 1, s, pair, 10, 0, window=(bottom - 3.0, bottom - 2.0), dist=ZERO)
    assert est.failures == 0


def test_ds_free_interior_gap_is_singular():
    # in-band resolvents of the free operator do not decay across the cube
    s = ScaleSchedule(8, 0, 1, 1)
    pair = make_pair("FI-FI", 1, 1, 8, 1, 1)
    H = assemble_hamiltonian(pair[0], field_for_cubes(0, [pair[0]], ZERO), InteractionSpec.none())
    lam = H.eigenvalues
    mid = 0.5 * (lam[3] + lam[4])
    est = ds_pair_probability(0, 1, s, pair, 3, 0, fixed_E=float(mid), dist=ZERO)
    assert est.failures == 3


def test_ds_strong_disorder_initial_scale():
    s = ScaleSchedule(8, 0, 1, 1)
    est = ds_pair_probability(0, 1, s, make_pair("FI-FI", 1, 1, 8, 1, 1), 400, 0,
                              dist=FieldDistribution(scale=20.0))
    assert est.estimate < 0.05
    assert est.ci_lo <= est.estimate <= est.ci_hi


def test_ds_independence_at_fixed_energy():
    s = ScaleSchedule(8, 0, 1, 1)
    est = ds_pair_probability(0, 1, s, make_pair("FI-FI", 1, 1, 8, 1, 1), 400, 5, fixed_E=0.4)
    px = est.diagnostics["marginal_x"] / 400
    py = est.diagnostics["marginal_y"] / 400
    p = px * py
    assert 0 < p < 1
    assert abs(est.estimate - p) <= 3 * binomial_sigma(p, 400)


def test_ds_rejects_mismatched_pair():
    s = ScaleSchedule(8, 0, 1, 1)
    with pytest.raises(PairGeneratorError):
        ds_pair_probability(0, 1, s, make_pair("FI-FI", 1, 1, 9, 1, 1), 2, 0)
    near = (MultiCube([(0,)], 8), MultiCube([(20,)], 8))
    with pytest.raises(PairGeneratorError):
        ds_pair_probability(0, 1, s, near, 2, 0)
