import math

import numpy as np
import pytest

from msalab.geometry import MultiCube, find_separating_partition
from msalab.model import FieldDistribution, InteractionSpec, assemble_pi_factors, field_for_cubes
from msalab.msa.hnr import (
    PIAnalysis,
    TunnellingError,
    check_hnr,
    check_tunnelling,
    find_resonant_rectangle,
    lemma_nd_ro_ns_margin,
)
from msalab.msa.schedule import ceil_two_thirds, next_scale
from msalab.spectral import restrict, resonance_threshold

INTER = InteractionSpec.step(1.0, 1)


def pi_analysis(seed, L=4, dist=None):
    cube = MultiCube([(0,), (5 * L + 20,)], L)
    fld = field_for_cubes(seed, [cube], dist or FieldDistribution())
    return PIAnalysis.build(cube, fld, INTER)


def brute_cnr(H, E):
    """Every sub-cube C_l(v) with ceil(L^{2/3}) <= l <= L, |v - u| + l <= L."""
    L = H.cube.L
    M = H.dense()
    u = int(H.cube.center.array()[0, 0])
    for ell in range(ceil_two_thirds(L), L + 1):
        for v in range(u - (L - ell), u + (L - ell) + 1):
            lo = v - ell - (u - L)
            sub = M[lo:lo + 2 * ell + 1, lo:lo + 2 * ell + 1]
            if np.min(np.abs(np.linalg.eigvalsh(sub) - E)) <= math.exp(-math.sqrt(ell)):
                return False
    return True


def brute_hnr(pi, E):
    return (all(brute_cnr(pi.left, E - mu) for mu in pi.mu)
            and all(brute_cnr(pi.right, E - lam) for lam in pi.lam))


@pytest.mark.parametrize("seed", range(6))
def test_hnr_matches_brute_force(seed):
    pi = pi_analysis(seed)
    rng = np.random.default_rng(seed)
    tops = pi.lam[0] + pi.mu[0]
    energies = list(rng.uniform(tops - 0.5, tops + 3.0, 6))
    energies.append(float(pi.lam[1] + pi.mu[0] + 0.3 * resonance_threshold(pi.cube.L)))
    for E in energies:
        assert check_hnr(pi, E) == brute_hnr(pi, E)


def test_hnr_far_below_and_exact_shift():
    pi = pi_analysis(1)
    assert check_hnr(pi, pi.lam[0] + pi.mu[0] - 5.0)
    assert not check_hnr(pi, float(pi.lam[3] + pi.mu[2]))


def test_hnr_oracle_override():
    pi = pi_analysis(2)
    calls = []
    assert check_hnr(pi, 0.0, lambda side, e: calls.append(side) or True)
    assert len(calls) == pi.left.dim + pi.right.dim
    assert not check_hnr(pi, 0.0, lambda side, e: side == "left")


def test_planted_non_hnr_yields_verified_rectangles():
    failures = 0
    checked = 0
    for seed in range(100):
        pi = pi_analysis(seed, L=int(4 + seed % 3))
        rng = np.random.default_rng(seed)
        side = ("left", "right")[seed % 2]
        H, other = (pi.left, pi.mu) if side == "left" else (pi.right, pi.lam)
        L = pi.cube.L
        ell = int(rng.integers(ceil_two_thirds(L), L + 1))
        u = H.cube.center.array()
        off = int(rng.integers(-(L - ell), L - ell + 1))
        sub = MultiCube(u + off, ell)
        level = float(rng.choice(restrict(H, sub).eigenvalues))
        E = level + float(rng.choice(other)) + rng.uniform(-0.4, 0.4) * resonance_threshold(ell)
        assert not check_hnr(pi, E)
        w = find_resonant_rectangle(pi, E)
        checked += 1
        ok = w is not None and w.verified and ceil_two_thirds(L) <= w.ell <= L
        failures += not ok
    assert checked == 100 and failures == 0


def test_rectangle_absent_when_hnr():
    pi = pi_analysis(3)
    E = pi.lam[0] + pi.mu[0] - 2.0
    assert find_resonant_rectangle(pi, E) is None


# ------------------------------------------------------------- tunnelling


def test_tunnelling_vacuous_at_small_scale():
    pi = pi_analysis(0, L=23)
    assert check_tunnelling(pi, 0.5, 0.05, 2).kind == "NT"


def test_tunnelling_needs_a_schedule_scale():
    pi = pi_analysis(0, L=5)
    with pytest.raises(TunnellingError):
        check_tunnelling(pi, 0.5, 0.05, 2)


def well_pi(wells, L=525):
    """PI cube whose left factor is a constant barrier 10 with zero-valued wells."""
    cube = MultiCube([(0,), (3000,)], L)
    over = {(w + k,): 0.0 for w in wells for k in range(-2, 3)}
    fld = field_for_cubes(0, [cube], FieldDistribution(scale=0.0, shift=10.0), overrides=over)
    left, right, J = assemble_pi_factors(cube, fld, INTER)
    return PIAnalysis(cube, left, right, J, None, None, fld, INTER, None)


def test_planted_wells_give_left_tunnelling():
    ell = 65
    L = next_scale(ell)
    assert L == 525
    pi = well_pi((-460, 460), L)
    level = restrict(pi.left, MultiCube([(460,)], ell)).eigenvalues[0]
    E = float(level + pi.mu[0])
    res = check_tunnelling(pi, E, 0.05, 2, stride=20)
    assert res.kind == "LT" and res.shift_index == 0
    for c in (res.v1, res.v2):
        x = int(c.center.array()[0, 0])
        assert any(abs(x - w) <= ell - 2 for w in (-460, 460))
    assert find_separating_partition(res.v1.center, res.v2.center, ell, 2) is not None


def test_no_singular_subcubes_gives_nt():
    pi = well_pi(())
    res = check_tunnelling(pi, 0.0, 0.05, 2, singularity_oracle=lambda c, R, e: False, stride=40)
    assert res.kind == "NT"


def test_oracle_planted_pair_is_reported():
    pi = well_pi(())
    targets = {-460, 460}
    oracle = lambda c, R, e: int(c.center.array()[0, 0]) in targets and e == pytest.approx(0.0 - pi.mu[3])
    res = check_tunnelling(pi, 0.0, 0.05, 2, singularity_oracle=oracle, stride=20)
    assert res.kind == "LT" and res.shift_index == 3
    assert {int(res.v1.center.array()[0, 0]), int(res.v2.center.array()[0, 0])} == targets


def test_margin_is_negative_at_desk_scale():
    assert lemma_nd_ro_ns_margin(0.03, 23, 2, 2) < 0
    assert lemma_nd_ro_ns_margin(0.03, 23, 1, 2) == -math.inf
