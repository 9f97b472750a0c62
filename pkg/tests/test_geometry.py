import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from msalab.geometry import (
    GeometryError,
    IndexPartition,
    MultiCube,
    ParticleConfiguration,
    PreconditionError,
    classify_interactivity,
    cluster_decompose,
    count_singular_maxima,
    exclusion_cube_centers,
    fi_projection_disjoint,
    find_separating_partition,
    is_J_separable,
    kappa,
    max_dist,
    outside_exclusion_cubes,
    projection_gap,
)
from msalab.geometry_checks import (
    check_lemma_counting,
    check_lemma_exclusion,
    check_lemma_far_separable,
    check_lemma_fi_disjoint,
    check_lemma_pi_split,
    j_separable_batch,
    outside_exclusion_batch,
    separable_batch,
)


def cfg1(*xs):
    return ParticleConfiguration([(x,) for x in xs])


@st.composite
def configurations(draw, n=None, d=None, span=20):
    n = n or draw(st.integers(1, 3))
    d = d or draw(st.integers(1, 2))
    pts = draw(st.lists(st.lists(st.integers(-span, span), min_size=d, max_size=d), min_size=n, max_size=n))
    return ParticleConfiguration(pts)


@st.composite
def config_pairs(draw, span=40):
    n = draw(st.integers(1, 3))
    d = draw(st.integers(1, 2))
    return draw(configurations(n, d, span)), draw(configurations(n, d, span))


# ----------------------------------------------------------------- types


def test_configuration_rejects_bad_input():
    with pytest.raises(GeometryError):
        ParticleConfiguration([])
    with pytest.raises(GeometryError):
        ParticleConfiguration([(0,), (1, 2)])


def test_multicube_regions_need_positive_half_side():
    with pytest.raises(GeometryError):
        MultiCube([(0,)], 0)
    c = MultiCube([(0,), (5,)], 6)
    assert c.n == 2 and c.d == 1 and c.int_half_side == 2


def test_index_partition_invariants():
    J = IndexPartition.from_mask(0b101, 3)
    assert J.J == frozenset({0, 2})
    assert J.complement == frozenset({1})
    assert J.one_based == (1, 3)
    with pytest.raises(GeometryError):
        IndexPartition(frozenset(), 2)


# ------------------------------------------------------------- clusters


def test_cluster_examples():
    assert cluster_decompose(cfg1(0, 1, 10), 2).as_sets() == [{0, 1}, {2}]
    assert cluster_decompose(cfg1(0), 7).as_sets() == [{0}]
    assert cluster_decompose(cfg1(0, 100), 2).as_sets() == [{0}, {1}]


def test_cluster_chain_links_through_intermediate():
    # 0 and 8 only connect through 4
    assert cluster_decompose(cfg1(0, 8, 4), 2).as_sets() == [{0, 1, 2}]


@given(configurations(), st.integers(1, 4))
def test_cluster_partition_properties(y, L):
    dec = cluster_decompose(y, L)
    members = sorted(i for c in dec.clusters for i in c)
    assert members == list(range(y.n))
    assert dec.M <= y.n
    pts = y.array()
    for c in dec.clusters:
        idx = sorted(c)
        diam = np.abs(pts[idx][:, None] - pts[idx][None]).max() if len(idx) > 1 else 0
        assert diam <= 2 * y.n * L
    for a, b in itertools.combinations(dec.clusters, 2):
        for i in a:
            for j in b:
                assert max_dist(pts[i], pts[j]) > 2 * L


# ---------------------------------------------------------- separability


def test_separability_examples():
    assert is_J_separable(cfg1(0, 0), cfg1(20, 20), 1, [0, 1])
    assert not is_J_separable(cfg1(0, 20), cfg1(20, 0), 1, [0])
    x = cfg1(3, 9)
    for mask in (1, 2, 3):
        assert not is_J_separable(x, x, 1, IndexPartition.from_mask(mask, 2))


def test_separability_dimension_mismatch():
    with pytest.raises(GeometryError):
        is_J_separable(cfg1(0, 1), cfg1(0), 1, [0])


def test_find_separating_partition_examples():
    J = find_separating_partition(cfg1(0, 0), cfg1(20, 20), 1, 2)
    assert J is not None and J.side == "x" and J.J == frozenset({0, 1})
    assert find_separating_partition(cfg1(0, 20), cfg1(20, 0), 1, 2) is None
    assert find_separating_partition(cfg1(0, 0), cfg1(14, 14), 1, 2) is None  # 14 <= 7NL


def test_witness_tie_break_prefers_smallest_mask_then_x_side():
    # both x_1 alone and y_1 alone work; mask 1 on the x side wins
    x, y = cfg1(0, 50), cfg1(100, 50)
    J = find_separating_partition(x, y, 1, 2)
    assert (J.mask, J.side) == (1, "x")


@settings(max_examples=200)
@given(config_pairs(), st.integers(1, 3))
def test_separability_symmetric(pair, L):
    x, y = pair
    N = x.n
    assert (find_separating_partition(x, y, L, N) is None) == (find_separating_partition(y, x, L, N) is None)


@settings(max_examples=200)
@given(config_pairs(), st.integers(1, 3))
def test_witness_is_valid(pair, L):
    x, y = pair
    J = find_separating_partition(x, y, L, x.n)
    if J is not None:
        a, b = (x, y) if J.side == "x" else (y, x)
        assert is_J_separable(a, b, L, J)
        assert max_dist(x, y) > 7 * x.n * L


@settings(max_examples=150)
@given(config_pairs(), st.integers(1, 3))
def test_batch_predicates_match_scalar(pair, L):
    x, y = pair
    X, Y = x.array()[None], y.array()[None]
    assert bool(separable_batch(X, Y, L, x.n)[0]) == (find_separating_partition(x, y, L, x.n) is not None)
    scalar_x = any(is_J_separable(x, y, L, IndexPartition.from_mask(m, x.n)) for m in range(1, 1 << x.n))
    assert bool(j_separable_batch(X, Y, L, side="x")[0]) == scalar_x
    cents = exclusion_cube_centers(x, L)
    assert bool(outside_exclusion_batch(X, Y, L)[0]) == outside_exclusion_cubes(y, cents, x.n, L)


# ------------------------------------------------------ exclusion cubes


def test_exclusion_examples():
    assert [c.points for c in exclusion_cube_centers(cfg1(5), 2)] == [((5,),)]
    assert len(exclusion_cube_centers(cfg1(0, 100), 2)) == 4
    assert len(exclusion_cube_centers(cfg1(3, 3), 2)) == 1  # duplicates dropped


@given(configurations(), st.integers(1, 3))
def test_exclusion_count_bounded_by_kappa(x, L):
    assert len(exclusion_cube_centers(x, L)) <= kappa(x.n)


def test_exclusion_scan_n2_d1():
    # every far y outside the four cubes of half-side 8 around (0, 100) is separable
    x = cfg1(0, 100)
    L, N = 2, 2
    cents = exclusion_cube_centers(x, L)
    bad = 0
    for a in range(-60, 170):
        for b in range(-60, 170):
            y = cfg1(a, b)
            if max_dist(x, y) > 7 * N * L and outside_exclusion_cubes(y, cents, 2, L):
                bad += find_separating_partition(x, y, L, N) is None
    assert bad == 0


# --------------------------------------------------------- interactivity


def test_classify_examples():
    assert classify_interactivity(cfg1(0, 20), 5, 2).kind == "FI"
    res = classify_interactivity(cfg1(0, 30), 5, 2)
    assert res.kind == "PI" and res.J.J == frozenset({0})
    assert projection_gap(cfg1(0, 30), 5, [0]) == 20
    assert classify_interactivity(cfg1(7, 7, 7), 1, 0).kind == "FI"


@settings(max_examples=200)
@given(configurations(span=40), st.integers(1, 3), st.integers(0, 2))
def test_pi_witness_gap_exceeds_r0(u, L, r0):
    res = classify_interactivity(u, L, r0)
    if res.is_pi:
        assert projection_gap(u, L, res.J) > r0


def test_fi_projection_examples():
    assert fi_projection_disjoint(cfg1(0, 3), cfg1(100, 103), 2, 1)
    assert not fi_projection_disjoint(cfg1(0, 3), cfg1(0, 3), 2, 1)
    with pytest.raises(PreconditionError):
        fi_projection_disjoint(cfg1(0, 300), cfg1(0, 3), 2, 1)


# ---------------------------------------------------------- counting


def test_counting_examples():
    assert count_singular_maxima([], 2, 2).as_dict() == dict(M=0, M_sep=0, M_PI=0, M_PI_sep=0, M_FI=0)
    a = ([(0,), (40,)], "PI")
    b = ([(200,), (240,)], "PI")
    c = count_singular_maxima([a, b], 1, 2)
    assert c.M_PI_sep == 2 and c.M_PI == 2 and c.M_FI == 0


def test_counting_rejects_mixed_shapes():
    with pytest.raises(GeometryError):
        count_singular_maxima([([(0,)], "FI"), ([(0,), (1,)], "FI")], 1, 2)


def test_counting_container_boundary_filter():
    box = MultiCube([(0,)], 20)
    near_edge = ([(19,)], "FI")
    inside = ([(0,)], "FI")
    c = count_singular_maxima([near_edge, inside], 2, 1, container=box)
    assert c.M == 1


# --------------------------------------------------------- lemma checks


@pytest.mark.parametrize("n,d", [(1, 1), (2, 1), (1, 2)])
def test_lemma_checks_small(n, d):
    for L in (1, 2):
        assert check_lemma_exclusion(n, d, L).ok
        assert check_lemma_far_separable(n, d, L).ok
        assert check_lemma_counting(n, d, L, sets=5).ok
        for r0 in (0, 1):
            assert check_lemma_pi_split(n, d, L, r0).ok
            assert check_lemma_fi_disjoint(n, d, L, r0).ok


def test_lemma_check_detects_a_false_claim():
    # FI pairs closer than 7nL can overlap; the checker must see that
    r = check_lemma_fi_disjoint(2, 1, 3, 1)
    assert r.ok and r.checked > 0
    X = np.array([[[0], [1]]])
    Y = np.array([[[2], [3]]])
    assert not bool(separable_batch(X, Y, 1, 2)[0])
