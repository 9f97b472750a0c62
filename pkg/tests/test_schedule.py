import math
from decimal import Decimal, getcontext

import pytest
from hypothesis import given, strategies as st

from msalab.msa.schedule import (
    ScaleSchedule,
    ScheduleError,
    ceil_two_thirds,
    gamma_of,
    mass_m,
    next_scale,
    previous_scale,
    scale_sequence,
)


def decimal_sequence(L0, k_max):
    getcontext().prec = 80
    out = [L0]
    for _ in range(k_max):
        v = Decimal(out[-1]) ** Decimal("1.5")
        out.append(int(v.to_integral_value(rounding="ROUND_FLOOR")) + 1)
    return out


def test_scale_examples():
    assert scale_sequence(8, 3) == [8, 23, 111, 1170]
    assert scale_sequence(3, 2) == [3, 6, 15]
    assert scale_sequence(17, 0) == [17]


@pytest.mark.parametrize("L0", range(3, 51))
def test_scale_sequence_matches_decimal_oracle(L0):
    assert scale_sequence(L0, 4) == decimal_sequence(L0, 4)


def test_scale_sequence_rejects_bad_input():
    with pytest.raises(ScheduleError):
        scale_sequence(2, 1)
    with pytest.raises(ScheduleError):
        scale_sequence(8, -1)


@given(st.integers(1, 10**6))
def test_previous_scale_inverts_next(L):
    assert previous_scale(next_scale(L)) == L


@given(st.integers(1, 10**6))
def test_ceil_two_thirds(L):
    l = ceil_two_thirds(L)
    assert l**3 >= L * L and (l == 1 or (l - 1) ** 3 < L * L)


def test_mass_example():
    assert mass_m(1.0, 2, 16) == pytest.approx(0.25 * 0.5 / (3 * math.sqrt(2)), rel=1e-15)
    assert mass_m(1.0, 2, 16) == pytest.approx(0.0294628, abs=1e-7)
    with pytest.raises(ScheduleError):
        mass_m(1.5, 1, 8)


def test_gamma_examples():
    assert gamma_of(0.1, 256, 2, 2) == pytest.approx(0.15, rel=1e-15)
    assert gamma_of(0.1, 256, 1, 2) == pytest.approx(0.225, rel=1e-15)
    with pytest.raises(ScheduleError):
        gamma_of(0.1, 256, 3, 2)


@pytest.mark.parametrize("N", [1, 2, 3, 4])
def test_gamma_table_closed_form_and_ordering(N):
    sch = ScaleSchedule(8, 3, N, 1)
    tab = sch.gamma_table()
    for (L, n), g in tab.items():
        closed = sch.m * (1 + L ** (-1 / 8)) ** (N - n + 1)
        assert abs(g - closed) <= 1e-14 * closed
        assert g > sch.m
        if n > 1:
            assert tab[(L, n - 1)] > g
            gap = sch.m * L ** (-1 / 8) * (1 + L ** (-1 / 8)) ** (N - n + 1)
            assert tab[(L, n - 1)] - g == pytest.approx(gap, rel=1e-12)


def test_schedule_p_default_and_strict():
    assert ScaleSchedule(8, 1, 2, 1).p == 13
    ScaleSchedule(8, 1, 2, 1, p=5)  # logged only
    with pytest.raises(ScheduleError):
        ScaleSchedule(8, 1, 2, 1, p=5, strict=True)
    with pytest.raises(ScheduleError):
        ScaleSchedule(3, 1, 1, 1, strict=True)


def test_chain_count_is_negative_at_small_scales():
    # L_{k+1}/L_k - 7J with J = kappa(2) + 5 = 9
    assert 111 / 23 - 7 * 9 < 0
