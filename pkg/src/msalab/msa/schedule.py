"""Length scales and mass parameters of the multi-scale induction."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from math import isqrt

log = logging.getLogger(__name__)


class ScheduleError(ValueError):
    pass


def next_scale(L: int) -> int:
    """``floor(L**1.5) + 1`` in exact integer arithmetic."""
    return isqrt(L**3) + 1


def previous_scale(L: int) -> int | None:
    """The ``l`` with ``next_scale(l) == L``, or ``None`` if there is none."""
    # next_scale is strictly increasing, so bisect on l
    lo, hi = 1, max(2, L)
    while lo < hi:
        mid = (lo + hi) // 2
        if next_scale(mid) < L:
            lo = mid + 1
        else:
            hi = mid
    return lo if next_scale(lo) == L else None


def scale_sequence(L0: int, k_max: int) -> list[int]:
    """``[L_0, ..., L_{k_max}]`` with ``L_k = floor(L_{k-1}^{3/2}) + 1``."""
    if int(L0) != L0 or L0 < 3:
        raise ScheduleError(f"L0 must be an integer >= 3, got {L0}")
    if k_max < 0:
        raise ScheduleError("k_max must be non-negative")
    if L0 == 3:
        log.warning("L0 = 3 sits on the boundary of the admissible range")
    levels = [int(L0)]
    for _ in range(k_max):
        levels.append(next_scale(levels[-1]))
    return levels


def ceil_two_thirds(L: int) -> int:
    """Smallest integer ``l`` with ``l**3 >= L**2``, i.e. ``ceil(L^{2/3})``."""
    if L < 1:
        raise ScheduleError("L must be positive")
    l = max(1, round(L ** (2.0 / 3.0)) - 1)
    while l**3 < L * L:
        l += 1
    while l > 1 and (l - 1) ** 3 >= L * L:
        l -= 1
    return l


def mass_m(gamma_base: float, N: int, L0: int) -> float:
    """``m = 2^{-N} gamma L0^{-1/4} / (3 sqrt 2)``."""
    if not 0.0 < gamma_base <= 1.0:
        raise ScheduleError("gamma_base must lie in (0, 1]")
    if N < 1 or L0 < 1:
        raise ScheduleError("need N >= 1 and L0 >= 1")
    return 2.0**-N * gamma_base * L0**-0.25 / (3.0 * math.sqrt(2.0))


def gamma_of(m: float, L: float, n: int, N: int) -> float:
    """``gamma(m, L, n) = m (1 + L^{-1/8})^{N - n + 1}``."""
    if m <= 0 or L < 1 or not 1 <= n <= N:
        raise ScheduleError(f"gamma_of domain violated: m={m}, L={L}, n={n}, N={N}")
    return m * (1.0 + L**-0.125) ** (N - n + 1)


@dataclass
class ScaleSchedule:
    """Scales, exponent ``p`` and mass table for one induction run.

    ``p`` defaults to ``6 N d + 1``. With ``strict`` set, ``p <= 6 N d`` is
    rejected; otherwise it is logged.
    """

    L0: int
    k_max: int
    N: int
    d: int
    gamma_base: float = 0.9
    p: float | None = None
    strict: bool = False
    m_override: float | None = None
    levels: list = field(init=False)

    def __post_init__(self):
        self.levels = scale_sequence(self.L0, self.k_max)
        if self.p is None:
            self.p = 6 * self.N * self.d + 1
        if self.p <= 6 * self.N * self.d:
            msg = f"p = {self.p} does not exceed 6Nd = {6 * self.N * self.d}"
            if self.strict:
                raise ScheduleError(msg)
            log.warning(msg)
        if self.strict and self.L0 < 4:
            raise ScheduleError("strict mode needs L0 > 3")

    @property
    def alpha(self) -> float:
        return 1.5

    @property
    def m(self) -> float:
        if self.m_override is not None:
            return self.m_override
        return mass_m(self.gamma_base, self.N, self.L0)

    def gamma(self, L: int, n: int) -> float:
        return gamma_of(self.m, L, n, self.N)

    def gamma_table(self) -> dict:
        return {(L, n): self.gamma(L, n) for L in self.levels for n in range(1, self.N + 1)}

    def target_bound(self, k: int, n: int) -> float:
        """``L_k^{-2 p 4^{N-n}}`` (display only; underflows to 0 quickly)."""
        expo = 2.0 * self.p * 4.0 ** (self.N - n)
        return math.exp(-expo * math.log(self.levels[k]))
