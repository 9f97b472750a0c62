"""Brute-force verification of the geometric lemmas on small lattices.

All predicates are evaluated in vectorized batches over candidate pairs.
Candidate sets are either full boxes or, where a full box is too large, the
lattice of *critical offsets*: per axis, coordinate differences on both sides
of every threshold that enters the predicates (``2L``, ``2nL``, ``7NL`` and
so on). Every predicate only compares coordinate differences with these
thresholds, so the critical lattice reaches every combination of outcomes of
those comparisons along each axis.
"""
from __future__ import annotations

import itertools
import time
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    ParticleConfiguration,
    count_singular_maxima,
    find_separating_partition,
    kappa,
)


@dataclass
class LemmaResult:
    lemma: str
    n: int
    d: int
    L: int
    r0: int | None
    checked: int
    counterexamples: int
    mode: str
    seconds: float
    example: tuple | None = None

    @property
    def ok(self) -> bool:
        return self.counterexamples == 0

    CSV_HEADER = ("lemma", "n", "d", "L", "r0", "mode", "checked", "counterexamples")

    def row(self) -> tuple:
        return (self.lemma, self.n, self.d, self.L, "" if self.r0 is None else self.r0, self.mode,
                self.checked, self.counterexamples)


# --------------------------------------------------------------------------
# Vectorized predicates. X, Y have shape (M, n, d).
# --------------------------------------------------------------------------


def _masks(n: int, proper: bool = False) -> list[np.ndarray]:
    top = (1 << n) - 1 if proper else 1 << n
    return [np.array([(m >> i) & 1 for i in range(n)], dtype=bool) for m in range(1, top)]


def _dist(A: np.ndarray, B: np.ndarray) -> np.ndarray:
    """``(M, n, n)`` max-norm distances ``|A_i - B_j|``."""
    return np.abs(A[:, :, None, :] - B[:, None, :, :]).max(axis=-1)


def j_separable_batch(X: np.ndarray, Y: np.ndarray, L: int, side: str = "any") -> np.ndarray:
    """Whether some ``J`` makes ``X`` (``side="x"``), ``Y`` (``"y"``) or either
    (``"any"``) J-separable from the other; no distance clause."""
    n = X.shape[1]
    clear = 2 * L
    Dxy = _dist(X, Y) > clear
    out = np.zeros(X.shape[0], dtype=bool)
    sides = []
    if side in ("x", "any"):
        sides.append((Dxy.all(axis=2), _dist(X, X) > clear))
    if side in ("y", "any"):
        sides.append((Dxy.all(axis=1), _dist(Y, Y) > clear))
    for J in _masks(n):
        comp = ~J
        for a, D in sides:
            ok = a[:, J].all(axis=1)
            if comp.any():
                ok &= D[:, J][:, :, comp].all(axis=(1, 2))
            out |= ok
    return out


def separable_batch(X: np.ndarray, Y: np.ndarray, L: int, N: int) -> np.ndarray:
    far = np.abs(X - Y).max(axis=(1, 2)) > 7 * N * L
    return far & j_separable_batch(X, Y, L)


def outside_exclusion_batch(X: np.ndarray, Y: np.ndarray, L: int) -> np.ndarray:
    n = X.shape[1]
    D = _dist(X, Y)  # D[:, i, j] = |x_i - y_j|
    out = np.ones(X.shape[0], dtype=bool)
    cols = np.arange(n)
    for sigma in itertools.product(range(n), repeat=n):
        out &= D[:, np.array(sigma), cols].max(axis=1) > 2 * n * L
    return out


def diameter_batch(U: np.ndarray) -> np.ndarray:
    return _dist(U, U).max(axis=(1, 2))


def projection_gap_batch(U: np.ndarray, L: int, J: np.ndarray) -> np.ndarray:
    D = _dist(U, U)[:, J][:, :, ~J].min(axis=(1, 2))
    return np.where(D > 2 * L, D - 2 * L, -1)


# --------------------------------------------------------------------------
# Candidate generators
# --------------------------------------------------------------------------


def _sym(values) -> list[int]:
    return sorted({s * v for v in values for s in (1, -1)})


def _configs_from_axis_values(n: int, d: int, axis_values, anchor_zero: bool = True) -> np.ndarray:
    """All ``n``-particle configurations with particle 0 at the origin and the
    other coordinates drawn from ``axis_values``."""
    pts = np.array(list(itertools.product(axis_values, repeat=d)), dtype=np.int64)
    if n == 1:
        return np.zeros((1, 1, d), dtype=np.int64)
    idx = np.array(list(itertools.product(range(len(pts)), repeat=n - 1)))
    out = np.zeros((len(idx), n, d), dtype=np.int64)
    out[:, 1:, :] = pts[idx]
    return out


def _partners(base: np.ndarray, offsets: list[int], d: int) -> np.ndarray:
    """Configurations whose particle ``i`` sits at ``base_j + o`` for any ``j``
    and any per-axis offset ``o`` in ``offsets``."""
    n = base.shape[0]
    off = np.array(list(itertools.product(offsets, repeat=d)), dtype=np.int64)
    cand = np.unique((base[:, None, :] + off[None, :, :]).reshape(-1, d), axis=0)
    idx = np.array(list(itertools.product(range(len(cand)), repeat=n)))
    return cand[idx]


def _chunks(total: int, size: int):
    for s in range(0, total, size):
        yield slice(s, min(total, s + size))


# --------------------------------------------------------------------------
# Lemma checks
# --------------------------------------------------------------------------


def _x_axis_values(n: int, d: int, L: int) -> tuple[list[int], str]:
    if d == 1 and n <= 2:
        B = 2 * n * L + 1
        return list(range(-B, B + 1)), "box"
    return _sym([0, 1, 2 * L, 2 * L + 1, 2 * n * L, 2 * n * L + 1]), "critical"


def check_lemma_exclusion(n: int, d: int, L: int, budget: int = 1_000_000,
                          rng: np.random.Generator | None = None) -> LemmaResult:
    """Pairs far apart and outside all exclusion cubes are separable."""
    t0 = time.perf_counter()
    N = n
    xv, mode = _x_axis_values(n, d, L)
    X0 = _configs_from_axis_values(n, d, xv)
    thr = [2 * L, 2 * n * L, 7 * N * L]
    offs = _sym([0] + [v for t in thr for v in (t, t + 1)])
    checked = bad = 0
    example = None
    per_x = len(_partners(X0[0], offs, d)) if n * d <= 4 else None
    if per_x is not None and per_x * len(X0) <= budget:
        for x in X0:
            Y = _partners(x, offs, d)
            X = np.broadcast_to(x, Y.shape)
            m = (np.abs(X - Y).max(axis=(1, 2)) > 7 * N * L) & outside_exclusion_batch(X, Y, L)
            if not m.any():
                continue
            ok = j_separable_batch(X[m], Y[m], L)
            checked += int(m.sum())
            if not ok.all():
                bad += int((~ok).sum())
                example = example or (x.tolist(), Y[m][~ok][0].tolist())
    else:
        mode = "critical-sampled"
        rng = rng or np.random.default_rng(0)
        xs = np.array(xv)
        offs_a = np.array(offs)
        for sl in _chunks(budget, 200_000):
            M = sl.stop - sl.start
            X = np.zeros((M, n, d), dtype=np.int64)
            X[:, 1:, :] = rng.choice(xs, size=(M, n - 1, d))
            src = rng.integers(0, n, size=(M, n))
            Y = X[np.arange(M)[:, None], src] + rng.choice(offs_a, size=(M, n, d))
            m = (np.abs(X - Y).max(axis=(1, 2)) > 7 * N * L) & outside_exclusion_batch(X, Y, L)
            ok = j_separable_batch(X[m], Y[m], L)
            checked += int(m.sum())
            if not ok.all():
                bad += int((~ok).sum())
                example = example or (X[m][~ok][0].tolist(), Y[m][~ok][0].tolist())
    return LemmaResult("exclusion-cubes", n, d, L, None, checked, bad, mode, time.perf_counter() - t0, example)


def check_lemma_far_separable(n: int, d: int, L: int, budget: int = 1_000_000,
                              rng: np.random.Generator | None = None) -> LemmaResult:
    """``|x - y| > diam(y) + 5NL`` forces ``x`` to be J-separable from ``y``."""
    t0 = time.perf_counter()
    N = n
    yv, mode = _x_axis_values(n, d, L)
    Y0 = _configs_from_axis_values(n, d, yv)
    diam = diameter_batch(Y0)
    checked = bad = 0
    example = None
    # x_i relative to y_j; the decisive threshold depends on diam(y)
    groups: dict[int, list[int]] = {}
    for k, D in enumerate(diam):
        groups.setdefault(int(D), []).append(k)
    n_off = 6 * 2 - 1
    sampled = len(Y0) * (n * n_off**d) ** n > budget
    rng = rng or np.random.default_rng(1)
    per_group = max(1, budget // max(len(groups), 1))
    for D, ks in groups.items():
        R = D + 5 * N * L
        offs = _sym([0, 2 * L, 2 * L + 1, R, R + 1, R + 2 * L + 1])
        for k in ks:
            y = Y0[k]
            if sampled:
                M = max(1, per_group // len(ks))
                src = rng.integers(0, n, size=(M, n))
                X = y[src] + rng.choice(np.array(offs), size=(M, n, d))
            else:
                X = _partners(y, offs, d)
            Yb = np.broadcast_to(y, X.shape)
            m = np.abs(X - Yb).max(axis=(1, 2)) > R
            if not m.any():
                continue
            ok = j_separable_batch(X[m], Yb[m], L, side="x")
            checked += int(m.sum())
            if not ok.all():
                bad += int((~ok).sum())
                example = example or (X[m][~ok][0].tolist(), y.tolist())
    return LemmaResult("far-implies-separable", n, d, L, None, checked, bad,
                       "critical-sampled" if sampled else mode, time.perf_counter() - t0, example)


def check_lemma_pi_split(n: int, d: int, L: int, r0: int) -> LemmaResult:
    """Every configuration of diameter above ``n(2L + r0)`` splits with gap ``> r0``."""
    t0 = time.perf_counter()
    bound = n * (2 * L + r0)
    if d == 1 and n <= 3:
        B = bound + 2 * L + r0 + 2
        vals, mode = list(range(-B, B + 1)), "box"
    else:
        vals = _sym([0, 1, 2 * L, 2 * L + r0, 2 * L + r0 + 1, bound, bound + 1,
                     bound + 2 * L + r0 + 1])
        mode = "critical"
    U = _configs_from_axis_values(n, d, vals)
    pi = diameter_batch(U) > bound
    U = U[pi]
    found = np.zeros(len(U), dtype=bool)
    for J in _masks(n, proper=True):
        found |= projection_gap_batch(U, L, J) > r0
    bad = int((~found).sum())
    ex = U[~found][0].tolist() if bad else None
    return LemmaResult("pi-split", n, d, L, r0, int(len(U)), bad, mode, time.perf_counter() - t0, ex)


def check_lemma_fi_disjoint(n: int, d: int, L: int, r0: int, budget: int = 1_000_000) -> LemmaResult:
    """FI pairs at distance ``> 7nL`` with ``L > 2 r0`` have disjoint projections."""
    t0 = time.perf_counter()
    if not L > 2 * r0:
        return LemmaResult("fi-disjoint", n, d, L, r0, 0, 0, "vacuous", 0.0)
    bound = n * (2 * L + r0)
    if d == 1:
        vals, mode = list(range(-bound, bound + 1)), "box"
    else:
        vals, mode = _sym([0, 1, 2 * L, 2 * L + 1, bound // 2, bound]), "critical"
    U = _configs_from_axis_values(n, d, vals)
    U = U[diameter_batch(U) <= bound]
    far = 7 * n * L
    reach = far + bound + 2 * L + 1
    shift_vals = _sym([far + 1, far + 2, far + bound // 2 + 1, far + bound + 1, reach])
    if d == 1:
        shift_vals = sorted(set(shift_vals) | set(_sym(range(far + 1, reach + 1))))
    shifts = np.array(list(itertools.product(shift_vals + [0], repeat=d)), dtype=np.int64)
    shifts = shifts[np.abs(shifts).max(axis=1) > 0]
    checked = bad = 0
    example = None
    iu = np.arange(len(U))
    pairs = len(U) ** 2 * len(shifts)
    if pairs > budget:
        mode = mode + "-sampled"
        rng = np.random.default_rng(2)
        ia = rng.integers(0, len(U), budget)
        ib = rng.integers(0, len(U), budget)
        isf = rng.integers(0, len(shifts), budget)
    else:
        ia, ib, isf = (a.ravel() for a in np.meshgrid(iu, iu, np.arange(len(shifts)), indexing="ij"))
    for sl in _chunks(len(ia), 250_000):
        X = U[ia[sl]]
        Y = U[ib[sl]] + shifts[isf[sl]][:, None, :]
        m = np.abs(X - Y).max(axis=(1, 2)) > far
        D = _dist(X[m], Y[m]).min(axis=(1, 2))
        ok = D > 2 * L
        checked += int(m.sum())
        if not ok.all():
            bad += int((~ok).sum())
            example = example or (X[m][~ok][0].tolist(), Y[m][~ok][0].tolist())
    return LemmaResult("fi-disjoint", n, d, L, r0, checked, bad, mode, time.perf_counter() - t0, example)


def check_separability_symmetry(n: int, d: int, L: int, samples: int = 20_000,
                                rng: np.random.Generator | None = None) -> LemmaResult:
    """Scalar witness search agrees with the batch predicate and is symmetric."""
    t0 = time.perf_counter()
    rng = rng or np.random.default_rng(3)
    N = n
    span = 7 * N * L + 4 * L + 2
    X = rng.integers(-span, span + 1, size=(samples, n, d))
    Y = rng.integers(-span, span + 1, size=(samples, n, d))
    batch = separable_batch(X, Y, L, N)
    batch_rev = separable_batch(Y, X, L, N)
    bad = int((batch != batch_rev).sum())
    k = min(samples, 2000)
    for i in range(k):
        a = find_separating_partition(ParticleConfiguration(X[i]), ParticleConfiguration(Y[i]), L, N)
        b = find_separating_partition(ParticleConfiguration(Y[i]), ParticleConfiguration(X[i]), L, N)
        if (a is None) != (b is None) or (a is not None) != bool(batch[i]):
            bad += 1
    return LemmaResult("separability-symmetry", n, d, L, None, samples, bad, "sampled",
                       time.perf_counter() - t0)


def check_lemma_counting(n: int, d: int, L: int, sets: int = 40,
                         rng: np.random.Generator | None = None) -> LemmaResult:
    """``M >= kappa(n) + 2`` implies ``M_sep >= 2`` (and the PI analogue).

    Center sets are drawn as ``kappa(n) + 2`` mutually far configurations plus
    random extras, so the hypothesis is met on most sets.
    """
    t0 = time.perf_counter()
    rng = rng or np.random.default_rng(4)
    N = n
    far = 7 * N * L + 1
    need = kappa(n) + 2
    bad = checked = 0
    example = None
    for _ in range(sets):
        cents = []
        for k in range(need + int(rng.integers(0, 3))):
            base = np.zeros(d, dtype=np.int64)
            base[0] = k * (far + int(rng.integers(0, 3)))
            pts = base + rng.integers(-2 * n * L, 2 * n * L + 1, size=(n, d))
            flag = "PI" if rng.random() < 0.5 else "FI"
            cents.append((pts.tolist(), flag))
        c = count_singular_maxima(cents, L, N)
        if c.M >= need:
            checked += 1
            if c.M_sep < 2:
                bad += 1
                example = example or cents
        if c.M_PI >= need and c.M_PI_sep < 2:
            bad += 1
            example = example or cents
    return LemmaResult("counting", n, d, L, None, checked, bad, "sampled", time.perf_counter() - t0, example)


def run_geometry_suite(ns=(1, 2, 3), ds=(1, 2), Ls=(1, 2, 3), r0s=(0, 1, 2), seed: int = 0,
                       budget: int = 1_000_000, counting_sets: int = 40) -> list[LemmaResult]:
    """All lemma checks over the requested grid."""
    rng = np.random.default_rng(seed)
    out = []
    for n in ns:
        for d in ds:
            for L in Ls:
                out.append(check_lemma_exclusion(n, d, L, budget, rng))
                out.append(check_lemma_far_separable(n, d, L, budget, rng))
                out.append(check_separability_symmetry(n, d, L, rng=rng))
                if n <= 2:
                    out.append(check_lemma_counting(n, d, L, counting_sets, rng))
                for r0 in r0s:
                    out.append(check_lemma_pi_split(n, d, L, r0))
                    out.append(check_lemma_fi_disjoint(n, d, L, r0))
    return out
