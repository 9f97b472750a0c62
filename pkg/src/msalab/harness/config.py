"""Flat ``key = value`` experiment configuration."""
from __future__ import annotations

import dataclasses
import hashlib
import math
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Mapping

from ..model import DiscretizationSpec, FieldDistribution, InteractionSpec

KINDS = ("geometry-selftest", "wegner", "ct-check", "initial-scale", "msa-run", "decay-profile", "dynamical")
DISTRIBUTIONS = ("uniform01", "bernoulli")


class ConfigError(ValueError):
    """Validation failure; ``errors`` lists every offending key."""

    def __init__(self, errors: list[str]):
        super().__init__("invalid configuration: " + "; ".join(errors))
        self.errors = list(errors)


def _f(kind: str, default, doc: str):
    return field(default=default, metadata={"kind": kind, "doc": doc})


@dataclass
class ExperimentConfig:
    experiment: str = _f("str", "geometry-selftest", "experiment kind")
    N: int | None = _f("optint", None, "total particle number (default n)")
    n: int = _f("int", 1, "particle number of the cubes studied")
    d: int = _f("int", 1, "lattice dimension")
    L0: int = _f("int", 8, "initial scale of the schedule")
    L_list: tuple = _f("intlist", (9, 16, 25), "scales for wegner / initial-scale")
    L_max: int = _f("int", 3, "largest L in geometry-selftest")
    box_half_side: int = _f("int", 64, "half-side of localization boxes")
    alpha: float = _f("float", 1.5, "scale exponent (fixed at 3/2)")
    r0: int = _f("int", 1, "interaction range")
    u0: float = _f("float", 1.0, "interaction strength")
    distribution: str = _f("str", "uniform01", "single-site law")
    dist_scale: float = _f("float", 1.0, "disorder scale")
    dist_shift: float = _f("float", 0.0, "disorder shift")
    dist_p0: float = _f("float", 0.5, "bernoulli probability of dist_a")
    dist_a: float = _f("float", 0.0, "bernoulli value a")
    dist_b: float = _f("float", 1.0, "bernoulli value b")
    h: str = _f("str", "1", "grid spacing 1/refine")
    p: float | None = _f("optfloat", None, "probability exponent (default 6Nd + 1)")
    gamma_base: float = _f("float", 0.9, "base mass factor in (0, 1]")
    k_max: int = _f("int", 1, "number of scale steps")
    stride: int = _f("int", 0, "CNR scan stride (0: default)")
    E: float = _f("float", 0.2, "fixed energy for wegner")
    half_window: float = _f("float", 0.5, "half-width of the wegner pair window")
    E_star: float | None = _f("optfloat", None, "top of the energy window")
    E_lo: float | None = _f("optfloat", None, "window override, lower end")
    E_hi: float | None = _f("optfloat", None, "window override, upper end")
    s: float = _f("float", 2.0, "moment order")
    s_star: float = _f("float", 4.0, "admissible bound on s")
    count: int = _f("int", 10, "eigenstates profiled")
    dim_cap: int = _f("int", 4096, "largest matrix dimension allowed")
    trials: int = _f("int", 20, "Monte Carlo trials")
    master_seed: int = _f("int", 0, "master seed (u64)")
    out: str = _f("str", "out", "output directory")
    strict: bool = _f("bool", False, "enforce the asymptotic thresholds")
    workers: int = _f("int", 1, "worker processes")

    # ------------------------------------------------------------------ model

    @property
    def total_N(self) -> int:
        return self.n if self.N is None else self.N

    def field_distribution(self) -> FieldDistribution:
        return FieldDistribution(self.distribution, p0=self.dist_p0, a=self.dist_a, b=self.dist_b,
                                 scale=self.dist_scale, shift=self.dist_shift)

    def interaction(self) -> InteractionSpec:
        return InteractionSpec.step(self.u0, self.r0)

    def discretization(self) -> DiscretizationSpec:
        return DiscretizationSpec.from_h(Fraction(self.h))

    @property
    def window(self) -> tuple | None:
        if self.E_lo is None and self.E_hi is None:
            return None
        return (self.E_lo, self.E_hi)

    # ------------------------------------------------------------ validation

    def validate(self) -> "ExperimentConfig":
        errs = []

        def need(cond: bool, key: str, msg: str):
            if not cond:
                errs.append(f"{key}: {msg} (got {getattr(self, key)!r})")

        need(self.experiment in KINDS, "experiment", f"must be one of {', '.join(KINDS)}")
        need(self.N is None or 1 <= self.N <= 4, "N", "must lie in [1, 4]")
        need(1 <= self.n <= 3, "n", "must lie in [1, 3]")
        if self.N is not None and self.n > self.N:
            errs.append(f"n: must not exceed N (got n={self.n}, N={self.N})")
        need(1 <= self.d <= 3, "d", "must lie in [1, 3]")
        need(self.L0 >= 3, "L0", "must be >= 3")
        need(len(self.L_list) > 0 and all(L >= 1 for L in self.L_list)
             and list(self.L_list) == sorted(set(self.L_list)), "L_list", "must be increasing positive integers")
        need(1 <= self.L_max <= 6, "L_max", "must lie in [1, 6]")
        need(self.box_half_side >= 8, "box_half_side", "must be >= 8")
        need(self.alpha == 1.5, "alpha", "only 1.5 is supported")
        need(0 <= self.r0 <= 8, "r0", "must lie in [0, 8]")
        need(self.u0 >= 0 and math.isfinite(self.u0), "u0", "must be finite and >= 0")
        need(self.distribution in DISTRIBUTIONS, "distribution", f"must be one of {DISTRIBUTIONS}")
        need(self.dist_scale >= 0 and math.isfinite(self.dist_scale), "dist_scale", "must be finite and >= 0")
        need(self.dist_shift >= 0 and math.isfinite(self.dist_shift), "dist_shift", "must be finite and >= 0")
        need(0 <= self.dist_p0 <= 1, "dist_p0", "must lie in [0, 1]")
        need(self.dist_a >= 0, "dist_a", "must be >= 0")
        need(self.dist_b >= 0, "dist_b", "must be >= 0")
        try:
            hv = Fraction(self.h)
            ok = hv > 0 and hv.numerator == 1
        except (ValueError, ZeroDivisionError):
            ok = False
        need(ok, "h", "must be 1/k for a positive integer k")
        need(self.p is None or self.p > 0, "p", "must be positive")
        need(0 < self.gamma_base <= 1, "gamma_base", "must lie in (0, 1]")
        need(0 <= self.k_max <= 4, "k_max", "must lie in [0, 4]")
        need(self.stride >= 0, "stride", "must be >= 0")
        need(math.isfinite(self.E), "E", "must be finite")
        need(self.half_window >= 0, "half_window", "must be >= 0")
        if (self.E_lo is None) != (self.E_hi is None):
            errs.append("E_lo/E_hi: give both or neither")
        elif self.E_lo is not None and not self.E_lo <= self.E_hi:
            errs.append(f"E_lo/E_hi: need E_lo <= E_hi (got {self.E_lo}, {self.E_hi})")
        need(0 <= self.s < self.s_star, "s", "must satisfy 0 <= s < s_star")
        need(self.count >= 1, "count", "must be >= 1")
        need(self.dim_cap >= 1, "dim_cap", "must be >= 1")
        need(self.trials >= 1, "trials", "must be >= 1")
        need(0 <= self.master_seed < 2**64, "master_seed", "must be an unsigned 64-bit integer")
        need(bool(self.out), "out", "must be non-empty")
        need(self.workers >= 1, "workers", "must be >= 1")
        if errs:
            raise ConfigError(errs)
        return self

    # -------------------------------------------------------- serialization

    def to_text(self) -> str:
        lines = []
        for f in dataclasses.fields(self):
            lines.append(f"{f.name} = {_format(f.metadata['kind'], getattr(self, f.name))}")
        return "\n".join(lines) + "\n"

    def to_dict(self) -> dict:
        return {f.name: (list(v) if isinstance(v := getattr(self, f.name), tuple) else v)
                for f in dataclasses.fields(self)}

    def digest(self, exclude: tuple = ("out", "workers")) -> str:
        """Hash of every setting that can change an emitted number."""
        text = "\n".join(line for line in self.to_text().splitlines()
                         if line.split(" = ", 1)[0] not in exclude)
        return hashlib.sha256(text.encode()).hexdigest()

    @classmethod
    def from_text(cls, text: str, validate: bool = True) -> "ExperimentConfig":
        return cls.from_mapping(parse_pairs(text), validate=validate)

    @classmethod
    def from_file(cls, path: str | Path, validate: bool = True) -> "ExperimentConfig":
        return cls.from_text(Path(path).read_text(encoding="utf-8"), validate=validate)

    @classmethod
    def from_mapping(cls, values: Mapping[str, Any], base: "ExperimentConfig | None" = None,
                     validate: bool = True) -> "ExperimentConfig":
        """Build from raw (string or typed) values; unknown keys and bad
        literals are reported together."""
        kinds = {f.name: f.metadata["kind"] for f in dataclasses.fields(cls)}
        errs = []
        parsed = {}
        for key, raw in values.items():
            if key not in kinds:
                errs.append(f"{key}: unknown key")
                continue
            try:
                parsed[key] = _parse(kinds[key], raw)
            except (TypeError, ValueError) as exc:
                errs.append(f"{key}: cannot parse {raw!r} ({exc})")
        cfg = dataclasses.replace(base or cls(), **parsed)
        if validate:
            try:
                cfg.validate()
            except ConfigError as exc:
                errs.extend(exc.errors)
        if errs:
            raise ConfigError(errs)
        return cfg


def parse_pairs(text: str) -> dict[str, str]:
    out = {}
    errs = []
    for no, line in enumerate(text.splitlines(), 1):
        s = line.split("#", 1)[0].strip()
        if not s:
            continue
        if "=" not in s:
            errs.append(f"line {no}: expected 'key = value'")
            continue
        k, v = (t.strip() for t in s.split("=", 1))
        if k in out:
            errs.append(f"{k}: duplicate key (line {no})")
        out[k] = v
    if errs:
        raise ConfigError(errs)
    return out


def _format(kind: str, v) -> str:
    if v is None:
        return "none"
    if kind == "intlist":
        return ",".join(str(int(x)) for x in v)
    if kind == "bool":
        return "true" if v else "false"
    if kind in ("float", "optfloat"):
        return repr(float(v))
    return str(v)


def _parse(kind: str, raw):
    if not isinstance(raw, str):
        if kind == "intlist":
            return tuple(int(x) for x in raw)
        if kind == "optfloat":
            return None if raw is None else float(raw)
        if kind == "optint":
            return None if raw is None else int(raw)
        if kind == "bool" and not isinstance(raw, bool):
            raise ValueError("expected a boolean")
        return {"int": int, "float": float, "str": str, "bool": bool}[kind](raw)
    s = raw.strip()
    if kind == "int":
        return int(s, 0)
    if kind == "float":
        return float(s)
    if kind == "optfloat":
        return None if s.lower() in ("none", "") else float(s)
    if kind == "optint":
        return None if s.lower() in ("none", "") else int(s, 0)
    if kind == "intlist":
        return tuple(int(x) for x in s.replace(" ", "").split(",") if x)
    if kind == "bool":
        if s.lower() in ("true", "1", "yes", "on"):
            return True
        if s.lower() in ("false", "0", "no", "off"):
            return False
        raise ValueError("expected true/false")
    return s
