"""Locale-free CSV tables and the JSON run manifest."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

TOOL_VERSION = "0.1.0"


def format_cell(v) -> str:
    """Deterministic text for a table cell; floats use ``repr``."""
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return repr(v)
    if hasattr(v, "item") and not isinstance(v, (str, bytes)):
        return format_cell(v.item())
    if v is None:
        return ""
    return str(v)


def write_csv(path: str | Path, header: Sequence[str], rows: Iterable[Sequence]) -> str:
    """Write with ``'.'`` decimals, LF line ends and a header row; return the sha256."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(list(header))
        for r in rows:
            if len(r) != len(header):
                raise ValueError(f"row has {len(r)} cells, header {len(header)}")
            w.writerow([format_cell(c) for c in r])
    return file_sha256(path)


def read_csv(path: str | Path) -> tuple[list[str], list[list[str]]]:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


@dataclass
class RunManifest:
    experiment: str
    config: dict
    config_hash: str
    master_seed: int
    seeds: dict = field(default_factory=dict)
    table_hashes: dict = field(default_factory=dict)
    wall_clock_s: float = 0.0
    exit_status: int = 0
    invariant_failures: list = field(default_factory=list)
    checks: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    tool_version: str = TOOL_VERSION

    @property
    def attestation(self) -> str:
        """Hash over all emitted tables, independent of host and wall clock."""
        h = hashlib.sha256()
        for name in sorted(self.table_hashes):
            h.update(f"{name}:{self.table_hashes[name]}\n".encode())
        return h.hexdigest()

    @property
    def provenance(self) -> str:
        return f"msalab-{self.tool_version}+{self.experiment}.{self.config_hash[:12]}.seed{self.master_seed}"

    def to_json(self) -> str:
        doc = {
            "experiment": self.experiment,
            "tool_version": self.tool_version,
            "provenance": self.provenance,
            "config_hash": self.config_hash,
            "config": self.config,
            "master_seed": self.master_seed,
            "seeds": self.seeds,
            "table_hashes": self.table_hashes,
            "determinism_attestation": self.attestation,
            "wall_clock_s": self.wall_clock_s,
            "exit_status": self.exit_status,
            "invariant_failures": self.invariant_failures,
            "checks": self.checks,
            "notes": self.notes,
        }
        return json.dumps(doc, indent=2, sort_keys=False, default=_json_default) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_text(self.to_json(), encoding="utf-8", newline="\n")


def _json_default(o):
    if hasattr(o, "item"):
        return o.item()
    if hasattr(o, "tolist"):
        return o.tolist()
    if isinstance(o, (set, frozenset, tuple)):
        return list(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")
