"""``msa-lab`` command line.

Exit status: 0 when every invariant holds, 1 on an invariant failure, 2 when
the configuration is invalid or the run is refused as infeasible.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time
from pathlib import Path

from .config import KINDS, ConfigError, ExperimentConfig, parse_pairs
from .experiments import EXPERIMENTS, ExperimentResult, Refusal
from .io import RunManifest, write_csv

EXIT_OK, EXIT_INVARIANT, EXIT_REFUSED = 0, 1, 2
log = logging.getLogger("msalab")


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="msa-lab", description="Multi-particle localization experiments.")
    sub = p.add_subparsers(dest="experiment", required=True, metavar="EXPERIMENT")
    for kind in KINDS:
        sp = sub.add_parser(kind, help=f"run the {kind} experiment")
        sp.add_argument("--config", type=Path, help="flat key = value configuration file")
        sp.add_argument("--seed", type=int, help="master seed (u64)")
        sp.add_argument("--trials", type=int, help="number of trials")
        sp.add_argument("--out", type=str, help="output directory")
        sp.add_argument("--strict", action="store_true", default=None, help="enforce asymptotic thresholds")
        sp.add_argument("--workers", type=int, help="worker processes (env MSA_LAB_WORKERS)")
        sp.add_argument("--set", action="append", default=[], metavar="KEY=VALUE",
                        help="override any configuration key")
        sp.add_argument("-v", "--verbose", action="store_true")
    return p


def resolve_config(args: argparse.Namespace, env=None) -> ExperimentConfig:
    """File, then ``--set`` overrides, then dedicated flags; flags win."""
    env = os.environ if env is None else env
    values: dict = {}
    if args.config is not None:
        values.update(parse_pairs(Path(args.config).read_text(encoding="utf-8")))
    if "workers" not in values and env.get("MSA_LAB_WORKERS"):
        values["workers"] = env["MSA_LAB_WORKERS"]
    for item in args.set:
        if "=" not in item:
            raise ConfigError([f"--set {item!r}: expected KEY=VALUE"])
        k, v = item.split("=", 1)
        values[k.strip()] = v.strip()
    flags = {"master_seed": args.seed, "trials": args.trials, "out": args.out, "strict": args.strict,
             "workers": args.workers}
    values.update({k: v for k, v in flags.items() if v is not None})
    values["experiment"] = args.experiment
    return ExperimentConfig.from_mapping(values)


def emit(cfg: ExperimentConfig, result: ExperimentResult, seconds: float, status: int) -> RunManifest:
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    hashes = {}
    for name, table in result.tables.items():
        hashes[f"table_{name}.csv"] = write_csv(out / f"table_{name}.csv", table.header, table.rows)
    man = RunManifest(cfg.experiment, cfg.to_dict(), cfg.digest(), cfg.master_seed, result.seeds, hashes,
                      round(seconds, 3), status, result.invariant_failures, result.checks, result.notes)
    if result.reports:
        import json

        (out / "reports.json").write_text(json.dumps(result.reports, indent=2) + "\n", encoding="utf-8")
    man.write(out / "manifest.json")
    return man


def run(cfg: ExperimentConfig) -> tuple[int, RunManifest | None]:
    """Dispatch to the experiment and write its artifacts."""
    t0 = time.perf_counter()
    try:
        result = EXPERIMENTS[cfg.experiment](cfg)
    except Refusal as exc:
        result = ExperimentResult(notes=[f"refused: {exc}"])
        if exc.detail:
            from .experiments import Table

            rows = exc.detail
            keys = tuple(rows[0].keys())
            result.tables["sizing"] = Table(keys, [tuple(r[k] for k in keys) for r in rows])
        man = emit(cfg, result, time.perf_counter() - t0, EXIT_REFUSED)
        return EXIT_REFUSED, man
    status = EXIT_INVARIANT if result.invariant_failures else EXIT_OK
    return status, emit(cfg, result, time.perf_counter() - t0, status)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
    except (ConfigError, OSError) as exc:
        errors = exc.errors if isinstance(exc, ConfigError) else [str(exc)]
        for e in errors:
            print(f"config error: {e}", file=sys.stderr)
        return EXIT_REFUSED
    status, man = run(cfg)
    for note in man.notes:
        print(note, file=sys.stderr)
    for f in man.invariant_failures:
        print(f"invariant failure: {f}", file=sys.stderr)
    print(f"{cfg.experiment}: exit {status}; artifacts in {cfg.out}")
    return status


if __name__ == "__main__":
    sys.exit(main())
