import dataclasses
import json

import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats as sps

from msalab.harness import cli
from msalab.harness.cli import EXIT_INVARIANT, EXIT_OK, EXIT_REFUSED, build_parser, main, resolve_config
from msalab.harness.config import KINDS, ConfigError, ExperimentConfig, parse_pairs
from msalab.harness.experiments import ExperimentResult, Table
from msalab.harness.io import RunManifest, file_sha256, format_cell, read_csv, write_csv
from msalab.harness.stats import wilson_interval

# ------------------------------------------------------------------ Wilson


def test_wilson_against_clopper_pearson():
    _, hi = wilson_interval(0, 100)
    cp_hi = sps.beta.ppf(0.975, 1, 100)
    assert cp_hi == pytest.approx(0.0362, abs=1e-4)
    assert abs(hi - cp_hi) < 0.002


def test_wilson_symmetric_and_clamped():
    lo, hi = wilson_interval(50, 100)
    assert abs((lo + hi) / 2 - 0.5) < 1e-6
    assert wilson_interval(100, 100)[1] == 1.0


# ------------------------------------------------------------------ config

configs = st.builds(
    ExperimentConfig,
    experiment=st.sampled_from(KINDS),
    N=st.one_of(st.none(), st.integers(3, 4)),
    n=st.integers(1, 3),
    d=st.integers(1, 3),
    L0=st.integers(3, 50),
    L_list=st.lists(st.integers(1, 200), min_size=1, max_size=4, unique=True).map(lambda v: tuple(sorted(v))),
    r0=st.integers(0, 8),
    u0=st.floats(0, 10),
    dist_scale=st.floats(0, 100),
    h=st.sampled_from(["1", "1/2", "1/4"]),
    p=st.one_of(st.none(), st.floats(0.5, 100)),
    gamma_base=st.floats(0.01, 1.0),
    E_star=st.one_of(st.none(), st.floats(-5, 5)),
    s=st.floats(0, 3.9),
    trials=st.integers(1, 10**6),
    master_seed=st.integers(0, 2**64 - 1),
    strict=st.booleans(),
    out=st.text("abcxyz/_-", min_size=1, max_size=12),
)


@settings(max_examples=200)
@given(configs)
def test_config_round_trip(cfg):
    cfg.validate()
    back = ExperimentConfig.from_text(cfg.to_text())
    assert back == cfg
    assert back.digest() == cfg.digest()


def test_validation_lists_every_bad_key():
    with pytest.raises(ConfigError) as exc:
        ExperimentConfig.from_mapping({"n": "7", "d": "0", "gamma_base": "2", "bogus": "1", "trials": "x"})
    keys = {e.split(":")[0] for e in exc.value.errors}
    assert {"n", "d", "gamma_base", "bogus", "trials"} <= keys


def test_parse_pairs_comments_and_duplicates():
    assert parse_pairs("a = 1  # note\n\n# skip\nb=2\n") == {"a": "1", "b": "2"}
    with pytest.raises(ConfigError):
        parse_pairs("a = 1\na = 2\n")
    with pytest.raises(ConfigError):
        parse_pairs("just words\n")


def test_window_and_N_defaults():
    cfg = ExperimentConfig(n=2)
    assert cfg.total_N == 2 and cfg.window is None
    with pytest.raises(ConfigError):
        ExperimentConfig(E_lo=0.0).validate()
    assert ExperimentConfig(E_lo=0.0, E_hi=1.0).window == (0.0, 1.0)


def test_digest_ignores_output_location():
    a = ExperimentConfig(out="a", workers=1)
    b = ExperimentConfig(out="b", workers=4)
    assert a.digest() == b.digest()
    assert a.digest() != dataclasses.replace(a, master_seed=1).digest()


def test_flags_override_file_and_env(tmp_path):
    f = tmp_path / "c.cfg"
    f.write_text("trials = 5\nmaster_seed = 9\nn = 2\n")
    args = build_parser().parse_args(["wegner", "--config", str(f), "--trials", "7", "--set", "r0=2"])
    cfg = resolve_config(args, env={"MSA_LAB_WORKERS": "3"})
    assert (cfg.trials, cfg.master_seed, cfg.n, cfg.r0, cfg.workers) == (7, 9, 2, 2, 3)
    args = build_parser().parse_args(["wegner", "--workers", "2"])
    assert resolve_config(args, env={"MSA_LAB_WORKERS": "3"}).workers == 2


# ---------------------------------------------------------------------- io


def test_csv_format_is_locale_free(tmp_path):
    p = tmp_path / "t.csv"
    h = write_csv(p, ("a", "b", "c", "d"), [(0.1, float("nan"), True, None), (1, float("-inf"), False, "x")])
    raw = p.read_bytes()
    assert raw == b"a,b,c,d\n0.1,nan,true,\n1,-inf,false,x\n"
    assert h == file_sha256(p)
    assert read_csv(p)[0] == ["a", "b", "c", "d"]
    with pytest.raises(ValueError):
        write_csv(p, ("a",), [(1, 2)])
    assert format_cell(1e-300) == "1e-300"


def test_manifest_attestation_depends_only_on_tables():
    a = RunManifest("x", {}, "h" * 64, 0, table_hashes={"t.csv": "1"}, wall_clock_s=1.0)
    b = RunManifest("x", {}, "h" * 64, 0, table_hashes={"t.csv": "1"}, wall_clock_s=9.0)
    assert a.attestation == b.attestation
    doc = json.loads(a.to_json())
    assert doc["provenance"] == "msalab-0.1.0+x.hhhhhhhhhhhh.seed0"
    assert doc["determinism_attestation"] == a.attestation


# --------------------------------------------------------------------- CLI


def run_cli(tmp_path, *argv):
    out = tmp_path / "out"
    return main(list(argv) + ["--out", str(out)]), out


def test_geometry_selftest_exit_zero(tmp_path):
    status, out = run_cli(tmp_path, "geometry-selftest", "--set", "n=2", "--set", "L_max=3")
    assert status == EXIT_OK
    man = json.loads((out / "manifest.json").read_text())
    assert man["exit_status"] == 0 and man["invariant_failures"] == []
    header, rows = read_csv(out / "table_lemmas.csv")
    assert header[:3] == ["lemma", "n", "d"]
    assert all(r[header.index("counterexamples")] == "0" for r in rows)
    assert {r[header.index("L")] for r in rows} == {"1", "2", "3"}


def test_msa_run_over_cap_is_refused(tmp_path):
    status, out = run_cli(tmp_path, "msa-run", "--set", "N=2", "--set", "n=2", "--set", "dim_cap=1000")
    assert status == EXIT_REFUSED
    header, rows = read_csv(out / "table_sizing.csv")
    assert "dim" in header and any(int(r[header.index("dim")]) > 1000 for r in rows)
    assert json.loads((out / "manifest.json").read_text())["exit_status"] == 2


def test_invalid_config_exit_two(tmp_path, capsys):
    status, _ = run_cli(tmp_path, "wegner", "--set", "n=9", "--set", "d=0")
    assert status == EXIT_REFUSED
    err = capsys.readouterr().err
    assert "n:" in err and "d:" in err


def test_invariant_failure_exit_one(tmp_path, monkeypatch):
    def broken(cfg):
        return ExperimentResult(tables={"x": Table(("a",), [(1,)])}, invariant_failures=["planted"])

    monkeypatch.setitem(cli.EXPERIMENTS, "wegner", broken)
    status, out = run_cli(tmp_path, "wegner")
    assert status == EXIT_INVARIANT
    assert json.loads((out / "manifest.json").read_text())["invariant_failures"] == ["planted"]


@pytest.mark.parametrize("argv", [
    ("wegner", "--trials", "6", "--set", "L_list=9,16"),
    ("ct-check", "--trials", "4"),
    ("initial-scale", "--trials", "6", "--set", "L_list=16,25"),
    ("msa-run", "--trials", "3", "--set", "k_max=1"),
    ("decay-profile", "--trials", "2", "--set", "box_half_side=32", "--set", "dist_scale=20"),
    ("dynamical", "--trials", "2", "--set", "box_half_side=24", "--set", "dist_scale=20"),
])
def test_reruns_are_byte_identical(tmp_path, argv):
    s1, o1 = run_cli(tmp_path / "a", *argv, "--seed", "11")
    s2, o2 = run_cli(tmp_path / "b", *argv, "--seed", "11", "--workers", "2")
    assert s1 == s2 == EXIT_OK
    tabs = sorted(p.name for p in o1.glob("table_*.csv"))
    assert tabs and tabs == sorted(p.name for p in o2.glob("table_*.csv"))
    for name in tabs:
        assert (o1 / name).read_bytes() == (o2 / name).read_bytes()
    m1 = json.loads((o1 / "manifest.json").read_text())
    m2 = json.loads((o2 / "manifest.json").read_text())
    assert m1["determinism_attestation"] == m2["determinism_attestation"]
    assert m1["config_hash"] == m2["config_hash"]
    assert m1["seeds"] == m2["seeds"]
