import pytest

from msalab.model import DiscretizationSpec
from msalab.msa.orchestrator import (
    InfeasibleError,
    OrchestratorConfig,
    induction_orchestrator,
    sizing_report,
    strata,
)
from msalab.msa.schedule import ScaleSchedule


def test_strata():
    assert strata(1) == [(1, "FI-FI")]
    assert strata(2) == [(1, "FI-FI"), (2, "FI-FI"), (2, "PI-PI"), (2, "MI")]


def test_sizing_and_refusal():
    sch = ScaleSchedule(8, 1, 2, 1)
    rows = sizing_report(sch, DiscretizationSpec())
    assert {(r["k"], r["n"]): r["dim"] for r in rows}[(1, 2)] == 47**2
    with pytest.raises(InfeasibleError) as exc:
        induction_orchestrator(sch, OrchestratorConfig(dim_cap=1000))
    assert exc.value.sizing == rows


def test_single_particle_run_explains_every_failure():
    rep = induction_orchestrator(ScaleSchedule(8, 1, 1, 1), OrchestratorConfig(trials=10, E_star=1.5))
    assert [(r.k, r.n, r.pair_type) for r in rep.rows] == [(0, 1, "FI-FI"), (1, 1, "FI-FI")]
    assert rep.rows[1].failures > 0
    for r in rep.rows:
        d = r.diagnostics
        assert d["unexplained"] == 0
        assert r.failures <= d["base"] + d["R"] + d["T"] + d["S"]
    assert rep.invariant_failures() == []


@pytest.mark.slow
def test_two_particle_run_schema():
    rep = induction_orchestrator(ScaleSchedule(8, 1, 2, 1), OrchestratorConfig(trials=1))
    keys = [(r.k, r.n, r.pair_type) for r in rep.rows]
    assert keys == [(k, n, t) for k in (0, 1) for n, t in strata(2)]
    for r in rep.rows:
        assert len(r.row()) == 10
        assert 0 <= r.ci_lo <= r.estimate <= r.ci_hi <= 1
    assert rep.invariant_failures() == []
