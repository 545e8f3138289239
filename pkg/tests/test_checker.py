import numpy as np
import pytest

from lyapcert import gauge as gg
from lyapcert.certificate import classical_completion
from lyapcert.checker import (FAIL, PASS_EXACT, PASS_VACUOUS, SKIPPED, CheckReport, Entry, certify,
                              Verdict, check_pointwise, check_scalar, recheck_witness, tau_max)
from lyapcert.examples import (REFERENCE_P, Example42Params, OddPower, build_example41, build_example42,
                               example41_system, example42_system)
from lyapcert.fields import squared_norm
from lyapcert.sampling import SampleSet, Sampling, sample_states
from lyapcert.system import UncertainSystem

P42 = Example42Params(REFERENCE_P, 2.8594, 2.6094, 0.9999)


def decay():
    return UncertainSystem(1, lambda d, x: -x, ((0.0, 0.0),), name="decay")


@pytest.fixture(scope="module")
def verdict42():
    return certify(example42_system(REFERENCE_P), build_example42(P42), Sampling())


@pytest.fixture(scope="module")
def verdict075():
    p = 0.75
    cert = build_example42(Example42Params(p, 2.8594, 2.6094, 0.9999), strict=False)
    return certify(example42_system(p), cert, Sampling())


def test_remark36_classical():
    v = certify(decay(), classical_completion(squared_norm(1), gg.linear(2.0)), Sampling(density=2000))
    assert v.route == "Remark3.6-auto"
    assert v.conclusion == "URGAS" and v.exit_code == 0
    for cid in ("3.3[i=0]", "3.4", "3.5"):
        assert v.report.entry(cid).status == PASS_VACUOUS
    assert v.report.entry("3.1").passed


def test_example41_pointwise_and_scalar():
    cert = build_example41(OddPower(), 1.0, 0.5, 0.5)
    v = certify(example41_system(1.0), cert, Sampling())
    assert v.route == "Thm3.1" and v.conclusion == "URGAS"
    for cid in ("3.1", "3.3[i=0]", "3.4", "3.5"):
        e = v.report.entry(cid)
        assert e.status == PASS_EXACT and e.margin >= 0
    # (3.6) margin c1 lambda (1 - lambda) s at the smallest level
    assert v.report.entry("3.6").margin == pytest.approx(0.125 * 1e-4, rel=1e-6)
    assert v.report.entry("3.7").passed


def test_example41_cubic_beta():
    beta = OddPower(1.0, 3.0)
    cert = build_example41(beta, 0.5, 0.5, 0.5)
    v = certify(example41_system(0.5, beta), cert, Sampling(density=4000, level_range=(1e-3, 1e2)))
    for cid in ("3.1", "3.3[i=0]", "3.4", "3.5", "3.6", "3.7", "3.8", "3.9"):
        assert v.report.entry(cid).passed, cid
    assert v.conclusion == "URGAS"


def test_example42_urges(verdict42):
    v = verdict42
    assert v.route == "Cor3.10"
    assert v.conclusion == "URGES" and v.exit_code == 0
    assert v.constants["K1"] == 0.5 and v.constants["K2"] == 2.0
    assert v.constants["sigma"] > 0 and v.constants["M"] >= 1
    e = v.report.entry("3.31")
    assert e.values["(c1+mu)lambda"] > e.values["(c2+mu)gamma"]
    assert "3.46" in v.report and v.report.entry("3.46").passed


def test_example42_infeasible_p(verdict075):
    v = verdict075
    assert v.conclusion == "inconclusive" and v.exit_code == 1
    e412 = v.report.entry("4.12")
    assert e412.status == FAIL and e412.witness["lhs"] == pytest.approx(3.5625 / (4 - 2 * np.sqrt(2)))
    e329 = v.report.entry("3.29")
    assert e329.status == FAIL and e329.witness is not None


def test_fail_witness_reevaluates(verdict075):
    p = 0.75
    cert = build_example42(Example42Params(p, 2.8594, 2.6094, 0.9999), strict=False)
    for e in verdict075.report.failures():
        if e.witness and len(e.witness["x"]) == 2:
            slack = recheck_witness(example42_system(p), cert, e)
            assert slack < 0


def test_larger_box_keeps_failures():
    cert = build_example42(Example42Params(0.75, 2.8594, 2.6094, 0.9999), strict=False)
    sampling = Sampling(density=3000)
    samples = sample_states(cert.V, 2, sampling)
    small = check_pointwise(example42_system(0.75), cert, sampling, samples)
    large = check_pointwise(example42_system(0.9), cert, sampling, samples)
    for e in small.entries:
        if e.status == FAIL:
            assert large.entry(e.condition).status == FAIL
            assert large.entry(e.condition).margin <= e.margin


def test_homogeneous_sphere_radii():
    cert = build_example42(P42)
    s = example42_system(REFERENCE_P)
    a = check_pointwise(s, cert, Sampling(density=2000, level_range=(1.0, 1.0)))
    b = check_pointwise(s, cert, Sampling(density=2000, level_range=(100.0, 100.0)))
    assert [(e.condition, e.status) for e in a.entries] == [(e.condition, e.status) for e in b.entries]


def test_skipped_when_region_unsampled():
    cert = build_example42(P42)
    s = example42_system(REFERENCE_P)
    # a single point on the x2 axis never enters the sector {W0 >= c2 V}
    samples = SampleSet(np.array([[0.0, 1.0]]), np.array([1.0]), 1)
    rep = check_pointwise(s, cert, Sampling(), samples)
    assert rep.entry("3.29").status == SKIPPED
    assert rep.entry("3.26").passed
    v = Verdict("Cor3.10", "inconclusive", rep)
    assert v.exit_code == 2


def test_scalar_stage_example42_values():
    rep = check_scalar(build_example42(P42), Sampling(), n=2)
    assert rep.entry("3.32").passed and rep.entry("3.31").passed
    e = rep.entry("3.33")
    assert not e.required


def test_report_sorting_and_csv(verdict42):
    ids = [e.condition for e in verdict42.report.entries]
    assert ids == [e.condition for e in CheckReport(list(reversed(verdict42.report.entries))).sort().entries]
    csv1 = verdict42.report.to_csv()
    v2 = certify(example42_system(REFERENCE_P), build_example42(P42), Sampling())
    assert csv1 == v2.report.to_csv()
    assert csv1.splitlines()[0].startswith("condition,status")


def test_verdict_exit_code_mapping():
    rep = CheckReport([Entry("3.1", SKIPPED)])
    assert Verdict("Thm3.1", "inconclusive", rep).exit_code == 2
    assert Verdict("Thm3.1", "inconclusive", CheckReport([Entry("3.1", FAIL)])).exit_code == 1
    assert Verdict("Thm3.1", "URGAS", CheckReport([])).exit_code == 0


def test_tau_max_against_scan():
    # 1 + 2t + 0.5 t^2/2 - 1.5 t^3/6 on [0, 3]
    B = np.array([[1.0, 2.0, 0.5]])
    G = np.array([1.5])
    r = np.array([3.0])
    val, arg = tau_max(B, G, r)
    t = np.linspace(0, 3, 300_001)
    brute = np.max(1 + 2 * t + 0.25 * t**2 - 1.5 * t**3 / 6)
    assert abs(val[0] - brute) < 1e-9
    assert 0 <= arg[0] <= 3
