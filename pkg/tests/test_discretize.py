import math

import numpy as np
import pytest

from lyapcert import gauge as gg
from lyapcert.certificate import q_map, time_map
from lyapcert.discretize import (attractivity_estimate, converse_data, decay_envelope, exponential_constants,
                                 rescale_check, run_contraction)
from lyapcert.errors import ConfigurationError
from lyapcert.examples import OddPower, build_example41, example41_system
from lyapcert.fields import ScalarField, squared_norm
from lyapcert.simulate import integrate
from lyapcert.system import DisturbanceSignal, UncertainSystem, sample_signal

HALF = gg.linear(0.5, tag="K")


def decay(n=1):
    return UncertainSystem(n, lambda d, x: -x, ((0.0, 0.0),), name="decay")


NONE = DisturbanceSignal.constant([0.0])


@pytest.fixture(scope="module")
def ex41():
    cert = build_example41(OddPower(), 1.0, 0.5, 0.5)
    return example41_system(1.0), cert


@pytest.fixture(scope="module")
def ex41_runs(ex41):
    system, cert = ex41
    T, q = time_map(cert), q_map(cert)
    rng = np.random.default_rng(3)
    runs = []
    for k in range(12):
        u = rng.normal(size=2)
        x0 = u / np.linalg.norm(u) * 10 * rng.random() ** 0.5
        sig = sample_signal(system, 400.0, 1.0, "vertices", seed=k)
        runs.append(run_contraction(system, cert.V, T, q, x0, sig, 10, run_id=k))
    return runs


def test_decay_minimising_step():
    run = run_contraction(decay(), squared_norm(1), lambda x: 1.0, HALF, [2.0], NONE, 3, advance="min")
    assert run.Vs[1] == pytest.approx(math.exp(-2) * 4.0, rel=1e-7)
    assert all(run.passed) and run.ok
    assert run.check_invariants()


def test_decay_first_step():
    run = run_contraction(decay(), squared_norm(1), lambda x: 1.0, HALF, [2.0], NONE, 3)
    assert run.ts[0] == pytest.approx(math.log(2) / 2, abs=1e-8)
    assert run.Vs[1] <= 2.0


def test_zero_initial_state():
    run = run_contraction(decay(), squared_norm(1), lambda x: 1.0, HALF, [0.0], NONE, 5)
    assert run.Vs == [0.0] * 6 and all(run.passed)


def test_bad_arguments():
    with pytest.raises(ConfigurationError):
        run_contraction(decay(), squared_norm(1), lambda x: 1.0, HALF, [1.0], NONE, 0)
    with pytest.raises(ConfigurationError):
        run_contraction(decay(), squared_norm(1), lambda x: 1.0, HALF, [1.0], NONE, 1, advance="late")


def test_failed_contraction_is_reported():
    grow = UncertainSystem(1, lambda d, x: 0.1 * x, ((0.0, 0.0),))
    run = run_contraction(grow, squared_norm(1), lambda x: 1.0, HALF, [1.0], NONE, 2)
    assert run.status == "FAILED-CONTRACTION" and run.failed_step == 0 and not run.ok


def test_diverged_run_is_reported():
    blow = UncertainSystem(1, lambda d, x: x**3, ((0.0, 0.0),))
    run = run_contraction(blow, squared_norm(1), lambda x: 5.0, HALF, [2.0], NONE, 2)
    assert run.status == "FAILED-DIVERGED" and run.failed_step == 0


def test_overshoot_bound_flag():
    run = run_contraction(decay(), squared_norm(1), lambda x: 1.0, HALF, [1.0], NONE, 2, a=gg.linear(1.0))
    assert run.bounded == [True, True]


def test_example41_runs_contract(ex41_runs):
    for run in ex41_runs:
        assert run.ok and run.check_invariants()
        V = np.array(run.Vs)
        assert np.all(V[1:] <= 0.5 * V[:-1])


def test_semigroup_resimulation(ex41, ex41_runs):
    system, _ = ex41
    tol = 1e-9
    for run in ex41_runs[:4]:
        tr = integrate(system, run.x0, run.signal, run.taus[-1], tol)
        for tau, x in zip(run.taus[1:], run.xs[1:]):
            err = np.max(np.abs(tr.at(tau) - x))
            assert err <= 10 * tol * max(1.0, np.max(np.abs(run.x0)))


def test_decay_envelope_conformance(ex41, ex41_runs):
    _, cert = ex41
    sigma, rep = decay_envelope(ex41_runs, q_map(cert))
    assert rep.passed and rep.max_ratio <= 1.0
    for run in ex41_runs:
        assert all(b <= a for a, b in zip(run.Vs, run.Vs[1:]))


def test_decay_envelope_zero_and_injected_fault():
    _, rep = decay_envelope([[0.0, 0.0, 0.0]], HALF)
    assert rep.passed
    seq = [8.0, 4.0, 2.0, 1.9, 0.5]
    _, rep = decay_envelope([seq], HALF)
    assert rep.step_violations == [(0, 3)]
    assert (0, 3) in rep.violations


def test_attractivity_closed_form():
    sigma = gg.KLBound(lambda s, i: s * np.power(2.0, -i))
    R = 2.0
    T = attractivity_estimate(squared_norm(2), gg.IDENTITY, None, lambda x: 1.0, R * R / 8, R, 2, sigma=sigma)
    assert T == pytest.approx(3.0)
    assert attractivity_estimate(squared_norm(2), gg.IDENTITY, None, lambda x: 1.0, 5.0, R, 2, sigma=sigma) == 0.0


def test_attractivity_example41(ex41):
    system, cert = ex41
    eps, R = 0.5, 10.0
    That = attractivity_estimate(cert.V, gg.IDENTITY, q_map(cert), time_map(cert), eps, R, 2, samples=64)
    assert math.isfinite(That) and That > 0
    rng = np.random.default_rng(11)
    for k in range(100):
        u = rng.normal(size=2)
        x0 = u / np.linalg.norm(u) * R * rng.random() ** 0.5
        sig = sample_signal(system, That, 1.0, "vertices", seed=100 + k)
        tr = integrate(system, x0, sig, That, stop=lambda y: eps - float(cert.V(y)))
        assert float(cert.V(tr.states[-1])) <= eps


def test_exponential_constants():
    M, s = exponential_constants(1.0, 1.0, 0.75, 0.5, 2.0)
    assert s == pytest.approx(math.log(2))
    assert M == pytest.approx(2.0 * 2.0)
    M, s = exponential_constants(1.0, 1.0, 1e-12, 1.0 - 1e-12, 1.0)
    assert 1.0 < M < 1.0 + 1e-9 and 0 < s < 1e-11
    with pytest.raises(ConfigurationError):
        exponential_constants(1.0, 1.0, 0.5, 2.0, 1.0)


def test_converse_data_closed_form():
    sigma = gg.KLBound(lambda s, t: s * np.exp(-t))
    a, T, bounded = converse_data(sigma, gg.IDENTITY, gg.IDENTITY, 0.5)
    assert bounded
    assert np.allclose(T(np.array([0.01, 1.0, 50.0])), math.log(2) + 1.0, atol=1e-9)
    assert a(3.0) == pytest.approx(3.0)
    _, T0, _ = converse_data(sigma, gg.IDENTITY, gg.IDENTITY, 1e-9)
    assert 1.0 < T0(1.0) < 1.0 + 1e-8


def test_converse_from_decay_envelope(ex41, ex41_runs):
    _, cert = ex41
    sigma, _ = decay_envelope(ex41_runs, q_map(cert))
    _, T, bounded = converse_data(sigma.continuous(), gg.IDENTITY, gg.IDENTITY, 0.5,
                                  levels=np.geomspace(1e-3, 1e3, 13))
    assert bounded
    assert np.all(np.isfinite(T(np.geomspace(1e-3, 1e3, 13))))


def test_rescale_unit_and_double():
    one = ScalarField(lambda x: np.ones(np.shape(x)[:-1]))
    rep = rescale_check(decay(), one, [1.0], NONE, 2.0)
    assert rep.passed and rep.max_error <= rep.tolerance
    two = ScalarField(lambda x: 2.0 * np.ones(np.shape(x)[:-1]))
    rep = rescale_check(decay(), two, [1.0], NONE, 2.0)
    assert rep.passed


def test_rescale_example41(ex41):
    system, _ = ex41
    phi = ScalarField(lambda x: 1.0 + x[..., 0] ** 2)
    rng = np.random.default_rng(2)
    for k in range(10):
        sig = sample_signal(system, 5.0, 0.5, "vertices", seed=k)
        rep = rescale_check(system, phi, rng.normal(size=2) * 2, sig, 5.0)
        assert rep.passed, rep
