import math

import numpy as np
import pytest

from lyapcert.errors import DivergenceError, RangeError
from lyapcert.examples import OddPower, example41_system, example42_system
from lyapcert.simulate import first_crossing, integrate, min_on_trajectory
from lyapcert.system import DisturbanceSignal, UncertainSystem, sample_signal


def decay():
    return UncertainSystem(1, lambda d, x: -x, ((0.0, 0.0),), name="decay")


NONE = DisturbanceSignal.constant([0.0])


def test_exponential_decay():
    tr = integrate(decay(), [1.0], NONE, 1.0)
    assert tr.at(1.0)[0] == pytest.approx(math.exp(-1), abs=1e-6)
    assert abs(tr.at(1.0)[0] - math.exp(-1)) < 1e-8


def test_example41_zero_beta_decoupled():
    s = example41_system(1.0, OddPower(0.0, 1.0))
    sig = sample_signal(s, 1.0, 0.1, "vertices", seed=0)
    x = integrate(s, [1.0, 1.0], sig, 1.0).at(1.0)
    assert np.allclose(x, math.exp(-1), atol=1e-6)


def test_equilibrium_invariance():
    s = example42_system(0.5)
    sig = sample_signal(s, 5.0, 0.3, "uniform", seed=1)
    tr = integrate(s, [0.0, 0.0], sig, 5.0)
    assert np.all(tr.states == 0.0)


def test_dense_output_accuracy_and_range():
    s = example42_system(0.0)
    tr = integrate(s, [1.0, 0.0], DisturbanceSignal.constant([0.0]), 3.0, tol=1e-10)
    t = np.linspace(0, 3, 301)
    exact = np.exp(-t) * (1 + t)   # critically damped: x1 = (1 + t) e^-t
    assert np.max(np.abs(tr.at(t)[:, 0] - exact)) < 1e-8
    with pytest.raises(RangeError):
        tr.at(3.5)


def test_min_on_trajectory_examples():
    tr = integrate(decay(), [1.0], NONE, 1.0)
    t, v = min_on_trajectory(tr, lambda x: x[..., 0] ** 2, (0.0, 1.0))
    assert t == pytest.approx(1.0) and v == pytest.approx(math.exp(-2), rel=1e-7)
    zero = integrate(decay(), [0.0], NONE, 1.0)
    assert min_on_trajectory(zero, lambda x: x[..., 0] ** 2) == (0.0, 0.0)
    with pytest.raises(RangeError):
        min_on_trajectory(tr, lambda x: x[..., 0] ** 2, (0.0, 2.0))


def test_min_on_damped_oscillator_against_dense_scan():
    osc = UncertainSystem(2, lambda d, x: np.stack([x[..., 1], -4 * x[..., 0] - 0.3 * x[..., 1]], -1),
                          ((0.0, 0.0),))
    tr = integrate(osc, [1.0, 0.0], DisturbanceSignal.constant([0.0]), 3.0, tol=1e-11)
    V = lambda x: x[..., 0] ** 2
    t, v = min_on_trajectory(tr, V, (0.0, 1.5))
    grid = np.linspace(0, 1.5, 10**6)
    brute = np.min(V(tr.at(grid)))
    assert abs(v - brute) < 1e-8
    nodes = tr.states[tr.times <= 1.5]
    assert v <= np.min(V(nodes))


def test_first_crossing_examples():
    tr = integrate(decay(), [1.0], NONE, 1.0)
    t = first_crossing(tr, lambda x: 0.5 - x[..., 0] ** 2)
    assert t == pytest.approx(math.log(2) / 2, abs=1e-6)
    assert first_crossing(tr, lambda x: 2.0 - x[..., 0] ** 2) == 0.0
    assert first_crossing(tr, lambda x: 0.01 - x[..., 0] ** 2) is None


def test_semigroup_restart():
    s = example42_system(0.2)
    sig = sample_signal(s, 6.0, 0.37, "vertices", seed=4)
    tol = 1e-9
    full = integrate(s, [2.0, -1.0], sig, 6.0, tol)
    tau = 2.2
    rest = integrate(s, full.at(tau), sig.shift(tau), 6.0 - tau, tol)
    t = np.linspace(tau, 6.0, 200)
    diff = np.abs(rest.at(t - tau) - full.at(t))
    assert np.max(diff) <= 10 * tol * max(1.0, np.max(np.abs(full.states)))


def test_tolerance_refinement():
    ref = integrate(decay(), [1.0], NONE, 5.0, tol=1e-13).at(5.0)[0]
    e1 = abs(integrate(decay(), [1.0], NONE, 5.0, tol=1e-6).at(5.0)[0] - ref)
    e2 = abs(integrate(decay(), [1.0], NONE, 5.0, tol=5e-7).at(5.0)[0] - ref)
    assert e2 <= e1


def test_blowup_raises_divergence():
    blow = UncertainSystem(1, lambda d, x: x ** 2, ((0.0, 0.0),))
    with pytest.raises(DivergenceError) as info:
        integrate(blow, [1.0], NONE, 2.0)
    assert info.value.t_last < 1.0 + 1e-6


def test_csv_columns_and_determinism():
    s = example42_system(0.3)
    sig = sample_signal(s, 2.0, 0.5, "vertices", seed=9)
    a = integrate(s, [1.0, 1.0], sig, 2.0).to_csv(lambda x: x[..., 0] ** 2 + x[..., 1] ** 2)
    b = integrate(s, [1.0, 1.0], sig, 2.0).to_csv(lambda x: x[..., 0] ** 2 + x[..., 1] ** 2)
    assert a == b
    assert a.splitlines()[0] == "t,x_1,x_2,d_1,V"
