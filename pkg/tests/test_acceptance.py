"""Acceptance suite: one recorded PASS/FAIL line per criterion (or sub-criterion)."""

import math
import time

import mpmath
import numpy as np
import pytest

from lyapcert import gauge as gg
from lyapcert.certificate import chain_bound, classical_completion, linear_rate_from, q_map, time_map
from lyapcert.checker import PASS_VACUOUS, certify
from lyapcert.cli import main
from lyapcert.discretize import run_contraction
from lyapcert.examples import (P_CAP, REFERENCE_P, Example42Params, OddPower, build_example41, build_example42,
                               example41_system, example42_system, feasible_p, limit_lhs, maximize_p)
from lyapcert.fields import squared_norm
from lyapcert.sampling import Sampling
from lyapcert.simulate import integrate
from lyapcert.system import UncertainSystem, sample_signal

C1, C2, LAM = 2.8594, 2.6094, 0.9999
P42 = Example42Params(REFERENCE_P, C1, C2, LAM)
TOL = 1e-9


def ball_points(n, count, radius, seed):
    rng = np.random.default_rng(seed)
    u = rng.normal(size=(count, n))
    u /= np.linalg.norm(u, axis=1, keepdims=True)
    return u * radius * rng.random((count, 1)) ** (1.0 / n)


# -- 1. Example 4.2 reproduction ----------------------------------------------------------------

def test_c1_limit_form_oracle(record):
    mpmath.mp.dps = 40
    c1, c2, p2 = mpmath.mpf("2.8594"), mpmath.mpf("2.6094"), mpmath.mpf(7) / 125
    S = mpmath.sqrt(c1 * (3 + p2 - c1))
    oracle = float(3 * (c1 - c2) * (3 - c1) / (c2 * (3 - c1) + 2 * S))
    lhs = limit_lhs(REFERENCE_P, C1, C2)
    ok = abs(lhs - oracle) <= 1e-6 and lhs - REFERENCE_P**2 >= 4e-4
    assert record("1a", "closed-form feasibility value vs 40-digit oracle (tol 1e-6), margin >= 4e-4", ok,
                  f"lhs={lhs:.10f} oracle={oracle:.10f} margin={lhs - REFERENCE_P**2:.3e}")


def test_c1_limit_form_stated_value(record):
    lhs = limit_lhs(REFERENCE_P, C1, C2)
    ok = abs(lhs - 0.056497) <= 1e-6
    assert record("1b", "closed-form feasibility value equals the stated 0.056497 within 1e-6", ok,
                  f"lhs={lhs:.10f} diff={lhs - 0.056497:.3e}")


def test_c1_finite_lambda_margin(record):
    f = feasible_p(REFERENCE_P, C1, C2, LAM)
    ok = f.feasible and f.margin >= 1e-4
    assert record("1c", "finite-lambda feasibility form at lambda=0.9999 exceeds p^2 by >= 1e-4", ok,
                  f"lhs={f.lhs:.8f} margin={f.margin:.3e}")


def test_c1_certify_urges(record):
    t0 = time.perf_counter()
    v = certify(example42_system(REFERENCE_P), build_example42(P42), Sampling())
    dt = time.perf_counter() - t0
    ok = v.conclusion == "URGES" and dt < 5.0
    assert record("1d", "certify Example 4.2 reference point -> URGES in < 5 s", ok,
                  f"conclusion={v.conclusion} route={v.route} time={dt:.2f}s")


# -- 2. Example 4.2 hard cap --------------------------------------------------------------------

def test_c2_certify_p075_fails(record):
    p = 0.75
    params = Example42Params(p, C1, C2, LAM)
    v = certify(example42_system(p), build_example42(params, strict=False), Sampling())
    e = v.report.entry("4.12")
    ok = (v.conclusion != "URGES" and v.conclusion != "URGAS" and e.status == "FAIL"
          and params.window_lower > 3.0 and v.exit_code == 1)
    assert record("2a", "certify at p=0.75 fails with the (4.12) window empty", ok,
                  f"conclusion={v.conclusion} window_lower={params.window_lower:.5f} 4.12={e.status}")


def test_c2_maximize_default(record):
    t0 = time.perf_counter()
    res = maximize_p()
    dt = time.perf_counter() - t0
    ok = 0.232 <= res.p_best < P_CAP and dt < 60.0
    assert record("2b", "default maximize_p: 0.232 <= p_best < sqrt(9-6 sqrt 2) in < 60 s", ok,
                  f"p_best={res.p_best:.6f} cap={P_CAP:.6f} time={dt:.2f}s")


def test_c2_maximize_never_exceeds_cap(record):
    rng = np.random.default_rng(0)
    worst = 0.0
    for _ in range(6):
        a, b = np.sort(rng.uniform(0.1, 3.0, 2))
        c, d = np.sort(rng.uniform(0.1, 3.0, 2))
        lo = rng.uniform(0.05, 0.99)
        res = maximize_p((a, b), (c, d), (lo, 1.0), resolution=8, iters=30)
        worst = max(worst, res.p_best)
    wide = maximize_p((0.01, 3.0), (0.01, 3.0), (0.01, 1.0), resolution=16)
    worst = max(worst, wide.p_best)
    ok = worst < P_CAP
    assert record("2c", "maximize_p never returns p >= sqrt(9-6 sqrt 2)", ok,
                  f"largest p_best={worst:.6f} cap={P_CAP:.6f}")


# -- 3. Example 4.1 end-to-end ------------------------------------------------------------------

@pytest.fixture(scope="module")
def ex41():
    cert = build_example41(OddPower(), 1.0, 0.5, 0.5)
    return example41_system(1.0), cert


THM31 = ("3.1", "3.2", "3.3[i=0]", "3.4", "3.5", "3.6", "3.7", "3.8", "3.9")


def test_c3_conditions_pass(record, ex41):
    system, cert = ex41
    v = certify(system, cert, Sampling(density=10_000))
    entries = [v.report.entry(c) for c in THM31 if c in v.report]
    ok = all(e.passed for e in entries) and len(entries) == 8 and v.conclusion == "URGAS"
    detail = " ".join(f"{e.condition}:{e.status}" for e in entries) + " (3.2 absent: k=0)"
    assert record("3a", "Example 4.1 passes (3.1)-(3.9) on a 1e4-sample grid", ok, detail)


def test_c3_margins_positive(record, ex41):
    system, cert = ex41
    v = certify(system, cert, Sampling(density=10_000))
    entries = [v.report.entry(c) for c in THM31 if c in v.report]
    bad = [f"{e.condition}={e.margin!r}" for e in entries if not (e.margin is not None and e.margin > 0)]
    assert record("3b", "Example 4.1 margins of (3.1)-(3.9) all strictly positive", not bad,
                  "nonpositive: " + (", ".join(bad) if bad else "none"))


def test_c3_monte_carlo(record, ex41):
    system, cert = ex41
    t0 = time.perf_counter()
    T, q = time_map(cert), q_map(cert)
    x0s = ball_points(2, 100, 10.0, seed=41)
    runs = []
    for k, x0 in enumerate(x0s):
        sig = sample_signal(system, 400.0, 1.0, "vertices", seed=1000 + k)
        runs.append(run_contraction(system, cert.V, T, q, x0, sig, 10, TOL, run_id=k))
    contract = all(r.ok and all(b <= 0.5 * a for a, b in zip(r.Vs, r.Vs[1:])) for r in runs)
    lin = linear_rate_from(cert, 0.5, 2.0)
    verdict = certify(system, lin, Sampling(density=2000))
    M, sigma = verdict.constants["M"], verdict.constants["sigma"]
    worst = 0.0
    for r in runs:
        tr = integrate(system, r.x0, r.signal, r.taus[-1], TOL)
        t = np.linspace(0.0, r.taus[-1], 2001)
        nx = np.linalg.norm(tr.at(t), axis=1)
        n0 = float(np.linalg.norm(r.x0))
        if n0 > 0:
            worst = max(worst, float(np.max(nx / (M * np.exp(-sigma * t) * n0))))
    dt = time.perf_counter() - t0
    ok = contract and worst <= 1.0 and verdict.conclusion == "URGES" and dt < 60.0
    assert record("3c", "100 runs x 10 steps satisfy V_{i+1} <= lambda V_i; exponential envelope holds; < 60 s",
                  ok, f"contraction={contract} max |x|/(M e^-st |x0|)={worst:.3e} M={M:.3e} "
                      f"sigma={sigma:.4e} time={dt:.1f}s")


# -- 4. property (P) ---------------------------------------------------------------------------

@pytest.mark.parametrize("name,q", [
    ("s/2", gg.linear(0.5, tag="K")),
    ("s^2/(1+s)", gg.from_function(lambda s: s * s / (1.0 + s), tag="K")),
    ("min(s,1)/4", gg.from_function(lambda s: np.minimum(s, 1.0) / 4.0, tag="pd")),
])
def test_c4_property_p(record, name, q):
    count, length = 100_000, 60
    rng = np.random.default_rng(abs(hash(name)) % 2**32)
    sigma = gg.kl_from_contraction(q)
    V0 = 10.0 ** rng.uniform(-6, 6, count)
    V = V0.copy()
    violations = 0
    exponents = rng.choice([0.0, 0.0, 1.0, 4.0], size=count)
    for i in range(length):
        violations += int(np.count_nonzero(V > sigma(V0, np.full(count, i))))
        V = (V - q(V)) * rng.random(count) ** exponents
    assert record(f"4[{name}]", "KL bound majorizes 1e5 random admissible sequences", violations == 0,
                  f"violations={violations} sequences={count} length={length}")


# -- 5. chain bound conformance ----------------------------------------------------------------

def test_c5_chain_bound(record):
    system = example42_system(REFERENCE_P)
    cert = build_example42(P42)
    W0, W1 = cert.chain
    rng = np.random.default_rng(5)
    segments, nodes, worst = 0, 0, -np.inf
    y0 = P42.sector
    attempt = 0
    while segments < 60 and attempt < 500:
        attempt += 1
        theta = rng.uniform(-math.atan(y0), math.atan(y0)) + (math.pi if rng.random() < 0.5 else 0.0)
        x0 = np.array([math.cos(theta), math.sin(theta)]) * rng.uniform(0.5, 3.0)
        V0 = float(cert.V(x0))
        sig = sample_signal(system, 5.0, 0.05, "vertices", seed=attempt)

        def leave(y, V0=V0):
            return max(float(cert.c2 * cert.V(y) - W0(y)), float(LAM * V0 - cert.V(y)))

        tr = integrate(system, x0, sig, 5.0, TOL, stop=leave)
        t = np.concatenate([tr.times, np.linspace(tr.t0, tr.t_end, 400)])
        t = np.unique(t)
        X = tr.at(t)
        inside = (np.asarray(W0.fn(X)) >= cert.c2 * np.asarray(cert.V.fn(X))) & \
                 (np.asarray(cert.V.fn(X)) > LAM * V0)
        cut = np.argmin(inside) if not np.all(inside) else len(t)
        if cut < 2:
            continue
        t, X = t[:cut], X[:cut]
        bound = chain_bound([W0(x0), W1(x0)], cert.g * LAM * V0, t)
        excess = np.asarray(W0.fn(X)) - bound
        worst = max(worst, float(np.max(excess)))
        segments += 1
        nodes += len(t)
    ok = segments >= 50 and worst <= 10 * TOL
    assert record("5", "W0(x(t)) <= chain bound + 10 tol along >= 50 Example 4.2 segments", ok,
                  f"segments={segments} nodes={nodes} max excess={worst:.3e}")


# -- 6. classical degeneracy -----------------------------------------------------------------------

def test_c6_classical(record):
    system = UncertainSystem(1, lambda d, x: -x, ((0.0, 0.0),), name="decay")
    v = certify(system, classical_completion(squared_norm(1), gg.linear(2.0)), Sampling())
    region = [e for e in v.report.entries if e.condition.split("[")[0] in ("3.2", "3.3", "3.4", "3.5")]
    ok = v.conclusion == "URGAS" and region and all(e.status == PASS_VACUOUS for e in region)
    assert record("6", "x' = -x with auto-completed classical certificate -> URGAS, region conditions vacuous",
                  ok, f"conclusion={v.conclusion} " + " ".join(f"{e.condition}:{e.status}" for e in region))


# -- 7. cross-module consistency ---------------------------------------------------------------

def _fixtures():
    out = []
    dec = UncertainSystem(1, lambda d, x: -(1.0 + d) * x, ((0.0, 1.0),), name="decay-box")
    out.append(("remark36", dec, classical_completion(squared_norm(1), gg.linear(2.0)), 2.0))
    out.append(("ex41-linear", example41_system(1.0), build_example41(OddPower(), 1.0, 0.5, 0.5), 10.0))
    cubic = OddPower(1.0, 3.0)
    out.append(("ex41-cubic", example41_system(0.5, cubic), build_example41(cubic, 0.5, 0.5, 0.5), 3.0))
    out.append(("ex42-reference", example42_system(REFERENCE_P), build_example42(P42), 10.0))
    out.append(("ex42-p0", example42_system(0.0), build_example42(Example42Params(0.0, 2.9, 2.7, 0.999)), 10.0))
    return out


@pytest.mark.parametrize("name,system,cert,radius", _fixtures(), ids=[f[0] for f in _fixtures()])
def test_c7_cross_module(record, name, system, cert, radius):
    v = certify(system, cert, Sampling(density=4000, level_range=(1e-3, 1e2)))
    T, q = time_map(cert), q_map(cert)
    failures = 0
    x0s = ball_points(system.n, 100, radius, seed=7)
    for k, x0 in enumerate(x0s):
        Tk = float(T(x0))
        sig = sample_signal(system, min(10 * Tk, 2e4), 1.0, "vertices", seed=k)
        run = run_contraction(system, cert.V, T, q, x0, sig, 10, TOL, run_id=k)
        failures += 0 if run.ok else 1
    ok = v.conclusion in ("URGAS", "URGES") and failures == 0
    assert record(f"7[{name}]", "certified fixture passes run_contraction on 100 Monte Carlo runs", ok,
                  f"conclusion={v.conclusion} failed runs={failures}")


# -- 8. numerical hygiene ----------------------------------------------------------------------

def test_c8_semigroup(record):
    worst = 0.0
    for k, (system, x0) in enumerate([(example42_system(REFERENCE_P), [2.0, -1.0]),
                                      (example41_system(1.0), [3.0, 4.0]),
                                      (example41_system(0.5, OddPower(1.0, 3.0)), [1.0, -2.0])]):
        sig = sample_signal(system, 8.0, 0.3, "mixed", seed=k)
        full = integrate(system, x0, sig, 8.0, TOL)
        for tau in (0.7, 2.9, 5.1):
            rest = integrate(system, full.at(tau), sig.shift(tau), 8.0 - tau, TOL)
            t = np.linspace(tau, 8.0, 300)
            scale = max(1.0, float(np.max(np.abs(full.states))))
            worst = max(worst, float(np.max(np.abs(rest.at(t - tau) - full.at(t)))) / scale)
    assert record("8a", "semigroup re-simulation agrees within 10 tol", worst <= 10 * TOL,
                  f"max scaled difference={worst:.3e} limit={10 * TOL:.1e}")


def test_c8_inverse_identity(record):
    gauges = [gg.linear(3.0), gg.power(2.0, 2.0), gg.power_sum([(1.0, 1.0), (1.0, 3.0)]),
              gg.pwl([(0, 0), (1, 2), (2, 5)]), gg.compose(gg.power(1.0, 2.0), gg.linear(0.5)),
              gg.inverse_gauge(gg.power_sum([(1.0, 1.0), (0.5, 2.0)])),
              gg.from_function(lambda s: s / (1.0 + s) + s, tag="Kinf"),
              OddPower(1.0, 3.0).b0_gauge(0.7)]
    s = 10.0 ** np.random.default_rng(8).uniform(-4, 4, 1000)
    worst = max(float(np.max(np.abs(gg.invert(g, g(s)) - s) / s)) for g in gauges)
    assert record("8b", "invert(evaluate(s)) = s to 1e-9 relative", worst <= 1e-9, f"max rel error={worst:.3e}")


def test_c8_byte_identical(record, tmp_path, capsys):
    cmds = [["certify", "example42", "p=0.236643", "c1=2.8594", "c2=2.6094", "lambda=0.9999"],
            ["certify", "example41", "p=1", "c1=0.5", "lambda=0.5", "density=3000"],
            ["simulate", "example41", "p=1", "runs=5", "seed=3"],
            ["discretize", "example41", "p=1", "c1=0.5", "lambda=0.5", "runs=5", "steps=4", "seed=3"],
            ["optimize", "resolution=8"]]
    same = True
    for j, cmd in enumerate(cmds):
        dirs = [tmp_path / f"{j}_{rep}" for rep in range(2)]
        for d in dirs:
            main([*cmd, "--out", str(d)])
        files = sorted(p.name for p in dirs[0].iterdir())
        same &= files == sorted(p.name for p in dirs[1].iterdir()) and bool(files)
        same &= all((dirs[0] / f).read_bytes() == (dirs[1] / f).read_bytes() for f in files)
    capsys.readouterr()
    assert record("8c", "repeated seeded runs produce byte-identical outputs", same, f"commands={len(cmds)}")
