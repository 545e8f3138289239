"""Simulation-side verification of the discretised contraction property.

From ``x0`` one integrates over ``[0, T(x_i)]``, advances to a time ``t_i``
where ``V`` has dropped to ``V_i - q(V_i)`` and repeats from there with the
shifted disturbance.  The resulting level sequence is compared with the KL
bound built from ``q``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import gauge as gg
from .errors import ConfigurationError, ConstructionError, DivergenceError, RangeError
from .fields import ScalarField
from .gauge import Gauge, KLBound
from .sampling import directions, radius_for_level
from .simulate import first_crossing, integrate, min_on_trajectory
from .system import DisturbanceSignal, UncertainSystem


@dataclass
class ContractionRun:
    x0: np.ndarray
    signal: DisturbanceSignal
    taus: list[float] = field(default_factory=list)   # tau_0 .. tau_m
    xs: list[np.ndarray] = field(default_factory=list)
    Vs: list[float] = field(default_factory=list)
    ts: list[float] = field(default_factory=list)     # t_0 .. t_{m-1}
    Ts: list[float] = field(default_factory=list)
    passed: list[bool] = field(default_factory=list)  # contraction of step i
    sup_V: list[float] = field(default_factory=list)
    bounded: list[bool | None] = field(default_factory=list)
    status: str = "OK"
    failed_step: int | None = None
    run_id: int = 0

    @property
    def ok(self) -> bool:
        return self.status == "OK" and all(self.passed) and all(b is not False for b in self.bounded)

    def check_invariants(self, atol: float = 1e-12) -> bool:
        for i, t in enumerate(self.ts):
            if not (-atol <= t <= self.Ts[i] + atol):
                return False
            if abs(self.taus[i + 1] - (self.taus[i] + t)) > atol * max(1.0, self.taus[i + 1]):
                return False
        return True

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["i", "tau_i", "t_i", "T_i", "V_i", "pass"])
        for i, V in enumerate(self.Vs):
            if i < len(self.ts):
                w.writerow([i, repr(self.taus[i]), repr(self.ts[i]), repr(self.Ts[i]), repr(V),
                            int(self.passed[i])])
            else:
                w.writerow([i, repr(self.taus[i]), "", "", repr(V), ""])
        return buf.getvalue()


def run_contraction(system: UncertainSystem, V: ScalarField, T: Callable, q: Gauge, x0,
                    signal: DisturbanceSignal, steps: int, tol: float = 1e-9,
                    a: Gauge | None = None, run_id: int = 0, advance: str = "first") -> ContractionRun:
    """Build the sequence ``x_{i+1} = x(t_i, x_i; P_{tau_i} d)``.

    With ``advance="first"`` (default) ``t_i`` is the first time in
    ``[0, T(x_i)]`` with ``V <= V_i - q(V_i)``, falling back to the minimiser
    of ``V`` when no such time exists.  ``advance="min"`` always uses the
    minimiser over the whole window.  With ``a`` supplied, each step also
    records whether ``sup V <= a(V_i)`` on ``[0, t_i]``.
    """
    if steps < 1:
        raise ConfigurationError("steps must be at least 1")
    if advance not in ("first", "min"):
        raise ConfigurationError(f"unknown advance rule {advance!r}")
    x = np.array(x0, dtype=float)
    run = ContractionRun(x.copy(), signal, run_id=run_id)
    tau = 0.0
    run.taus.append(tau)
    run.xs.append(x.copy())
    run.Vs.append(float(V(x)))
    for i in range(steps):
        Vi = run.Vs[-1]
        Ti = float(T(x))
        if not (Ti > 0 and math.isfinite(Ti)):
            raise ConfigurationError(f"T(x_{i}) = {Ti!r} is not a positive finite time")
        run.Ts.append(Ti)
        if Vi == 0.0:
            ti, x_next, V_next, supV = 0.0, x.copy(), 0.0, 0.0
        else:
            target = Vi - float(q(Vi))
            margin = lambda y, target=target: target - np.asarray(V.fn(y), dtype=float)
            try:
                traj = integrate(system, x, signal.shift(tau), Ti, tol,
                                 stop=None if advance == "min" else (lambda y: float(margin(y))))
            except DivergenceError:
                run.status = "FAILED-DIVERGED"
                run.failed_step = i
                run.Ts.pop()
                return run
            tc = first_crossing(traj, margin) if advance == "first" else None
            if tc is None:
                ti, _ = min_on_trajectory(traj, V.fn, (0.0, traj.t_end))
            else:
                ti = tc
            x_next = traj.at(ti)
            V_next = float(V(x_next))
            if ti > 0:
                _, neg = min_on_trajectory(traj, lambda y: -np.asarray(V.fn(y)), (0.0, ti))
                supV = max(-neg, float(np.max(V.fn(traj.states[traj.times <= ti]))))
            else:
                supV = Vi
        ok = V_next <= Vi - float(q(Vi))
        run.ts.append(float(ti))
        run.passed.append(bool(ok))
        run.sup_V.append(float(supV))
        run.bounded.append(None if a is None else bool(supV <= float(a(Vi)) * (1 + 1e-12)))
        tau = tau + float(ti)
        x = np.asarray(x_next, dtype=float)
        run.taus.append(tau)
        run.xs.append(x.copy())
        run.Vs.append(V_next)
        if not ok and run.status == "OK":
            run.status = "FAILED-CONTRACTION"
            run.failed_step = i
    return run


# -- decay envelope ----------------------------------------------------------------

@dataclass
class EnvelopeReport:
    max_ratio: float
    kl_violations: list[tuple[int, int]]
    step_violations: list[tuple[int, int]]
    runs: int

    @property
    def violations(self) -> list[tuple[int, int]]:
        return sorted(set(self.kl_violations) | set(self.step_violations))

    @property
    def passed(self) -> bool:
        return not self.violations

    def summary(self) -> str:
        return (f"runs={self.runs} max_ratio={self.max_ratio!r} "
                f"violations={len(self.violations)} passed={self.passed}")


def decay_envelope(runs, q: Gauge, sigma: KLBound | None = None) -> tuple[KLBound, EnvelopeReport]:
    """KL bound from ``q`` and the conformance of every ``(run, index)``.

    ``runs`` may hold :class:`ContractionRun` objects or plain level sequences.
    Violations are indexed by the later level: ``(run, i)`` flags ``V_i``.
    """
    runs = list(runs)
    if not runs:
        raise ConfigurationError("decay_envelope needs at least one run")
    sigma = gg.kl_from_contraction(q) if sigma is None else sigma
    max_ratio = 0.0
    kl_bad, step_bad = [], []
    for rid, run in enumerate(runs):
        Vs = np.asarray(run.Vs if hasattr(run, "Vs") else run, dtype=float)
        idx = np.arange(len(Vs))
        bound = np.asarray(sigma(np.full(len(Vs), Vs[0]), idx), dtype=float)
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(bound > 0, Vs / np.where(bound > 0, bound, 1.0), np.where(Vs > 0, np.inf, 0.0))
        max_ratio = max(max_ratio, float(np.max(ratio)))
        for i in np.nonzero(Vs > bound * (1 + 1e-12))[0]:
            kl_bad.append((rid, int(i)))
        if len(Vs) > 1:
            lim = Vs[:-1] - np.asarray(q(Vs[:-1]), dtype=float)
            for i in np.nonzero(Vs[1:] > lim + 1e-15 * np.abs(Vs[:-1]))[0]:
                step_bad.append((rid, int(i) + 1))
    return sigma, EnvelopeReport(max_ratio, kl_bad, step_bad, len(runs))


# -- attractivity time and exponential constants -----------------------------------------

def attractivity_estimate(V: ScalarField, a: Gauge, q: Gauge | None, T: Callable, eps: float, R: float,
                          n: int, sigma: KLBound | None = None, samples: int = 512,
                          seed: int = 0, max_steps: int = 100_000) -> float:
    """``N_eps(R) * T~_eps(R)``: time after which ``V <= eps`` from ``|x0| <= R``."""
    if eps <= 0 or R < 0:
        raise ConfigurationError("need eps > 0 and R >= 0")
    if sigma is None:
        if q is None:
            raise ConfigurationError("either q or sigma is required")
        sigma = gg.kl_from_contraction(q)
    dirs = directions(n, samples, seed)
    radii = R * np.linspace(0.0, 1.0, 9)[1:]
    B = max(float(np.max(V.fn(rad * dirs))) for rad in radii) if R > 0 else 0.0
    target = gg.invert(a, eps)
    if B <= target:
        return 0.0
    N = None
    for i in range(max_steps + 1):
        if float(sigma(B, i)) <= target * (1.0 + 1e-12):
            N = i
            break
    if N is None:
        raise RangeError(f"KL bound does not reach a^-1(eps) within {max_steps} steps")
    if N == 0:
        return 0.0
    levels = np.linspace(target, target + B, 17)
    Tsup = 0.0
    for s in levels:
        if s <= 0:
            continue
        pts = radius_for_level(V, dirs, s)[:, None] * dirs
        Tsup = max(Tsup, max(float(T(x)) for x in pts))
    return float(N * Tsup)


def exponential_constants(M_a: float, r: float, q_frac: float, K1: float, K2: float) -> tuple[float, float]:
    """``(M, sigma)`` with ``|x(t)| <= M exp(-sigma t) |x0|``.

    ``sigma_raw = -ln(1 - q_frac)/2``, rate ``sigma_raw / r`` and amplitude
    ``exp(sigma_raw) * sqrt(K2 * M_a / K1)``.
    """
    if not (0 < K1 < K2):
        raise ConfigurationError("need 0 < K1 < K2")
    if not (0 < q_frac < 1):
        raise ConfigurationError("q_frac must lie in (0, 1)")
    if not (M_a >= 1):
        raise ConfigurationError("M_a must be at least 1")
    if not (r > 0):
        raise ConfigurationError("r must be positive")
    sigma_raw = -math.log1p(-q_frac) / 2.0
    return math.exp(sigma_raw) * math.sqrt(K2 * M_a / K1), sigma_raw / r


# -- converse data -----------------------------------------------------------------------

def converse_data(sigma: KLBound, a1: Gauge, a2: Gauge, q_frac: float, levels=None,
                  tol: float = 1e-10):
    """``a(s) = a2(sigma(a1^-1(s), 0))`` and ``T(s) = t(s) + 1``.

    ``t(s)`` solves ``a2(sigma(a1^-1(s), t)) = (1 - q_frac) s``.  A bound that
    is not strictly decreasing in ``t`` is repaired with ``+ s exp(-t)``.
    Returns ``(a, T, bounded)`` where ``bounded`` reports the grid check of
    ``T`` on ``levels``.
    """
    if not (0 < q_frac < 1):
        raise ConfigurationError("q_frac must lie in (0, 1)")
    probe_s = np.geomspace(1e-3, 1e3, 13)
    probe_t = np.linspace(0.0, 20.0, 41)
    tab = np.asarray(sigma(probe_s[:, None], probe_t[None, :]), dtype=float)
    if np.any(np.diff(tab, axis=1) >= 0):
        base = sigma
        sigma = KLBound(lambda s, t: np.asarray(base.rule(s, t)) + s * np.exp(-t),
                        provenance=base.provenance + "+strict")

    def a_fn(s):
        s = np.asarray(s, dtype=float)
        return np.asarray(a2(np.asarray(sigma(gg.invert(a1, s), np.zeros_like(s)))), dtype=float)

    a = gg.from_function(a_fn, tag="K", name="converse_a")

    def h(s, t):
        return float(a2(float(sigma(float(gg.invert(a1, s)), t)))) - (1.0 - q_frac) * s

    def t_of(s: float) -> float:
        if s == 0.0:
            return 0.0
        if h(s, 0.0) <= 0:
            return 0.0
        hi = 1.0
        while h(s, hi) > 0:
            hi *= 2.0
            if hi > 2.0**60:
                raise ConstructionError(f"no bracket for t at level s={s:.6g} (residual {h(s, hi):.3e})")
        lo = 0.0
        while hi - lo > tol:
            mid = 0.5 * (lo + hi)
            if h(s, mid) > 0:
                lo = mid
            else:
                hi = mid
        return hi

    def T_fn(s):
        s = np.asarray(s, dtype=float)
        flat = [1.0 if v == 0 else t_of(float(v)) + 1.0 for v in s.reshape(-1)]
        return np.asarray(flat).reshape(s.shape)

    from .certificate import LevelMap
    T = LevelMap(T_fn, name="converse_T")
    grid = np.geomspace(1e-3, 1e3, 25) if levels is None else np.asarray(levels, dtype=float)
    Tv = T(grid)
    bounded = bool(np.all(np.isfinite(Tv)))
    return a, T, bounded


# -- time rescaling -------------------------------------------------------------------

@dataclass
class RescaleReport:
    max_error: float
    tolerance: float
    passed: bool


def rescale_check(system: UncertainSystem, phi, x0, signal: DisturbanceSignal, horizon: float,
                  tol: float = 1e-9) -> RescaleReport:
    """Compare ``x(t)`` with ``y(theta(t))``, ``theta(t) = int_0^t phi(x)``.

    ``y`` solves ``y' = f(d, y) / phi(y)`` driven by the time-changed signal.
    """
    from .system import rescaled
    n = system.n
    phi_fn = phi.fn if hasattr(phi, "fn") else phi

    def aug(d, z):
        x = z[..., :n]
        return np.concatenate([system.f(d, x), np.asarray(phi_fn(x), dtype=float)[..., None]], axis=-1)

    big = UncertainSystem(n + 1, aug, system.box, system.affine_in_d, system.hypotheses, name="augmented")
    z0 = np.concatenate([np.asarray(x0, dtype=float), [0.0]])
    trx = integrate(big, z0, signal, horizon, tol)
    theta = trx.states[:, n]
    if np.any(np.diff(theta) <= 0):
        raise ConfigurationError("phi must be positive along the trajectory")
    bp = signal.breakpoints[signal.breakpoints < horizon]
    bp_theta = np.interp(bp, trx.times, theta)
    for j, t in enumerate(bp):
        if t > 0:
            bp_theta[j] = float(trx.at(t)[n])
    ysig = DisturbanceSignal(bp_theta, signal.values[: len(bp)], signal.seed, signal.strategy)
    ys = rescaled(system, phi_fn)
    try_ = integrate(ys, np.asarray(x0, dtype=float), ysig, float(theta[-1]), tol)
    yv = try_.at(theta)
    err = np.abs(yv - trx.states[:, :n]) / np.maximum(1.0, np.abs(trx.states[:, :n]))
    max_err = float(np.max(err))
    return RescaleReport(max_err, 10 * tol, max_err <= 10 * tol)
