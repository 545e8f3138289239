"""Adaptive Runge-Kutta integration under piecewise-constant disturbances.

Dormand-Prince 5(4) with embedded error control.  Integration restarts at
every signal breakpoint so a jump in ``d`` never falls inside a step.  The
stage derivatives of each accepted step are kept, which gives a fourth-order
continuous extension for dense output.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .errors import DivergenceError, RangeError
from .system import DisturbanceSignal, UncertainSystem

# Butcher tableau
_C = np.array([0.0, 1 / 5, 3 / 10, 4 / 5, 8 / 9, 1.0, 1.0])
_A = [
    [],
    [1 / 5],
    [3 / 40, 9 / 40],
    [44 / 45, -56 / 15, 32 / 9],
    [19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729],
    [9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656],
    [35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84],
]
_B = np.array([35 / 384, 0.0, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84, 0.0])
_E = np.array([-71 / 57600, 0.0, 71 / 16695, -71 / 1920, 17253 / 339200, -22 / 525, 1 / 40])
# continuous extension: y(t0 + th*h) = y0 + h * K' P [th, th^2, th^3, th^4]
_P = np.array([
    [1, -8048581381 / 2820520608, 8663915743 / 2820520608, -12715105075 / 11282082432],
    [0, 0, 0, 0],
    [0, 131558114200 / 32700410799, -68118460800 / 10900136933, 87487479700 / 32700410799],
    [0, -1754552775 / 470086768, 14199869525 / 1410260304, -10690763975 / 1880347072],
    [0, 127303824393 / 49829197408, -318862633887 / 49829197408, 701980252875 / 199316789632],
    [0, -282668133 / 205662961, 2019193451 / 616988883, -1453857185 / 822651844],
    [0, 40617522 / 29380423, -110615467 / 29380423, 69997945 / 29380423],
])

BLOWUP = 1e15


@dataclass(frozen=True)
class Trajectory:
    times: np.ndarray
    states: np.ndarray
    signal: DisturbanceSignal
    tol: float
    stages: np.ndarray  # (m-1, 7, n) stage derivatives per interval
    steps: np.ndarray   # (m-1,) step lengths

    @property
    def t0(self) -> float:
        return float(self.times[0])

    @property
    def t_end(self) -> float:
        return float(self.times[-1])

    @property
    def n(self) -> int:
        return self.states.shape[1]

    def at(self, t) -> np.ndarray:
        """State at time(s) ``t``; exact at stored nodes."""
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        span = self.t_end - self.t0
        if np.any(ts < self.t0 - 1e-12 * max(1.0, span)) or np.any(ts > self.t_end + 1e-12 * max(1.0, span)):
            raise RangeError(f"time outside trajectory range [{self.t0}, {self.t_end}]")
        ts = np.clip(ts, self.t0, self.t_end)
        if len(self.times) == 1:
            out = np.repeat(self.states[:1], len(ts), axis=0)
        else:
            j = np.clip(np.searchsorted(self.times, ts, side="right") - 1, 0, len(self.times) - 2)
            h = self.steps[j]
            th = (ts - self.times[j]) / h
            Q = _P @ np.vstack([th, th**2, th**3, th**4])  # (7, p)
            out = self.states[j] + h[:, None] * np.einsum("pkn,kp->pn", self.stages[j], Q)
            node = np.searchsorted(self.times, ts)
            node = np.clip(node, 0, len(self.times) - 1)
            hit = self.times[node] == ts
            out[hit] = self.states[node[hit]]
        return out[0] if np.ndim(t) == 0 else out

    def disturbance_at(self, t) -> np.ndarray:
        ts = np.atleast_1d(np.asarray(t, dtype=float))
        return np.array([self.signal.at(s) for s in ts])

    def write_csv(self, fh, V=None) -> None:
        n = self.n
        l = self.signal.values.shape[1]
        header = ["t"] + [f"x_{i + 1}" for i in range(n)] + [f"d_{i + 1}" for i in range(l)]
        if V is not None:
            header.append("V")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        vals = None if V is None else np.asarray(V(self.states))
        for k, t in enumerate(self.times):
            row = [repr(float(t))] + [repr(float(v)) for v in self.states[k]]
            row += [repr(float(v)) for v in self.signal.at(t)]
            if vals is not None:
                row.append(repr(float(vals[k])))
            w.writerow(row)

    def to_csv(self, V=None) -> str:
        buf = io.StringIO()
        self.write_csv(buf, V)
        return buf.getvalue()


def _initial_step(fun, y0, f0, rtol, atol, span):
    sc = atol + rtol * np.abs(y0)
    d0 = np.sqrt(np.mean((y0 / sc) ** 2))
    d1 = np.sqrt(np.mean((f0 / sc) ** 2))
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = y0 + h0 * f0
    d2 = np.sqrt(np.mean(((fun(y1) - f0) / sc) ** 2)) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100 * h0, h1, span)


def integrate(system: UncertainSystem, x0, signal: DisturbanceSignal, horizon: float,
              tol: float = 1e-9, *, atol: float | None = None,
              stop: Callable[[np.ndarray], float] | None = None,
              max_steps: int = 2_000_000) -> Trajectory:
    """Integrate ``x' = f(d(t), x)`` on ``[0, horizon]``.

    ``stop`` (optional) ends the integration at the first accepted node where
    ``stop(x) >= 0``; the crossing then lies in the last stored interval.
    Step-size underflow or state blow-up raises :class:`DivergenceError`.
    """
    if horizon <= 0 or tol <= 0:
        raise ValueError("horizon and tol must be positive")
    rtol = tol
    atol = tol if atol is None else atol
    y = np.array(x0, dtype=float)
    if y.shape != (system.n,):
        raise ValueError(f"x0 must have shape ({system.n},)")
    scale0 = 1.0 + float(np.max(np.abs(y)))
    times = [0.0]
    states = [y.copy()]
    stages: list[np.ndarray] = []
    steps: list[float] = []
    count = 0
    h = None
    if stop is not None and stop(y) >= 0:
        return _pack(times, states, stages, steps, signal, tol, system.n)

    for a, b, d in signal.segments(0.0, horizon):
        fun = lambda x, d=d: system.f(d, x)
        t = a
        f = fun(y)
        if h is None:
            h = _initial_step(fun, y, f, rtol, atol, b - a)
        while t < b:
            hmin = 1e-14 * max(1.0, abs(t))
            if h < hmin:
                raise DivergenceError(f"step size underflow at t={t:.6g}", t, y.copy())
            last = t + h >= b - 1e-13 * max(1.0, abs(b))
            hh = b - t if last else h
            K = np.empty((7, system.n))
            K[0] = f
            for s in range(1, 7):
                K[s] = fun(y + hh * (np.asarray(_A[s]) @ K[:s]))
            y_new = y + hh * (_B[:6] @ K[:6])
            K[6] = fun(y_new)
            err = hh * (_E @ K)
            sc = atol + rtol * np.maximum(np.abs(y), np.abs(y_new))
            en = float(np.sqrt(np.mean((err / sc) ** 2)))
            if not np.all(np.isfinite(y_new)):
                en = math.inf
            if en <= 1.0:
                t = b if last else t + hh
                y = y_new
                f = K[6]
                times.append(t)
                states.append(y.copy())
                stages.append(K)
                steps.append(hh)
                count += 1
                if float(np.max(np.abs(y))) > BLOWUP * scale0:
                    raise DivergenceError(f"state blow-up at t={t:.6g}", t, y.copy())
                if count > max_steps:
                    raise DivergenceError("maximum number of steps exceeded", t, y.copy())
                if stop is not None and stop(y) >= 0:
                    return _pack(times, states, stages, steps, signal, tol, system.n)
                fac = 5.0 if en == 0 else min(5.0, max(0.2, 0.9 * en ** -0.2))
                if not last:
                    h = hh * fac
            else:
                h = hh * max(0.2, 0.9 * en ** -0.2) if math.isfinite(en) else hh * 0.2
    return _pack(times, states, stages, steps, signal, tol, system.n)


def _pack(times, states, stages, steps, signal, tol, n) -> Trajectory:
    return Trajectory(np.array(times), np.array(states),
                      signal, tol,
                      np.array(stages).reshape(len(stages), 7, n),
                      np.array(steps))


def _golden_min(fn, a, b, tol):
    invphi = (math.sqrt(5) - 1) / 2
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = fn(c), fn(d)
    while b - a > tol:
        if fc <= fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = fn(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = fn(d)
    return (c, fc) if fc <= fd else (d, fd)


def min_on_trajectory(traj: Trajectory, V, window=None, grid: int = 1001) -> tuple[float, float]:
    """Earliest minimiser of ``V`` over ``window`` on the dense output."""
    a, b = (traj.t0, traj.t_end) if window is None else (float(window[0]), float(window[1]))
    span = max(1.0, traj.t_end - traj.t0)
    if a < traj.t0 - 1e-12 * span or b > traj.t_end + 1e-12 * span or a > b:
        raise RangeError(f"window [{a}, {b}] outside trajectory range [{traj.t0}, {traj.t_end}]")
    a, b = max(a, traj.t0), min(b, traj.t_end)
    nodes = traj.times[(traj.times >= a) & (traj.times <= b)]
    ts = np.union1d(np.linspace(a, b, grid), nodes)
    vals = np.asarray(V(traj.at(ts)), dtype=float)
    k = int(np.argmin(vals))
    t_best, v_best = float(ts[k]), float(vals[k])
    lo, hi = ts[max(k - 1, 0)], ts[min(k + 1, len(ts) - 1)]
    if hi > lo:
        t_g, v_g = _golden_min(lambda s: float(V(traj.at(s))), lo, hi, 1e-12 * span)
        if v_g < v_best:
            t_best, v_best = float(t_g), float(v_g)
    return t_best, v_best


def _as_margin(g):
    def margin(x):
        out = g(x)
        if isinstance(out, (bool, np.bool_)) or np.asarray(out).dtype == bool:
            return np.where(np.asarray(out), 1.0, -1.0)
        return np.asarray(out, dtype=float)
    return margin


def first_crossing(traj: Trajectory, predicate, window=None, subdivide: int = 8) -> float | None:
    """Earliest time at which ``predicate(x) >= 0``.

    The predicate should return a continuous margin ``g(x)``; booleans are
    accepted and mapped to +/-1.  The bracket is refined by bisection on the
    dense output down to ``1e-9 * horizon`` and the right end (where the
    predicate holds) is returned.
    """
    g = _as_margin(predicate)
    a, b = (traj.t0, traj.t_end) if window is None else (float(window[0]), float(window[1]))
    if float(g(traj.at(a))) >= 0:
        return a
    nodes = traj.times[(traj.times > a) & (traj.times <= b)]
    edges = np.concatenate([[a], nodes])
    if edges[-1] < b:
        edges = np.append(edges, b)
    if len(edges) < 2:
        return None
    frac = np.linspace(0.0, 1.0, subdivide + 1)[1:]
    ts = (edges[:-1, None] + (edges[1:] - edges[:-1])[:, None] * frac[None, :]).ravel()
    vals = g(traj.at(ts))
    hits = np.nonzero(vals >= 0)[0]
    if hits.size == 0:
        return None
    k = int(hits[0])
    hi = float(ts[k])
    lo = float(ts[k - 1]) if k > 0 else a
    tol_t = 1e-9 * max(traj.t_end - traj.t0, 1e-300)
    while hi - lo > tol_t:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if float(g(traj.at(mid))) >= 0:
            hi = mid
        else:
            lo = mid
    return hi
