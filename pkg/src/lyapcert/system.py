"""Uncertain systems ``x' = f(d, x)`` with a compact box of disturbances.

Vector fields take ``d`` with shape ``(..., l)`` and ``x`` with shape
``(..., n)`` and broadcast; they return an array shaped like ``x``.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .errors import ConfigurationError

HYPOTHESES = frozenset({"H1", "H2", "H3", "H4"})


@dataclass(frozen=True)
class UncertainSystem:
    n: int
    field: Callable[[np.ndarray, np.ndarray], np.ndarray]
    box: tuple[tuple[float, float], ...]
    affine_in_d: bool = True
    hypotheses: frozenset = frozenset({"H1", "H2", "H4"})
    name: str = "system"

    def __post_init__(self):
        if self.n < 1:
            raise ConfigurationError("state dimension must be positive")
        if len(self.box) == 0:
            raise ConfigurationError("disturbance box is empty (H1 needs a nonempty compact D)")
        for lo, hi in self.box:
            if not (math.isfinite(lo) and math.isfinite(hi)) or lo > hi:
                raise ConfigurationError(f"disturbance interval [{lo}, {hi}] is empty or unbounded")
        unknown = set(self.hypotheses) - HYPOTHESES
        if unknown:
            raise ConfigurationError(f"unknown hypotheses {sorted(unknown)}")

    @property
    def l(self) -> int:
        return len(self.box)

    @property
    def lower(self) -> np.ndarray:
        return np.array([lo for lo, _ in self.box], dtype=float)

    @property
    def upper(self) -> np.ndarray:
        return np.array([hi for _, hi in self.box], dtype=float)

    def f(self, d, x) -> np.ndarray:
        return np.asarray(self.field(np.asarray(d, dtype=float), np.asarray(x, dtype=float)), dtype=float)

    def vertices(self) -> np.ndarray:
        """Extreme points of the box; degenerate coordinates contribute once."""
        axes = [sorted({lo, hi}) for lo, hi in self.box]
        return np.array(list(itertools.product(*axes)), dtype=float)

    def contains(self, d, atol: float = 0.0) -> np.ndarray:
        d = np.asarray(d, dtype=float)
        return np.all((d >= self.lower - atol) & (d <= self.upper + atol), axis=-1)

    def probe(self, seed: int = 0, radius: float = 10.0, samples: int = 100) -> dict:
        """Sampled checks of H2 (f(d,0)=0) and, when declared, H4.

        Returns the probe statistics; a violated H2 raises ConfigurationError.
        """
        rng = np.random.default_rng(seed)
        ds = self.lower + (self.upper - self.lower) * rng.random((samples, self.l))
        at_zero = self.f(ds, np.zeros((samples, self.n)))
        h2 = float(np.max(np.abs(at_zero)))
        if h2 > 1e-12:
            raise ConfigurationError(f"H2 violated: |f(d, 0)| = {h2:.3e} for some sampled d")
        out = {"H2_max_abs_f0": h2}
        if "H4" in self.hypotheses:
            x = rng.uniform(-radius, radius, (samples, self.n))
            y = x + rng.normal(scale=1e-3 * radius, size=x.shape)
            num = np.linalg.norm(self.f(ds, x) - self.f(ds, y), axis=-1)
            den = np.linalg.norm(x - y, axis=-1)
            lip = float(np.max(num / den))
            if not math.isfinite(lip):
                raise ConfigurationError("H4 probe produced a non-finite difference quotient")
            out["H4_lipschitz_estimate"] = lip
        return out


def rescaled(system: UncertainSystem, phi) -> UncertainSystem:
    """The time-rescaled system ``x' = f(d, x) / phi(x)``."""

    def fld(d, x):
        return system.f(d, x) / np.asarray(phi(x), dtype=float)[..., None]

    return UncertainSystem(system.n, fld, system.box, system.affine_in_d, system.hypotheses,
                           name=f"{system.name}/phi")


# -- disturbance signals ------------------------------------------------------

@dataclass(frozen=True)
class DisturbanceSignal:
    """Piecewise-constant ``d(t)``; ``values[j]`` holds on ``[breakpoints[j], breakpoints[j+1])``."""

    breakpoints: np.ndarray
    values: np.ndarray
    seed: int | None = None
    strategy: str = "constant"
    horizon: float = math.inf

    def __post_init__(self):
        bp = np.asarray(self.breakpoints, dtype=float)
        vals = np.atleast_2d(np.asarray(self.values, dtype=float))
        if bp.ndim != 1 or len(bp) == 0 or bp[0] != 0.0:
            raise ConfigurationError("signal breakpoints must start at 0")
        if np.any(np.diff(bp) <= 0):
            raise ConfigurationError("signal breakpoints must be strictly increasing")
        if len(vals) != len(bp):
            raise ConfigurationError("one disturbance value per breakpoint is required")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "values", vals)

    @classmethod
    def constant(cls, d) -> "DisturbanceSignal":
        return cls(np.array([0.0]), np.atleast_2d(np.asarray(d, dtype=float)))

    def at(self, t: float) -> np.ndarray:
        j = int(np.searchsorted(self.breakpoints, t, side="right")) - 1
        return self.values[max(j, 0)]

    def shift(self, tau: float) -> "DisturbanceSignal":
        """``(P_tau d)(t) = d(t + tau)``."""
        if tau == 0.0:
            return self
        later = self.breakpoints > tau
        bp = np.concatenate([[0.0], self.breakpoints[later] - tau])
        vals = np.vstack([self.at(tau)[None, :], self.values[later]])
        return DisturbanceSignal(bp, vals, self.seed, self.strategy, self.horizon - tau)

    def segments(self, t0: float, t1: float):
        """Yield ``(a, b, d)`` covering ``[t0, t1]`` with constant ``d``."""
        cuts = self.breakpoints[(self.breakpoints > t0) & (self.breakpoints < t1)]
        edges = np.concatenate([[t0], cuts, [t1]])
        for a, b in zip(edges[:-1], edges[1:]):
            yield float(a), float(b), self.at(a)


def sample_signal(system: UncertainSystem, horizon: float, dwell: float,
                  strategy: str = "vertices", seed: int = 0) -> DisturbanceSignal:
    """Random piecewise-constant signal with segments of length ``dwell``."""
    if horizon <= 0 or dwell <= 0:
        raise ConfigurationError("horizon and dwell must be positive")
    if strategy not in ("vertices", "uniform", "mixed"):
        raise ConfigurationError(f"unknown signal strategy {strategy!r}")
    rng = np.random.default_rng(seed)
    m = int(math.ceil(horizon / dwell))
    bp = dwell * np.arange(m)
    lo, hi = system.lower, system.upper
    vert = np.where(rng.random((m, system.l)) < 0.5, lo, hi)
    unif = lo + (hi - lo) * rng.random((m, system.l))
    if strategy == "vertices":
        vals = vert
    elif strategy == "uniform":
        vals = unif
    else:
        pick = rng.random(m) < 0.5
        vals = np.where(pick[:, None], vert, unif)
    return DisturbanceSignal(bp, vals, seed=seed, strategy=strategy, horizon=float(horizon))


# -- worst-case directional derivatives --------------------------------------

class DirectionalMax(NamedTuple):
    value: np.ndarray | float
    d: np.ndarray
    exact: bool


def max_directional_batch(system: UncertainSystem, gradients, xs) -> DirectionalMax:
    """Row-wise ``max_{d in D} grad . f(d, x)``.

    Fields declared affine in ``d`` are maximised exactly over the vertices of
    the box.  Otherwise a seeded grid plus coordinate golden-section search
    gives a lower bound of the maximum and ``exact`` is False.
    """
    G = np.atleast_2d(np.asarray(gradients, dtype=float))
    X = np.atleast_2d(np.asarray(xs, dtype=float))
    N = X.shape[0]
    verts = system.vertices()
    if system.affine_in_d:
        cands = verts
    else:
        per = max(2, min(17, int(round(4096 ** (1.0 / system.l)))))
        axes = [np.linspace(lo, hi, per) for lo, hi in system.box]
        cands = np.vstack([verts, np.array(list(itertools.product(*axes)))])
    best = np.full(N, -np.inf)
    best_d = np.zeros((N, system.l))
    for d in cands:
        val = np.einsum("ij,ij->i", G, system.f(d, X))
        better = val > best
        best = np.where(better, val, best)
        best_d[better] = d
    if system.affine_in_d:
        return DirectionalMax(best, best_d, True)
    best, best_d = _refine_nonaffine(system, G, X, best, best_d)
    return DirectionalMax(best, best_d, False)


def _refine_nonaffine(system, G, X, best, best_d, sweeps=3, iters=40):
    invphi = (math.sqrt(5) - 1) / 2
    width = (system.upper - system.lower) / 8.0
    for _ in range(sweeps):
        for j in range(system.l):
            a = np.maximum(best_d[:, j] - width[j], system.lower[j])
            b = np.minimum(best_d[:, j] + width[j], system.upper[j])

            def obj(v):
                d = best_d.copy()
                d[:, j] = v
                return np.einsum("ij,ij->i", G, system.f(d, X))

            c = b - invphi * (b - a)
            e = a + invphi * (b - a)
            fc, fe = obj(c), obj(e)
            for _ in range(iters):
                left = fc > fe
                b = np.where(left, e, b)
                a = np.where(left, a, c)
                c_new = b - invphi * (b - a)
                e_new = a + invphi * (b - a)
                c, e = c_new, e_new
                fc, fe = obj(c), obj(e)
            mid = 0.5 * (a + b)
            val = obj(mid)
            better = val > best
            best = np.where(better, val, best)
            best_d[better, j] = mid[better]
    return best, best_d


def max_directional(system: UncertainSystem, gradient, x) -> DirectionalMax:
    """Single-point form of :func:`max_directional_batch`."""
    res = max_directional_batch(system, np.asarray(gradient, dtype=float)[None, :],
                                np.asarray(x, dtype=float)[None, :])
    return DirectionalMax(float(res.value[0]), res.d[0], res.exact)
