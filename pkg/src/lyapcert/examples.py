"""Built-in planar examples and their certificate factories.

``example41``: ``x1' = -x1, x2' = d beta(x1) - x2`` with ``d in [-p, p]``.
``example42``: ``x1' = x2, x2' = -(1 + d) x1 - 2 x2`` with ``d in [0, p]``.
Both use ``V = |x|^2``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize

from . import gauge as gg
from .certificate import GeneralCertificate, LevelMap, LinearRateCertificate, ScalarPremise
from .errors import ConfigurationError, ConstraintError, ConstructionError, DomainError
from .fields import ScalarField, squared_norm, zero_field
from .gauge import SmoothMap
from .system import UncertainSystem

SQRT2 = math.sqrt(2.0)
WINDOW_DEN = 4.0 - 2.0 * SQRT2
P_CAP = math.sqrt(9.0 - 6.0 * SQRT2)
REFERENCE_P = math.sqrt(7.0 / 5.0) / 5.0


# -- example 4.1 -------------------------------------------------------------------------------

@dataclass(frozen=True)
class OddPower:
    """``beta(x) = coeff * sign(x) |x|^exp``; convex on the half line for ``exp >= 1``."""

    coeff: float = 1.0
    exp: float = 1.0

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        return self.coeff * np.sign(x) * np.abs(x) ** self.exp

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.exp == 1.0:
            return np.full_like(x, self.coeff)
        return self.coeff * self.exp * np.abs(x) ** (self.exp - 1.0)

    def b0_gauge(self, p: float) -> gg.Gauge:
        # b0(s) = s + p^2 beta(sqrt(s))^2
        return gg.power_sum([(1.0, 1.0), (p * p * self.coeff**2, self.exp)])


@dataclass(frozen=True)
class ScalarMap:
    """A generic odd scalar map with optional derivative."""

    fn: Callable[[np.ndarray], np.ndarray]
    deriv_fn: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "beta"

    def __call__(self, x):
        return np.asarray(self.fn(np.asarray(x, dtype=float)), dtype=float)

    def deriv(self, x):
        x = np.asarray(x, dtype=float)
        if self.deriv_fn is not None:
            return np.asarray(self.deriv_fn(x), dtype=float) * np.ones_like(x)
        h = 1e-6 * np.maximum(1.0, np.abs(x))
        return (self(x + h) - self(x - h)) / (2 * h)

    def b0_gauge(self, p: float) -> gg.Gauge:
        fn = self.fn
        return gg.from_function(lambda s: s + p * p * np.asarray(fn(np.sqrt(s)), dtype=float) ** 2,
                                tag="Kinf", name="b0")


def example41_system(p: float, beta=None) -> UncertainSystem:
    if p < 0:
        raise ConfigurationError("p must be nonnegative")
    beta = OddPower() if beta is None else beta

    def field_(d, x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack(np.broadcast_arrays(-x1, d[..., 0] * beta(x1) - x2), axis=-1)

    return UncertainSystem(2, field_, ((-float(p), float(p)),), True, frozenset({"H1", "H2", "H4"}),
                           name="example41")


def _check_beta(beta, beta_tilde, probe=np.linspace(0.0, 10.0, 2001)):
    if abs(float(beta(np.asarray(0.0)))) > 1e-12:
        raise ConstructionError("beta(0) must be 0")
    bt = np.asarray(beta_tilde(probe))
    if np.max(np.abs(np.asarray(beta_tilde(-probe)) + bt)) > 1e-9 * max(1.0, float(np.max(np.abs(bt)))):
        raise ConstructionError("beta_tilde is not odd on the sampled grid")
    second = bt[2:] - 2 * bt[1:-1] + bt[:-2]
    if np.any(second < -1e-9 * np.maximum(1.0, np.abs(bt[1:-1]))):
        raise ConstructionError("beta_tilde is not convex on the half line (sampled)")
    if np.any(np.diff(bt) <= 0):
        raise ConstructionError("beta_tilde restricted to the half line is not class K-infinity")
    sym = np.concatenate([-probe[::-1], probe])
    if np.any(np.abs(np.asarray(beta(sym))) > np.asarray(beta_tilde(np.abs(sym))) * (1 + 1e-12) + 1e-12):
        raise ConstructionError("|beta(x)| <= beta_tilde(|x|) fails on the sampled grid")


def build_example41(beta=None, p: float = 1.0, c1: float = 0.5, lam: float = 0.5,
                    beta_tilde=None) -> GeneralCertificate:
    """Certificate with ``k = 0``, ``rho(s) = s``, ``W0 = p^2 beta_tilde(x1)^2`` and
    ``b0(s) = s + p^2 beta_tilde(sqrt(s))^2``."""
    beta = OddPower() if beta is None else beta
    bt = beta if beta_tilde is None else beta_tilde
    if not (0 < c1 < 1):
        raise ConfigurationError("c1 must lie in (0, 1)")
    if not (0 < lam < 1):
        raise ConfigurationError("lambda must lie in (0, 1)")
    if p < 0:
        raise ConfigurationError("p must be nonnegative")
    _check_beta(beta, bt)
    p2 = float(p) ** 2
    V = squared_norm(2)
    if p2 == 0.0:
        W0 = zero_field()
    else:
        W0 = ScalarField(lambda x: p2 * np.asarray(bt(x[..., 0])) ** 2,
                         lambda x: np.stack(np.broadcast_arrays(
                             2 * p2 * np.asarray(bt(x[..., 0])) * np.asarray(bt.deriv(x[..., 0])),
                             np.zeros(np.shape(x)[:-1])), axis=-1),
                         name="p^2 beta~(x1)^2")
    b0 = bt.b0_gauge(float(p))
    lam_g = gg.linear(lam, tag="K")
    c2 = gg.scale(gg.inverse_gauge(b0), c1 * lam * lam)
    g = gg.scale(c2, 2.0)

    def r_fn(s):
        s = np.asarray(s, dtype=float)
        out = np.ones_like(s)
        pos = s > 0
        if np.any(pos):
            out[pos] = 0.5 + np.asarray(b0(s[pos])) / (2.0 * np.asarray(c2(lam * s[pos])))
        return out

    return GeneralCertificate(
        V=V, chain=(W0,), rho=gg.IDENTITY, c1=gg.linear(c1), c2=c2, g=g, lam=lam_g, gamma=b0,
        b=(b0,), r=LevelMap(r_fn, name="1/2 + b0/(2 c2(lambda s))"), mu=SmoothMap.zero(),
        name=f"example41(p={p!r})")


# -- example 4.2 -------------------------------------------------------------------------------

def example42_system(p: float) -> UncertainSystem:
    if p < 0:
        raise ConfigurationError("p must be nonnegative")

    def field_(d, x):
        x1, x2 = x[..., 0], x[..., 1]
        return np.stack(np.broadcast_arrays(x2, -(1.0 + d[..., 0]) * x1 - 2.0 * x2), axis=-1)

    return UncertainSystem(2, field_, ((0.0, float(p)),), True, frozenset({"H1", "H2", "H4"}),
                           name="example42")


def _sector_ratio(y):
    return (1.0 + 2.0 * y - y * y) / (1.0 + y * y)


def _sector_min(lo: float, hi: float) -> float:
    res = optimize.minimize_scalar(_sector_ratio, bounds=(lo, hi), method="bounded",
                                   options={"xatol": 1e-13})
    return float(min(res.fun, _sector_ratio(lo), _sector_ratio(hi)))


@dataclass(frozen=True)
class Example42Params:
    p: float
    c1: float
    c2: float
    lam: float
    mu: float | None = None   # default: the smallest admissible value

    @property
    def a(self) -> float:
        return 3.0 + self.p**2

    @property
    def window_lower(self) -> float:
        return self.a / WINDOW_DEN

    @property
    def sector(self) -> float:
        """``sqrt((3 + p^2 - c2)/c2)``: half-width of ``{W0 >= c2 V}`` in ``x2/x1``."""
        return math.sqrt(max(self.a - self.c2, 0.0) / self.c2)

    @property
    def mu_min(self) -> float:
        if self.c1 > self.a:
            raise DomainError("c1 exceeds 3 + p^2")
        return 2.0 * math.sqrt(self.c1 * (self.a - self.c1)) / (3.0 - self.c1)

    @property
    def mu_value(self) -> float:
        return self.mu_min if self.mu is None else float(self.mu)

    @property
    def g(self) -> float:
        """``2(3+p^2) min (1+2y-y^2)/(1+y^2)`` over ``|y| <= sector``."""
        y0 = self.sector
        return 2.0 * self.a * _sector_min(-y0, y0)

    @property
    def g_tilde(self) -> float:
        y0 = self.sector
        return 2.0 * self.a * _sector_min(0.0, y0)

    @property
    def gamma(self) -> float:
        return self.a * (self.lam + 1.0) ** 2 / (12.0 * self.lam)

    @property
    def b(self) -> tuple[float, float]:
        return (self.a, self.a)

    def window_ok(self) -> bool:
        return self.window_lower < self.c2 < self.c1 < 3.0

    def violations(self) -> list[tuple[str, str]]:
        out = []
        if self.p < 0:
            out.append(("p", "p must be nonnegative"))
        if not self.window_ok():
            out.append(("4.12", f"need (3+p^2)/(4-2 sqrt 2) = {self.window_lower:.6g} < c2 = {self.c2!r} "
                                f"< c1 = {self.c1!r} < 3"
                                + ("; window empty" if self.window_lower >= 3.0 else "")))
        if not (0.0 < self.lam < 1.0):
            out.append(("lambda", "lambda must lie in (0, 1)"))
        if self.c1 <= self.a and self.c1 < 3.0 and self.mu is not None and self.mu < self.mu_min:
            out.append(("4.17", f"mu = {self.mu!r} below 2 sqrt(c1(3+p^2-c1))/(3-c1) = {self.mu_min!r}"))
        return out


def example42_fields(p: float):
    a = 3.0 + p * p
    V = squared_norm(2)
    W0 = ScalarField(lambda x: a * x[..., 0] ** 2,
                     lambda x: np.stack(np.broadcast_arrays(2 * a * x[..., 0], np.zeros(np.shape(x)[:-1])), axis=-1),
                     name="(3+p^2) x1^2")
    W1 = ScalarField(lambda x: 2 * a * x[..., 0] * x[..., 1],
                     lambda x: np.stack([2 * a * x[..., 1], 2 * a * x[..., 0]], axis=-1),
                     name="2(3+p^2) x1 x2")
    return V, W0, W1


def build_example42(params: Example42Params, strict: bool = True, K1: float = 0.5,
                    K2: float = 2.0) -> LinearRateCertificate:
    """Linear-rate certificate with ``k = 1``, ``rho = 3`` and the g-tilde route.

    ``strict`` rejects parameter sets outside the admissible window with a
    :class:`ConstraintError`.  With ``strict=False`` the certificate is built
    anyway (nonpositive sector minima are floored) and the window appears as a
    premise in the check report.
    """
    bad = params.violations()
    if bad and strict:
        cid, msg = bad[0]
        raise ConstraintError(cid, msg)
    if not (0.0 < params.lam < 1.0):
        raise ConstraintError("lambda", "lambda must lie in (0, 1)")
    if params.c1 > params.a or params.c1 >= 3.0 or params.c2 <= 0:
        raise ConstraintError("4.12", f"c1 = {params.c1!r}, c2 = {params.c2!r} outside (0, 3)")
    V, W0, W1 = example42_fields(params.p)
    g = params.g
    note = ""
    if g <= 0:
        g = 1e-9 * 2.0 * params.a
        note = "sector minimum nonpositive; g floored"
    premises = (
        ScalarPremise("4.12", params.window_lower, params.c2, True,
                      "(3+p^2)/(4-2 sqrt 2) < c2" + ("; window empty" if params.window_lower >= 3 else "")),
        ScalarPremise("4.12b", params.c2, params.c1, True, "c2 < c1"),
        ScalarPremise("4.12c", params.c1, 3.0, True, "c1 < rho = 3"),
        ScalarPremise("4.17", params.mu_min, params.mu_value, False, "mu >= 2 sqrt(c1(3+p^2-c1))/(3-c1)"),
    )
    return LinearRateCertificate(
        V=V, chain=(W0, W1), rho=3.0, c1=params.c1, c2=params.c2, g=g, lam=params.lam,
        gamma=params.gamma, b=params.b, r=None, mu=params.mu_value, g_tilde=params.g_tilde,
        K1=K1, K2=K2, premises=premises, name=f"example42(p={params.p!r})" + (f" [{note}]" if note else ""))


@dataclass(frozen=True)
class Feasibility:
    feasible: bool
    margin: float
    lhs: float
    limit_lhs: float
    window_ok: bool

    def __bool__(self):
        return self.feasible


def _S(p, c1):
    inner = c1 * (3.0 + p * p - c1)
    if inner < 0:
        raise DomainError(f"c1 = {c1!r} exceeds 3 + p^2")
    return math.sqrt(inner)


def finite_lambda_lhs(p: float, c1: float, c2: float, lam: float) -> float:
    """``12 lam^2/(lam+1)^2 * R - 3`` with ``R = (c1(3-c1)+2S)/(c2(3-c1)+2S)``."""
    S = _S(p, c1)
    R = (c1 * (3.0 - c1) + 2.0 * S) / (c2 * (3.0 - c1) + 2.0 * S)
    return 12.0 * lam * lam / (lam + 1.0) ** 2 * R - 3.0


def limit_lhs(p: float, c1: float, c2: float) -> float:
    """``3 (c1-c2)(3-c1) / (c2(3-c1) + 2S)``: the ``lam -> 1`` limit."""
    S = _S(p, c1)
    return 3.0 * (c1 - c2) * (3.0 - c1) / (c2 * (3.0 - c1) + 2.0 * S)


def feasible_p(p: float, c1: float, c2: float, lam: float) -> Feasibility:
    lhs = finite_lambda_lhs(p, c1, c2, lam)
    lim = limit_lhs(p, c1, c2)
    a = 3.0 + p * p
    win = a / WINDOW_DEN < c2 < c1 < 3.0 and 0.0 < lam < 1.0
    margin = lhs - p * p
    return Feasibility(bool(win and margin > 0), margin, lhs, lim, win)


# -- maximisation ------------------------------------------------------------------------------

@dataclass
class MaximizeResult:
    p_best: float
    params: Example42Params | None
    margin: float
    frontier: list[tuple[float, float, float, float, float]] = field(default_factory=list)

    def __iter__(self):
        yield self.p_best
        yield self.params


def _unit(n):
    # interior points of (0, 1) clustered toward both ends
    t = (np.arange(n) + 0.5) / n
    return np.unique(np.concatenate([t, 1.0 - np.geomspace(1e-6, 0.5, n // 2 + 1), np.geomspace(1e-6, 0.5, n // 2 + 1)]))


def _margin_vec(p, c1, c2, lam):
    a = 3.0 + p * p
    inner = c1 * (a - c1)
    S = np.sqrt(np.maximum(inner, 0.0))
    R = (c1 * (3.0 - c1) + 2.0 * S) / (c2 * (3.0 - c1) + 2.0 * S)
    m = 12.0 * lam * lam / (lam + 1.0) ** 2 * R - 3.0 - p * p
    ok = (a / WINDOW_DEN < c2) & (c2 < c1) & (c1 < 3.0) & (inner >= 0) & (lam > 0) & (lam < 1)
    return np.where(ok, m, -np.inf)


def _inner_best(p, c1r, c2r, lr, res):
    u = _unit(res)
    lo2 = max(c2r[0], (3.0 + p * p) / WINDOW_DEN)
    hi1 = min(c1r[1], 3.0)

    def span(lo, hi):
        return np.array([lo]) if hi <= lo else lo + (hi - lo) * u

    c1s, c2s, ls = span(c1r[0], hi1), span(lo2, c2r[1]), span(lr[0], lr[1])
    C1, C2, L = np.meshgrid(c1s, c2s, ls, indexing="ij")
    M = _margin_vec(p, C1, C2, L)
    j = int(np.argmax(M))
    best = float(M.flat[j])
    if not math.isfinite(best):
        return best, None
    x = [float(C1.flat[j]), float(C2.flat[j]), float(L.flat[j])]
    bounds = [(c1r[0], hi1), (lo2, c2r[1]), (lr[0], lr[1])]
    phi = (math.sqrt(5) - 1) / 2
    for _ in range(3):
        for k in range(3):
            lo, hi = bounds[k]
            if hi <= lo:
                continue
            w = (hi - lo) / res
            a, b = max(lo, x[k] - w), min(hi, x[k] + w)

            def f(v):
                y = list(x)
                y[k] = v
                return float(_margin_vec(p, *(np.asarray(t) for t in y)))

            for _ in range(80):
                c, d = b - phi * (b - a), a + phi * (b - a)
                if f(c) >= f(d):
                    b = d
                else:
                    a = c
            v = 0.5 * (a + b)
            if f(v) > best:
                best, x[k] = f(v), v
    return best, x


def maximize_p(c1_range=(2.5, 3.0), c2_range=(2.5, 3.0), lam_range=(0.99, 1.0), resolution: int = 24,
               iters: int = 48) -> MaximizeResult:
    """Largest ``p`` for which some ``(c1, c2, lambda)`` in the ranges is feasible.

    Bisection on ``p`` below the hard cap ``sqrt(9 - 6 sqrt 2)``; the inner
    stage is a grid over the three parameters refined by cyclic golden-section
    search.  Deterministic for fixed ``resolution``.
    """
    for name, (lo, hi) in (("c1", c1_range), ("c2", c2_range), ("lambda", lam_range)):
        if not (lo <= hi):
            raise ConfigurationError(f"empty search range for {name}: [{lo}, {hi}]")
    if resolution < 2:
        raise ConfigurationError("resolution must be at least 2")
    frontier = []

    def probe(p):
        m, x = _inner_best(p, c1_range, c2_range, lam_range, resolution)
        if x is not None and m > 0:
            frontier.append((p, x[0], x[1], x[2], m))
        return m, x

    m0, x0 = probe(0.0)
    if x0 is None or not m0 > 0:
        return MaximizeResult(0.0, None, m0, frontier)
    lo, hi = 0.0, P_CAP
    best = (0.0, x0, m0)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        m, x = probe(mid)
        if x is not None and m > 0:
            lo, best = mid, (mid, x, m)
        else:
            hi = mid
    p, x, m = best
    frontier.sort()
    return MaximizeResult(p, Example42Params(p, x[0], x[1], x[2]), m, frontier)


REGISTRY = {"example41": example41_system, "example42": example42_system}
