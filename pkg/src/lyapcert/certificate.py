"""Stability certificates, region labels and the derived constructive quantities.

Two flavours share one interface:

* :class:`GeneralCertificate` - gauge-valued data for the nonlinear-rate
  conditions (optionally with a time-rescaling ``phi`` or a sharper chain
  decay gauge ``g_tilde``);
* :class:`LinearRateCertificate` - the same data with linear gauges given as
  constants, plus optional quadratic envelope constants ``K1 < K2``.

:meth:`view` turns either flavour into vectorised level maps so checks can be
written once.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate

from . import gauge as gg
from .errors import ConfigurationError, ConstraintError, ConstructionError, QuadratureError
from .fields import ScalarField, zero_field
from .gauge import Gauge, SmoothMap

SINGULAR_GUARD = 1e-14


@dataclass(frozen=True)
class LevelMap:
    """A vectorised map of the level ``s >= 0`` (e.g. the dwell bound ``r``)."""

    fn: Callable[[np.ndarray], np.ndarray]
    name: str = "map"
    constant: float | None = None

    def __call__(self, s):
        arr = np.asarray(s, dtype=float)
        out = np.asarray(self.fn(arr), dtype=float) * np.ones_like(arr)
        return float(out) if arr.ndim == 0 else out

    @classmethod
    def const(cls, c: float) -> "LevelMap":
        c = float(c)
        return cls(lambda s: np.full_like(s, c), name=repr(c), constant=c)


@dataclass(frozen=True)
class ScalarPremise:
    """A named scalar side condition ``lhs < rhs`` (or ``<=``)."""

    id: str
    lhs: float
    rhs: float
    strict: bool = True
    note: str = ""


class GaugeView(NamedTuple):
    rho: Callable
    c1: Callable
    c2: Callable
    g: Callable
    g_tilde: Callable | None
    lam: Callable
    gamma: Callable
    b: tuple
    r: Callable
    mu: Callable
    mu_prime: Callable
    rho_inv: Callable


def _fact(n: int) -> float:
    return float(math.factorial(n))


# -- certificate flavours -----------------------------------------------------

@dataclass(frozen=True)
class GeneralCertificate:
    V: ScalarField
    chain: tuple[ScalarField, ...]
    rho: Gauge
    c1: Gauge
    c2: Gauge
    g: Gauge
    lam: Gauge
    gamma: Gauge
    b: tuple[Gauge, ...]
    r: LevelMap | None = None          # None: automatic dwell map
    mu: SmoothMap = field(default_factory=SmoothMap.zero)
    g_tilde: Gauge | None = None
    phi: ScalarField | None = None
    gamma_route: str | None = None     # "max" or "min"; default min when g_tilde given
    premises: tuple[ScalarPremise, ...] = ()
    classical: bool = False
    name: str = "certificate"

    flavor = "general"

    def __post_init__(self):
        _check_common(self)

    @property
    def k(self) -> int:
        return len(self.chain) - 1

    @property
    def route_gamma(self) -> str:
        return _route_gamma(self)

    def dwell(self) -> LevelMap:
        return self.r if self.r is not None else auto_dwell(self)

    def view(self) -> GaugeView:
        r = self.dwell()
        return GaugeView(self.rho, self.c1, self.c2, self.g, self.g_tilde, self.lam, self.gamma,
                         tuple(self.b), r, self.mu, self.mu.derivative,
                         lambda y: gg.invert(self.rho, y))

    def validate(self, n: int, levels=None) -> None:
        """Sampled structural invariants; raises ConfigurationError."""
        s = np.geomspace(1e-6, 1e6, 241) if levels is None else np.asarray(levels, dtype=float)
        rho, c1, c2 = self.rho(s), self.c1(s), self.c2(s)
        if np.any(rho <= c1):
            raise ConfigurationError(f"rho(s) > c1(s) fails at s={float(s[np.argmax(rho <= c1)]):.6g}")
        if np.any(c1 < c2):
            raise ConfigurationError(f"c1(s) >= c2(s) fails at s={float(s[np.argmax(c1 < c2)]):.6g}")
        lam = self.lam(s)
        if np.any(lam >= s):
            raise ConfigurationError(f"lambda(s) < s fails at s={float(s[np.argmax(lam >= s)]):.6g}")
        kappa = c1 + np.asarray(self.mu(s))
        if np.any(np.diff(kappa) < -1e-12 * np.maximum(1.0, np.abs(kappa[1:]))):
            raise ConfigurationError("kappa = c1 + mu is not nondecreasing on the level grid")
        _check_chain_zero(self, n)


@dataclass(frozen=True)
class LinearRateCertificate:
    V: ScalarField
    chain: tuple[ScalarField, ...]
    rho: float
    c1: float
    c2: float
    g: float
    lam: float
    gamma: float
    b: tuple[float, ...]
    r: float | None = None
    mu: float = 0.0
    g_tilde: float | None = None
    phi: ScalarField | None = None
    K1: float | None = None
    K2: float | None = None
    gamma_route: str | None = None
    premises: tuple[ScalarPremise, ...] = ()
    name: str = "certificate"

    flavor = "linear"
    classical = False

    def __post_init__(self):
        _check_common(self)
        if (self.K1 is None) != (self.K2 is None):
            raise ConfigurationError("K1 and K2 must be given together")
        if self.K1 is not None and not (0 < self.K1 < self.K2):
            raise ConfigurationError("quadratic envelope constants need 0 < K1 < K2")
        if self.r is not None and not self.r > 0:
            raise ConfigurationError("r must be positive")

    @property
    def k(self) -> int:
        return len(self.chain) - 1

    @property
    def route_gamma(self) -> str:
        return _route_gamma(self)

    def dwell_constant(self) -> float:
        return float(self.r) if self.r is not None else float(auto_dwell(self))

    def dwell(self) -> LevelMap:
        return LevelMap.const(self.dwell_constant())

    def structural(self) -> list[tuple[str, bool, float]]:
        """The constant orderings as ``(name, holds, slack)`` triples."""
        out = [
            ("rho>c1", self.rho > self.c1, self.rho - self.c1),
            ("c1>=c2", self.c1 >= self.c2, self.c1 - self.c2),
            ("c2>0", self.c2 > 0, self.c2),
            ("g>0", self.g > 0, self.g),
            ("gamma>0", self.gamma > 0, self.gamma),
            ("0<lambda<1", 0 < self.lam < 1, min(self.lam, 1 - self.lam)),
            ("mu>=-c1", self.mu >= -self.c1, self.mu + self.c1),
            ("b0>=rho", self.b[0] >= self.rho, self.b[0] - self.rho),
            ("b>=0", min(self.b) >= 0, min(self.b)),
        ]
        if self.g_tilde is not None:
            out.append(("g_tilde>0", self.g_tilde > 0, self.g_tilde))
        return out

    def validate(self, n: int) -> None:
        for name, ok, _ in self.structural():
            if not ok:
                raise ConfigurationError(f"linear-rate constants violate {name}")
        _check_chain_zero(self, n)

    def view(self) -> GaugeView:
        rho, c1, c2, g, lam, gam, mu = (float(v) for v in
                                        (self.rho, self.c1, self.c2, self.g, self.lam, self.gamma, self.mu))
        r = self.dwell_constant()
        lin = lambda c: (lambda s: c * np.asarray(s, dtype=float))
        gt = None if self.g_tilde is None else lin(float(self.g_tilde))
        return GaugeView(lin(rho), lin(c1), lin(c2), lin(g), gt, lin(lam), lin(gam),
                         tuple(lin(float(bi)) for bi in self.b),
                         lambda s: np.full_like(np.asarray(s, dtype=float), r),
                         lin(mu), lambda s: np.full_like(np.asarray(s, dtype=float), mu),
                         lambda y: np.asarray(y, dtype=float) / rho)


Certificate = GeneralCertificate | LinearRateCertificate


def _check_common(cert) -> None:
    if len(cert.chain) < 1:
        raise ConfigurationError("the chain needs at least W0")
    if len(cert.b) != len(cert.chain):
        raise ConfigurationError(f"expected {len(cert.chain)} bounds b_i, got {len(cert.b)}")
    if cert.gamma_route not in (None, "max", "min"):
        raise ConfigurationError("gamma_route must be 'max' or 'min'")
    if cert.gamma_route == "min" and cert.g_tilde is None:
        raise ConfigurationError("the min-form gamma route needs g_tilde")


def _route_gamma(cert) -> str:
    if cert.gamma_route is not None:
        return cert.gamma_route
    return "min" if cert.g_tilde is not None else "max"


def _check_chain_zero(cert, n: int) -> None:
    z = np.zeros(n)
    for i, W in enumerate(cert.chain):
        if abs(W(z)) > 1e-12:
            raise ConfigurationError(f"W_{i}(0) = {W(z):.3e} is not zero")
    if abs(cert.V(z)) > 1e-12:
        raise ConfigurationError("V(0) is not zero")


# -- region classification ----------------------------------------------------

GOOD, TRANSITION, BAD = "Good", "Transition", "Bad"


class RegionLabel(NamedTuple):
    label: str
    W0: float
    c1: float
    c2: float


def classify_batch(cert, X, eps_region: float = 1e-12):
    """Vectorised labels (array of strings) and the evaluated quantities."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    view = cert.view() if cert.flavor == "linear" else None
    Vx = np.asarray(cert.V.fn(X), dtype=float)
    W0 = np.asarray(cert.chain[0].fn(X), dtype=float)
    c1f = view.c1 if view else cert.c1
    c2f = view.c2 if view else cert.c2
    c1v = np.asarray(c1f(Vx), dtype=float)
    c2v = np.asarray(c2f(Vx), dtype=float)
    band = eps_region * (1.0 + Vx)
    labels = np.where(W0 < c2v - band, GOOD, np.where(W0 > c1v + band, BAD, TRANSITION))
    return labels, W0, c1v, c2v


def classify(cert, x, eps_region: float = 1e-12) -> RegionLabel:
    """Good: W0 < c2(V); Transition: c2(V) <= W0 <= c1(V); Bad: W0 > c1(V).

    Ties within ``eps_region * (1 + V)`` resolve toward Transition.
    """
    labels, W0, c1v, c2v = classify_batch(cert, np.asarray(x, dtype=float)[None, :], eps_region)
    return RegionLabel(str(labels[0]), float(W0[0]), float(c1v[0]), float(c2v[0]))


# -- dwell bound ----------------------------------------------------------------

def _dwell_ratios(view, k, s):
    gl = np.asarray(view.g(view.lam(s)), dtype=float)
    b = [np.asarray(bi(s), dtype=float) for bi in view.b]
    c2l = np.asarray(view.c2(view.lam(s)), dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = [np.maximum(b[0] - c2l, 0.0) / gl]
        for i in range(1, k + 1):
            out.append(b[i] / gl)
    return out


def _dwell_formula(ratios, k):
    kk = k + 1
    terms = [(_fact(kk) * kk * ratios[0]) ** (1.0 / kk)]
    for i in range(1, k + 1):
        terms.append((_fact(kk) * kk * ratios[i] / _fact(i)) ** (1.0 / (kk - i)))
    return 1.0 + np.max(np.vstack(terms), axis=0)


def auto_dwell(cert, check_levels=None):
    """Dwell map from the explicit max/root formula.

    ``r(s) = 1 + max{((k+1)!(k+1)(b0 - c2(lam))/g(lam))^(1/(k+1)),
    max_i ((k+1)!(k+1) b_i/(i! g(lam)))^(1/(k+1-i))}``, ``r(0) = 1``.
    Negative radicands clamp to zero.  Returns a float for linear-rate
    certificates and a :class:`LevelMap` otherwise.
    """
    k = cert.k
    if cert.flavor == "linear":
        # the ratios are scale free for linear data
        gl = cert.g * cert.lam
        if gl <= 0:
            raise ConstructionError("dwell formula needs g * lambda > 0")
        ratios = [np.array([max(cert.b[0] - cert.c2 * cert.lam, 0.0) / gl])]
        ratios += [np.array([cert.b[i] / gl]) for i in range(1, k + 1)]
        return float(_dwell_formula(ratios, k)[0])
    view = GaugeView(cert.rho, cert.c1, cert.c2, cert.g, cert.g_tilde, cert.lam, cert.gamma,
                     tuple(cert.b), None, cert.mu, cert.mu.derivative, None)
    near = np.geomspace(1e-8, 1e-2, 61) if check_levels is None else np.asarray(check_levels)
    for i, ratio in enumerate(_dwell_ratios(view, k, near)):
        if not np.all(np.isfinite(ratio)):
            raise ConstructionError(f"dwell limsup for ratio {i} is not finite near 0")
        lo = ratio[:10]
        pos = lo > 0
        if np.count_nonzero(pos) >= 2:
            slope = np.polyfit(np.log(near[:10][pos]), np.log(lo[pos]), 1)[0]
            if slope < -0.02:
                raise ConstructionError(
                    f"dwell limsup for ratio {i} diverges near 0 (log-log slope {slope:.3f})")

    def fn(s):
        s = np.asarray(s, dtype=float)
        out = np.ones_like(s)
        pos = s > 0
        if np.any(pos):
            out[pos] = _dwell_formula(_dwell_ratios(view, k, s[pos]), k)
        return out

    return LevelMap(fn, name="auto_dwell")


# -- proof-defined quantities ----------------------------------------------------

def log_integral(view, lo: float, hi: float, condition: str = "3.9") -> float:
    """``int_lo^hi dtau / (rho(tau) - c1(tau))`` with a singularity guard."""
    if hi <= lo:
        return 0.0
    probe = np.geomspace(lo, hi, 257) if lo > 0 else np.linspace(lo, hi, 257)[1:]
    den = np.asarray(view.rho(probe), dtype=float) - np.asarray(view.c1(probe), dtype=float)
    if np.any(den <= SINGULAR_GUARD * np.maximum(np.asarray(view.rho(probe), dtype=float), 1e-300)):
        bad = float(probe[np.argmax(den <= SINGULAR_GUARD * np.asarray(view.rho(probe)))])
        raise QuadratureError(f"[{condition}] rho - c1 vanishes near tau={bad:.6g}")
    f = lambda t: 1.0 / (float(view.rho(np.asarray(t))) - float(view.c1(np.asarray(t))))
    # integrate in log(tau) for scale robustness
    if lo > 0:
        val, err = integrate.quad(lambda u: f(math.exp(u)) * math.exp(u), math.log(lo), math.log(hi),
                                  epsabs=0.0, epsrel=1e-10, limit=200)
    else:
        val, err = integrate.quad(f, lo, hi, epsabs=1e-12, epsrel=1e-10, limit=200)
    if not math.isfinite(val):
        raise QuadratureError(f"[{condition}] integral is not finite on [{lo:.6g}, {hi:.6g}]")
    return float(val)


def contraction_time_level(cert, s: float) -> float:
    """``p(s) = r(s) + int_{lambda(s)}^{gamma(s)} dtau/(rho - c1)``; ``p(0) = 1``."""
    s = float(s)
    if s == 0.0:
        return 1.0
    if cert.flavor == "linear":
        r = cert.dwell_constant()
        return r + max(math.log(cert.gamma) - math.log(cert.lam), 0.0) / (cert.rho - cert.c1)
    view = cert.view()
    lo, hi = float(view.lam(np.asarray(s))), float(view.gamma(np.asarray(s)))
    return float(view.r(np.asarray(s))) + log_integral(view, lo, hi)


def contraction_time(cert, x) -> float:
    """``T(x) = p(V(x))``."""
    return contraction_time_level(cert, float(cert.V(np.asarray(x, dtype=float))))


def time_map(cert) -> Callable[[np.ndarray], float]:
    """``x -> T(x)``; constant for linear-rate certificates."""
    if cert.flavor == "linear":
        T = contraction_time_level(cert, 1.0)
        return lambda x: T if float(cert.V(np.asarray(x, dtype=float))) > 0 else 1.0
    return lambda x: contraction_time(cert, x)


def q_map(cert) -> Gauge:
    """``q(s) = s - lambda(s)``."""
    if cert.flavor == "linear":
        return gg.linear(1.0 - cert.lam, tag="K")
    lam = cert.lam
    return gg.from_function(lambda s: np.asarray(s, dtype=float) - np.asarray(lam._eval(np.asarray(s, dtype=float))),
                            tag="K", name="s-lambda(s)")


def chain_bound(W_values, g_floor: float, t):
    """``sum_i t^i/i! W_i - g_floor t^(k+1)/(k+1)!``."""
    W = np.asarray(W_values, dtype=float)
    if g_floor < 0:
        raise ValueError("g_floor must be nonnegative")
    t_arr = np.asarray(t, dtype=float)
    if np.any(t_arr < 0):
        raise ValueError("t must be nonnegative")
    k = W.shape[0] - 1
    out = np.zeros_like(t_arr)
    for i in range(k + 1):
        out = out + t_arr**i / _fact(i) * W[i]
    out = out - g_floor * t_arr ** (k + 1) / _fact(k + 1)
    return float(out) if t_arr.ndim == 0 else out


def dwell_exit_bound(cert, s: float, scan: int = 1001) -> float:
    """Smallest ``t`` in ``[0, r(s)]`` where the chain bound at ``W_i = b_i(s)`` drops below ``c2(lambda(s))``."""
    view = cert.view()
    s_arr = np.asarray(float(s))
    W = [float(bi(s_arr)) for bi in view.b]
    lam_s = view.lam(s_arr)
    gfl = float(view.g(lam_s))
    thr = float(view.c2(lam_s))
    r = float(view.r(s_arr))
    if chain_bound(W, gfl, 0.0) < thr:
        return 0.0
    ts = np.linspace(0.0, r, scan)
    vals = chain_bound(W, gfl, ts)
    below = np.nonzero(vals < thr)[0]
    if below.size == 0:
        raise ConstraintError("3.7", f"chain bound stays above c2(lambda(s)) on [0, r(s)] at s={float(s):.6g}")
    j = int(below[0])
    lo, hi = ts[j - 1], ts[j]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi or hi - lo <= 1e-14 * max(1.0, hi):
            break
        if chain_bound(W, gfl, mid) < thr:
            hi = mid
        else:
            lo = mid
    return float(hi)


# -- conversions and completions ---------------------------------------------------

def _linear_coeff(fn, name, levels=np.geomspace(1e-3, 1e3, 25)) -> float:
    slope = getattr(fn, "slope", None)
    if slope is not None:
        return float(slope)
    vals = np.asarray(fn(levels), dtype=float) / levels
    if np.max(np.abs(vals - vals[0])) > 1e-10 * max(1.0, abs(vals[0])):
        raise ConfigurationError(f"{name} is not linear; a linear-rate certificate needs linear data")
    return float(vals[0])


def linear_rate_from(cert: GeneralCertificate, K1: float | None = None, K2: float | None = None,
                     name: str | None = None) -> LinearRateCertificate:
    """Re-express a certificate whose data are all linear as a linear-rate one."""
    levels = np.geomspace(1e-3, 1e3, 25)
    rvals = np.asarray(cert.dwell()(levels), dtype=float)
    if np.max(np.abs(rvals - rvals[0])) > 1e-10 * rvals[0]:
        raise ConfigurationError("the dwell map is not constant on positive levels")
    return LinearRateCertificate(
        V=cert.V, chain=cert.chain,
        rho=_linear_coeff(cert.rho, "rho"), c1=_linear_coeff(cert.c1, "c1"),
        c2=_linear_coeff(cert.c2, "c2"), g=_linear_coeff(cert.g, "g"),
        lam=_linear_coeff(cert.lam, "lambda"), gamma=_linear_coeff(cert.gamma, "gamma"),
        b=tuple(_linear_coeff(bi, f"b_{i}") for i, bi in enumerate(cert.b)),
        r=float(rvals[0]), mu=_linear_coeff(cert.mu, "mu"),
        g_tilde=None if cert.g_tilde is None else _linear_coeff(cert.g_tilde, "g_tilde"),
        phi=cert.phi, K1=K1, K2=K2, gamma_route=cert.gamma_route, premises=cert.premises,
        name=name or cert.name + "/linear")


def classical_completion(V: ScalarField, rho: Gauge, lam: Gauge | None = None,
                         g: Gauge | None = None, phi: ScalarField | None = None,
                         name: str = "classical") -> GeneralCertificate:
    """Complete a classical strict Lyapunov bound ``dV <= -rho(V)`` to full certificate data.

    ``k = 0``, ``W0 = 0``, ``c1 = (3/4) rho``, ``c2(s) = rho(s/2)/2``,
    ``gamma(s) = s``, ``r = 1``, ``b0 = 0``, ``mu = 0`` and by default
    ``lambda(s) = max{s/2, s - rho(s/2)/4}``.
    """
    c1 = gg.scale(rho, 0.75)
    c2 = gg.scale(gg.compose(rho, gg.linear(0.5)), 0.5)
    if lam is None:
        def lam_fn(s):
            s = np.asarray(s, dtype=float)
            return np.maximum(0.5 * s, s - 0.25 * np.asarray(rho._eval(0.5 * s)))
        lam = gg.from_function(lam_fn, tag="K", name="classical_lambda")
        if rho.slope is not None:
            lam = gg.linear(max(0.5, 1.0 - 0.125 * rho.slope), tag="K")
    return GeneralCertificate(
        V=V, chain=(zero_field(),), rho=rho, c1=c1, c2=c2, g=rho if g is None else g,
        lam=lam, gamma=gg.IDENTITY, b=(gg.ZERO,), r=LevelMap.const(1.0), mu=SmoothMap.zero(),
        phi=phi, classical=True, name=name)
