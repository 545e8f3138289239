"""Comparison functions: positive-definite, class K, class K-infinity and KL.

A gauge is a monotone scalar map on the nonnegative reals.  The closed family
here (power sums, monotone piecewise-linear tables, and compositions /
inverses / scalings of those) keeps inversion exact or cheaply bisectable.
Arbitrary callables can be wrapped with :class:`FunctionGauge` when a
construction needs a map outside the family (e.g. an integral envelope).

All gauges evaluate elementwise on numpy arrays.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import integrate

from .errors import ConstructionError, DomainError, PreconditionError, RangeError

TAGS = ("pd", "K", "Kinf")

_INV_TOL = 1e-10


def _as_array(s):
    arr = np.asarray(s, dtype=float)
    if np.any(arr < 0) or np.any(np.isnan(arr)):
        raise DomainError(f"gauge argument must be a nonnegative real, got {s!r}")
    return arr


def _unwrap(value, like):
    if np.ndim(like) == 0:
        return float(value)
    return value


class Gauge:
    """Base class.  Subclasses implement ``_eval`` on nonnegative arrays."""

    tag: str = "K"

    def __call__(self, s):
        arr = _as_array(s)
        return _unwrap(self._eval(arr), s)

    def _eval(self, s: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    # Closed-form inverse, or None when bisection is required.
    def _inverse(self, y: np.ndarray):
        return None

    @property
    def slope(self) -> float | None:
        """Coefficient ``c`` when the gauge is exactly ``s -> c*s``."""
        return None

    def inverse(self, y):
        return invert(self, y)


@dataclass(frozen=True)
class PowerSum(Gauge):
    """Sum of terms ``coeff * s**exp`` with nonnegative coefficients."""

    terms: tuple[tuple[float, float], ...]
    tag: str = "Kinf"

    def __post_init__(self):
        if self.tag not in TAGS:
            raise ValueError(f"unknown class tag {self.tag!r}")
        if not self.terms:
            raise ValueError("PowerSum needs at least one term")
        for c, e in self.terms:
            if c < 0 or e < 0:
                raise ValueError("PowerSum terms need nonnegative coefficient and exponent")

    def _eval(self, s):
        out = np.zeros_like(s, dtype=float)
        for c, e in self.terms:
            out = out + c * np.power(s, e)
        return out

    def _inverse(self, y):
        if len(self.terms) == 1:
            c, e = self.terms[0]
            if c > 0 and e > 0:
                return np.power(y / c, 1.0 / e)
        return None

    @property
    def slope(self):
        if len(self.terms) == 1 and self.terms[0][1] == 1.0:
            return float(self.terms[0][0])
        return None


@dataclass(frozen=True)
class PiecewiseLinear(Gauge):
    """Monotone piecewise-linear table; extrapolates with the last slope."""

    points: tuple[tuple[float, float], ...]
    tag: str = "Kinf"

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[1] != 2 or len(pts) < 2:
            raise ValueError("piecewise-linear table needs at least two (s, value) pairs")
        if pts[0, 0] != 0.0:
            raise ValueError("table must start at s = 0")
        if np.any(np.diff(pts[:, 0]) <= 0):
            raise ValueError("table abscissae must be strictly increasing")
        if np.any(np.diff(pts[:, 1]) < 0):
            raise ValueError("table values must be nondecreasing")

    @property
    def _xy(self):
        pts = np.asarray(self.points, dtype=float)
        return pts[:, 0], pts[:, 1]

    def _eval(self, s):
        xs, ys = self._xy
        out = np.interp(s, xs, ys)
        slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        beyond = s > xs[-1]
        return np.where(beyond, ys[-1] + slope * (s - xs[-1]), out)

    def _inverse(self, y):
        xs, ys = self._xy
        if np.any(np.diff(ys) <= 0):
            return None
        out = np.interp(y, ys, xs)
        slope = (ys[-1] - ys[-2]) / (xs[-1] - xs[-2])
        return np.where(y > ys[-1], xs[-1] + (y - ys[-1]) / slope, out)


@dataclass(frozen=True)
class Scaled(Gauge):
    base: Gauge
    factor: float
    tag: str = "Kinf"

    def _eval(self, s):
        return self.factor * self.base._eval(s)

    def _inverse(self, y):
        return _inv_array(self.base, y / self.factor)

    @property
    def slope(self):
        b = self.base.slope
        return None if b is None else self.factor * b


@dataclass(frozen=True)
class Composed(Gauge):
    """``outer(inner(s))``."""

    outer: Gauge
    inner: Gauge
    tag: str = "Kinf"

    def _eval(self, s):
        return self.outer._eval(np.maximum(self.inner._eval(s), 0.0))

    def _inverse(self, y):
        return _inv_array(self.inner, _inv_array(self.outer, y))

    @property
    def slope(self):
        a, b = self.outer.slope, self.inner.slope
        return None if a is None or b is None else a * b


@dataclass(frozen=True)
class Inverted(Gauge):
    base: Gauge
    tag: str = "Kinf"

    def _eval(self, s):
        return _inv_array(self.base, s)

    def _inverse(self, y):
        return self.base._eval(y)

    @property
    def slope(self):
        b = self.base.slope
        return None if b is None else 1.0 / b


@dataclass(frozen=True)
class FunctionGauge(Gauge):
    """Wraps a vectorised callable; ``inverse_fn`` is optional."""

    fn: Callable[[np.ndarray], np.ndarray]
    tag: str = "K"
    name: str = "custom"
    inverse_fn: Callable | None = field(default=None, compare=False)

    def _eval(self, s):
        return np.asarray(self.fn(s), dtype=float) * np.ones_like(s)

    def _inverse(self, y):
        if self.inverse_fn is None:
            return None
        return np.asarray(self.inverse_fn(y), dtype=float)


# -- constructors ----------------------------------------------------------

def linear(coeff: float, tag: str = "Kinf") -> PowerSum:
    return PowerSum(((float(coeff), 1.0),), tag=tag)


def power(coeff: float, exp: float, tag: str = "Kinf") -> PowerSum:
    return PowerSum(((float(coeff), float(exp)),), tag=tag)


def power_sum(terms: Sequence[tuple[float, float]], tag: str = "Kinf") -> PowerSum:
    merged: dict[float, float] = {}
    for c, e in terms:
        merged[float(e)] = merged.get(float(e), 0.0) + float(c)
    return PowerSum(tuple((c, e) for e, c in sorted(merged.items()) if c != 0.0) or ((0.0, 1.0),), tag=tag)


def pwl(points: Sequence[tuple[float, float]], tag: str = "Kinf") -> PiecewiseLinear:
    return PiecewiseLinear(tuple((float(a), float(b)) for a, b in points), tag=tag)


def from_function(fn, tag: str = "K", name: str = "custom", inverse_fn=None) -> FunctionGauge:
    return FunctionGauge(fn, tag=tag, name=name, inverse_fn=inverse_fn)


def scale(g: Gauge, factor: float) -> Gauge:
    if isinstance(g, PowerSum):
        return PowerSum(tuple((factor * c, e) for c, e in g.terms), tag=g.tag)
    return Scaled(g, float(factor), tag=g.tag)


def compose(outer: Gauge, inner: Gauge) -> Gauge:
    tag = "Kinf" if outer.tag == inner.tag == "Kinf" else "K"
    a, b = outer.slope, inner.slope
    if a is not None and b is not None:
        return linear(a * b, tag=tag)
    if isinstance(outer, PowerSum) and inner.slope is not None:
        k = inner.slope
        return PowerSum(tuple((c * k**e, e) for c, e in outer.terms), tag=tag)
    return Composed(outer, inner, tag=tag)


def inverse_gauge(g: Gauge) -> Gauge:
    if g.tag not in ("K", "Kinf"):
        raise DomainError("only class K gauges are invertible")
    if g.slope is not None:
        return linear(1.0 / g.slope, tag=g.tag)
    if isinstance(g, PowerSum) and len(g.terms) == 1:
        c, e = g.terms[0]
        return power(c ** (-1.0 / e), 1.0 / e, tag=g.tag)
    return Inverted(g, tag=g.tag)


ZERO = FunctionGauge(lambda s: np.zeros_like(s), tag="pd", name="zero")
IDENTITY = linear(1.0)


# -- core operations ---------------------------------------------------------

def evaluate(g: Gauge, s):
    """Return ``g(s)``; negative arguments raise :class:`DomainError`."""
    return g(s)


def _vector_inverse(g: Gauge, y: np.ndarray) -> np.ndarray:
    """Bisection inverse for an array of targets.

    A bracket ``[lo, 2 lo]`` is located by doubling/halving, then 64 bisection
    steps give full relative precision.
    """
    y = np.asarray(y, dtype=float)
    flat = y.reshape(-1)
    out = np.zeros_like(flat)
    pos = flat > 0
    if not np.any(pos):
        return out.reshape(y.shape)
    t = flat[pos]
    ev = lambda s: np.asarray(g._eval(s), dtype=float)
    hi = np.maximum(1.0, t)
    for _ in range(2100):
        low = ev(hi) < t
        if not np.any(low):
            break
        nxt = np.where(low, hi * 2.0, hi)
        stuck = low & (~np.isfinite(nxt) | (ev(nxt) <= ev(hi)))
        if np.any(stuck):
            bad = float(t[np.argmax(stuck)])
            raise RangeError(f"value {bad!r} is above the range of the gauge")
        hi = nxt
    else:
        raise RangeError("value is above the range of the gauge")
    lo = hi * 0.5
    for _ in range(2100):
        high = (ev(lo) >= t) & (lo > 0)
        if not np.any(high):
            break
        hi = np.where(high, lo, hi)
        lo = np.where(high, lo * 0.5, lo)
        lo = np.where(lo < 1e-320, 0.0, lo)
    for _ in range(64):
        mid = 0.5 * (lo + hi)
        up = ev(mid) >= t
        hi = np.where(up, mid, hi)
        lo = np.where(up, lo, mid)
    out[pos] = hi
    return out.reshape(y.shape)


def _inv_array(g: Gauge, y):
    y = np.asarray(y, dtype=float)
    closed = g._inverse(y)
    if closed is not None:
        return np.asarray(closed, dtype=float)
    return _vector_inverse(g, y)


def invert(g: Gauge, y):
    """Return ``s`` with ``g(s) = y`` for a class K / K-infinity gauge."""
    if g.tag not in ("K", "Kinf"):
        raise DomainError("invert requires a class K or K-infinity gauge")
    arr = _as_array(y)
    out = _inv_array(g, arr)
    resid = np.abs(g._eval(out) - arr)
    if np.any(resid > _INV_TOL * np.maximum(1.0, arr) * 1e3):
        raise RangeError(f"value {y!r} could not be inverted (residual {float(np.max(resid)):.3e})")
    return _unwrap(out, y)


def iterate(g: Gauge, s, i: int):
    """Apply ``g`` to ``s`` ``i`` times; ``i = 0`` returns ``s``."""
    if i < 0:
        raise DomainError("iteration count must be nonnegative")
    out = _as_array(s)
    for _ in range(int(i)):
        out = np.maximum(g._eval(out), 0.0)
    return _unwrap(out, s)


# -- KL bounds -------------------------------------------------------------

@dataclass(frozen=True)
class KLBound:
    """``sigma(s, i)``: nondecreasing in ``s``, nonincreasing to zero in ``i``."""

    rule: Callable[[np.ndarray, np.ndarray], np.ndarray]
    provenance: str = "user-supplied"

    def __call__(self, s, i):
        s_arr = _as_array(s)
        i_arr = np.asarray(i, dtype=float)
        if np.any(i_arr < 0):
            raise DomainError("KL index must be nonnegative")
        out = np.asarray(self.rule(*np.broadcast_arrays(s_arr, i_arr)), dtype=float)
        if np.ndim(s) == 0 and np.ndim(i) == 0:
            return float(out)
        return out

    def validate(self, levels=None, horizon: int = 60) -> None:
        """Sampled check of the KL properties; raises ConstructionError."""
        levels = np.geomspace(1e-6, 1e6, 97) if levels is None else np.asarray(levels)
        idx = np.arange(horizon + 1)
        table = np.asarray(self(levels[:, None], idx[None, :]))
        if np.any(np.diff(table, axis=0) < -1e-12 * np.abs(table[1:])):
            raise ConstructionError("KL bound is not nondecreasing in s")
        if np.any(np.diff(table, axis=1) > 1e-12 * np.abs(table[:, :-1])):
            raise ConstructionError("KL bound is not nonincreasing in i")
        if np.any(table[:, -1] > table[:, 0] * 0.999 + 1e-300):
            raise ConstructionError("KL bound does not decay")

    def continuous(self) -> "KLBound":
        """Extend to real ``t`` by geometric interpolation between indices."""
        def rule(s, t):
            lo = np.floor(t)
            frac = t - lo
            a = np.asarray(self.rule(s, lo), dtype=float)
            b = np.asarray(self.rule(s, lo + 1), dtype=float)
            with np.errstate(divide="ignore", invalid="ignore"):
                out = np.where((a > 0) & (b > 0), a * np.power(b / np.where(a > 0, a, 1.0), frac), a + frac * (b - a))
            return out
        return KLBound(rule, provenance=self.provenance + "+interpolated")


class _ContractionEnvelope:
    """Monotone envelope ``Ĝ(s) = sup_{u<=s} (u - q(u))`` on an adaptive grid."""

    def __init__(self, q: Gauge, lo=1e-30, hi=1e12, per_decade=64, refine=8):
        self.q = q
        decades = math.log10(hi / lo)
        nodes = np.geomspace(lo, hi, int(decades * per_decade) + 1)
        for _ in range(refine):
            g = self.G(nodes)
            # a drop between neighbours means a local peak inside the cell
            drop = np.nonzero(g[1:] < g[:-1])[0]
            if drop.size == 0:
                break
            mids = np.sqrt(nodes[drop] * nodes[drop + 1])
            nodes = np.union1d(nodes, mids)
        self.nodes = nodes
        g = self.G(nodes)
        qv = np.asarray(q._eval(nodes), dtype=float)
        if np.any(qv < 0):
            bad = float(nodes[np.argmax(qv < 0)])
            raise PreconditionError(f"q is negative at s={bad:.6g}; q must be positive definite")
        over = qv > nodes * (1 + 1e-12)
        if np.any(over):
            bad = float(nodes[np.argmax(over)])
            raise ConstructionError(
                f"q(s) > s at s={bad:.6g}: admissible sequences would go negative; clip q to min(q(s), s)")
        # tabulated sup, rounded up by one ulp
        self.table = np.nextafter(np.maximum.accumulate(np.maximum(g, 0.0)), np.inf)

    def G(self, s):
        return s - np.asarray(self.q._eval(s), dtype=float)

    _FRAC = np.concatenate([[0.0], np.geomspace(1e-9, 1.0, 256)])

    def _direct(self, s):
        u = np.asarray(s, dtype=float)[..., None] * self._FRAC
        return np.max(self.G(u), axis=-1)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        j = np.searchsorted(self.nodes, s, side="right") - 1
        env = np.where(j >= 0, self.table[np.clip(j, 0, None)], 0.0)
        out = np.maximum(np.maximum(env, self.G(s)), 0.0)
        outside = (s > self.nodes[-1]) | ((s > 0) & (s < self.nodes[0]))
        if np.any(outside):
            out = np.array(out, dtype=float)
            out[outside] = np.maximum(out[outside], self._direct(s[outside]))
        return np.minimum(out, s)


def kl_from_contraction(q: Gauge) -> KLBound:
    """KL bound for sequences with ``V[i+1] <= V[i] - q(V[i])``.

    ``sigma(s, i) = Ĝ^i(s) + s * 2**-i`` where ``Ĝ`` is the running supremum
    of ``s - q(s)``.  The geometric guard keeps ``sigma(., i)`` strictly
    increasing when the envelope plateaus.
    """
    env = _ContractionEnvelope(q)

    def rule(s, i):
        s = np.asarray(s, dtype=float)
        i = np.asarray(i, dtype=float)
        steps = np.floor(i).astype(int)
        cur = s.copy()
        for k in range(int(steps.max(initial=0))):
            active = steps > k
            if not np.any(active):
                break
            cur = np.where(active, env(cur), cur)
        return cur + s * np.power(2.0, -i)

    bound = KLBound(rule, provenance="constructed-from-q")
    object.__setattr__(bound, "envelope", env)
    return bound


def kinf_envelope(p: Callable[[np.ndarray], np.ndarray], check_range=(1e-6, 1e6)) -> FunctionGauge:
    """Class K-infinity majorant ``ã(s) = s + (1/s) * integral_s^{2s} p``."""
    probe = np.geomspace(*check_range, 1201)
    vals = np.asarray(p(probe), dtype=float)
    if np.any(np.diff(vals) < -1e-12 * np.maximum(1.0, np.abs(vals[1:]))):
        k = int(np.argmax(np.diff(vals) < 0))
        raise PreconditionError(f"p is not nondecreasing near s={probe[k]:.6g}")

    def one(s: float) -> float:
        if s == 0.0:
            return 0.0
        nodes = np.linspace(s, 2 * s, 17)
        pv = np.asarray(p(nodes), dtype=float)
        if np.any(np.diff(pv) < -1e-12 * np.maximum(1.0, np.abs(pv[1:]))):
            raise PreconditionError(f"p is not nondecreasing on [{s:.6g}, {2 * s:.6g}]")
        val, _ = integrate.quad(lambda u: float(np.asarray(p(np.asarray(u)))), s, 2 * s,
                                epsabs=0.0, epsrel=1e-12, limit=200)
        return s + val / s

    def fn(s):
        s = np.asarray(s, dtype=float)
        return np.vectorize(one, otypes=[float])(s) if s.ndim else np.asarray(one(float(s)))

    return FunctionGauge(fn, tag="Kinf", name="kinf_envelope")


@dataclass(frozen=True)
class SmoothMap:
    """C^1 scalar map with ``mu(0) = 0``; derivative analytic or central-difference."""

    fn: Callable[[np.ndarray], np.ndarray]
    deriv: Callable[[np.ndarray], np.ndarray] | None = None
    name: str = "custom"

    def __call__(self, s):
        return _unwrap(np.asarray(self.fn(np.asarray(s, dtype=float)), dtype=float), s)

    def derivative(self, s):
        s_arr = np.asarray(s, dtype=float)
        if self.deriv is not None:
            return _unwrap(np.asarray(self.deriv(s_arr), dtype=float) * np.ones_like(s_arr), s)
        h = 1e-6 * np.maximum(1.0, np.abs(s_arr))
        lo = np.maximum(s_arr - h, 0.0)
        d = (np.asarray(self.fn(s_arr + h)) - np.asarray(self.fn(lo))) / (s_arr + h - lo)
        return _unwrap(d, s)

    @classmethod
    def linear(cls, mu: float) -> "SmoothMap":
        mu = float(mu)
        return cls(lambda s: mu * s, lambda s: np.full_like(s, mu), name=f"linear({mu!r})")

    @classmethod
    def zero(cls) -> "SmoothMap":
        return cls.linear(0.0)
